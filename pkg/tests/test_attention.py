import numpy as np
import pytest

from entsum.attention import (
    AbsolutePositionalEncoding,
    AttentionHeadParams,
    CapacityError,
    RelativePositionalEncoding,
    SegmentMemory,
    VanillaHeadParams,
    concat_memory,
    multi_head_attention,
    sinusoid_rows,
    update_memory,
    vanilla_scores,
    xl_scores,
)
from entsum.tensor import MaskError, Rng, Tensor, parameter, sum_all


def zeroed_abs_encoding(l_max, d_model):
    enc = AbsolutePositionalEncoding(l_max, d_model)
    enc.table.data[:] = 0.0
    return enc


def random_xl_head(d_model, d_head, rng, with_u_v=True):
    head = AttentionHeadParams.create(d_model, d_head, rng)
    if with_u_v:
        head.u.data[:] = rng.normal((d_head,))
        head.v.data[:] = rng.normal((d_head,))
    return head


class TestSinusoid:
    def test_absolute_table_definition(self):
        enc = AbsolutePositionalEncoding(8, 6)
        i, table = 5, enc.table.data
        for k in range(3):
            angle = i / 10000 ** (2 * k / 6)
            assert abs(table[i, 2 * k] - np.sin(angle)) < 1e-15
            assert abs(table[i, 2 * k + 1] - np.cos(angle)) < 1e-15

    def test_relative_rows_indexed_by_offset(self):
        enc = RelativePositionalEncoding(5, 4)
        assert enc.table.data.shape == (9, 4)
        # row for offset -3 holds the sinusoid evaluated at -3
        assert np.allclose(enc.table.data[enc.row_indices(np.array([-3]))[0]], sinusoid_rows([-3], 4)[0])

    def test_relative_offset_capacity(self):
        enc = RelativePositionalEncoding(4, 4)
        with pytest.raises(CapacityError):
            enc.row_indices(np.array([4]))

    def test_encodings_not_trainable(self):
        assert not AbsolutePositionalEncoding(4, 4).table.requires_grad
        assert not RelativePositionalEncoding(4, 4).table.requires_grad


class TestVanillaScores:
    def test_zero_positions_leave_content_term(self):
        rng = Rng(0)
        head = VanillaHeadParams.create(4, 3, rng)
        x = Tensor(rng.normal((3, 4)))
        got = vanilla_scores(x, zeroed_abs_encoding(8, 4), head).data
        q = x.data @ head.w_q.data.T
        k = x.data @ head.w_k.data.T
        assert np.allclose(got, q @ k.T, atol=1e-12)

    def test_all_zero_inputs_zero_scores(self):
        head = VanillaHeadParams.create(4, 2, Rng(1))
        x = Tensor(np.zeros((3, 4)))
        got = vanilla_scores(x, zeroed_abs_encoding(8, 4), head).data
        assert np.array_equal(got, np.zeros((3, 3)))

    def test_matches_four_term_oracle(self):
        rng = Rng(2)
        d = 2
        head = VanillaHeadParams.create(d, d, rng)
        enc = AbsolutePositionalEncoding(6, d)
        x = Tensor(rng.normal((2, d)))
        got = vanilla_scores(x, enc, head).data
        wq, wk, u_tab = head.w_q.data, head.w_k.data, enc.table.data
        expect = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                e_i, e_j, u_i, u_j = x.data[i], x.data[j], u_tab[i], u_tab[j]
                expect[i, j] = (
                    (wq @ e_i) @ (wk @ e_j)
                    + (wq @ e_i) @ (wk @ u_j)
                    + (wq @ u_i) @ (wk @ e_j)
                    + (wq @ u_i) @ (wk @ u_j)
                )
        assert np.max(np.abs(got - expect)) <= 1e-12

    def test_position_past_capacity_raises(self):
        head = VanillaHeadParams.create(4, 2, Rng(3))
        x = Tensor(np.zeros((5, 4)))
        with pytest.raises(CapacityError):
            vanilla_scores(x, AbsolutePositionalEncoding(4, 4), head)


class TestXlScores:
    def test_positional_terms_vanish(self):
        rng = Rng(4)
        head = AttentionHeadParams.create(4, 3, rng)  # u = v = 0 at creation
        head.w_kr.data[:] = 0.0
        h = Tensor(rng.normal((3, 4)))
        got = xl_scores(h, h, RelativePositionalEncoding(8, 4), head).data
        q = h.data @ head.w_q.data.T
        k = h.data @ head.w_ke.data.T
        assert np.allclose(got, q @ k.T, atol=1e-12)

    def test_zero_queries_give_constant_rows(self):
        rng = Rng(5)
        head = AttentionHeadParams.create(4, 3, rng)
        head.u.data[:] = rng.normal((3,))
        h_kv = Tensor(rng.normal((4, 4)))
        got = xl_scores(Tensor(np.zeros((2, 4))), h_kv, RelativePositionalEncoding(8, 4), head).data
        expect = (h_kv.data @ head.w_ke.data.T) @ head.u.data
        assert np.allclose(got[0], expect, atol=1e-12)
        assert np.allclose(got[1], expect, atol=1e-12)

    def test_matches_four_term_oracle_with_memory(self):
        rng = Rng(6)
        d, n, m = 2, 2, 1
        head = random_xl_head(d, d, rng)
        enc = RelativePositionalEncoding(6, d)
        h_q = Tensor(rng.normal((n, d)))
        h_kv = Tensor(rng.normal((m + n, d)))
        got = xl_scores(h_q, h_kv, enc, head).data
        expect = np.zeros((n, m + n))
        for i in range(n):
            for j in range(m + n):
                off = (i + m) - j
                r = sinusoid_rows([off], d)[0]
                q_i = head.w_q.data @ h_q.data[i]
                k_j = head.w_ke.data @ h_kv.data[j]
                wr = head.w_kr.data @ r
                expect[i, j] = q_i @ k_j + q_i @ wr + head.u.data @ k_j + head.v.data @ wr
        assert np.max(np.abs(got - expect)) <= 1e-12

    def test_shift_invariance_exact(self):
        rng = Rng(7)
        head = random_xl_head(6, 3, rng)
        enc = RelativePositionalEncoding(32, 6)
        h_q, h_kv = Tensor(rng.normal((3, 6))), Tensor(rng.normal((5, 6)))
        q_pos, k_pos = np.array([2, 3, 4]), np.array([0, 1, 2, 3, 4])
        base = xl_scores(h_q, h_kv, enc, head, q_pos=q_pos, k_pos=k_pos).data
        shifted = xl_scores(h_q, h_kv, enc, head, q_pos=q_pos + 11, k_pos=k_pos + 11).data
        assert np.array_equal(base, shifted)

    def test_reduction_to_vanilla(self):
        # u = v = 0, W_kR = 0, W_kE = W_k, U = 0: identical scores, m = 0.
        for seed in range(10):
            rng = Rng(seed)
            d, n = 6, 4
            xl_head = AttentionHeadParams.create(d, 3, rng)
            xl_head.w_kr.data[:] = 0.0
            van_head = VanillaHeadParams.create(d, 3, rng)
            van_head.w_q.data[:] = xl_head.w_q.data
            van_head.w_k.data[:] = xl_head.w_ke.data
            h = Tensor(rng.normal((n, d)))
            a_xl = xl_scores(h, h, RelativePositionalEncoding(8, d), xl_head).data
            a_van = vanilla_scores(h, zeroed_abs_encoding(8, d), van_head).data
            assert np.max(np.abs(a_xl - a_van)) <= 1e-12

    def test_offset_capacity_error(self):
        rng = Rng(8)
        head = AttentionHeadParams.create(4, 2, rng)
        h = Tensor(rng.normal((6, 4)))
        with pytest.raises(CapacityError):
            xl_scores(h, h, RelativePositionalEncoding(4, 4), head)


class TestMultiHead:
    def test_single_unmasked_key_returns_its_value(self):
        d = 3
        rng = Rng(9)
        head = random_xl_head(d, d, rng)
        head.w_v = Tensor(np.eye(d), requires_grad=True)
        w_o = Tensor(np.eye(d), requires_grad=True)
        kv = Tensor(rng.normal((4, d)))
        q = Tensor(rng.normal((2, d)))
        mask = np.zeros((2, 4), dtype=bool)
        mask[0, 2] = True
        mask[1, 1] = True
        out = multi_head_attention(q, kv, mask, [head], w_o, "xl", RelativePositionalEncoding(8, d)).data
        assert np.allclose(out[0], kv.data[2], atol=1e-12)
        assert np.allclose(out[1], kv.data[1], atol=1e-12)

    def test_zero_values_zero_output(self):
        d = 4
        rng = Rng(10)
        head = random_xl_head(d, d, rng)
        head.w_v.data[:] = 0.0
        w_o = Tensor(rng.normal((d, d)), requires_grad=True)
        x = Tensor(rng.normal((3, d)))
        out = multi_head_attention(x, x, None, [head], w_o, "xl", RelativePositionalEncoding(8, d)).data
        assert np.array_equal(out, np.zeros((3, d)))

    def test_two_head_scalar_oracle(self):
        rng = Rng(11)
        d, d_head, n = 4, 2, 2
        heads = [random_xl_head(d, d_head, rng) for _ in range(2)]
        w_o = Tensor(rng.normal((d, d)), requires_grad=True)
        enc = RelativePositionalEncoding(8, d)
        x = Tensor(rng.normal((n, d)))
        got = multi_head_attention(x, x, None, heads, w_o, "xl", enc).data

        outs = []
        for head in heads:
            scores = xl_scores(x, x, enc, head).data / np.sqrt(d_head)
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            p = e / e.sum(axis=1, keepdims=True)
            outs.append(p @ (x.data @ head.w_v.data.T))
        expect = np.concatenate(outs, axis=1) @ w_o.data.T
        assert np.max(np.abs(got - expect)) <= 1e-12

    def test_masked_key_content_is_irrelevant(self):
        rng = Rng(12)
        d = 4
        head = random_xl_head(d, d, rng)
        w_o = Tensor(rng.normal((d, d)), requires_grad=True)
        enc = RelativePositionalEncoding(8, d)
        kv = rng.normal((4, d))
        mask = np.ones((2, 4), dtype=bool)
        mask[:, 3] = False
        q = Tensor(rng.normal((2, d)))
        out1 = multi_head_attention(q, Tensor(kv), mask, [head], w_o, "xl", enc).data
        kv2 = kv.copy()
        kv2[3] = 1e6
        out2 = multi_head_attention(q, Tensor(kv2), mask, [head], w_o, "xl", enc).data
        assert np.array_equal(out1, out2)

    def test_fully_masked_row_raises(self):
        rng = Rng(13)
        d = 4
        head = random_xl_head(d, d, rng)
        w_o = Tensor(np.eye(d))
        x = Tensor(rng.normal((2, d)))
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(MaskError):
            multi_head_attention(x, x, mask, [head], w_o, "xl", RelativePositionalEncoding(8, d))


class TestMemory:
    def test_empty_memory_passthrough(self):
        h = Tensor(np.ones((3, 4)))
        assert concat_memory(SegmentMemory.empty(4), h) is h

    def test_memory_rows_get_zero_gradient(self):
        mem = SegmentMemory(np.ones((2, 3)))
        h = parameter(np.ones((2, 3)))
        joined = concat_memory(mem, h)
        sum_all(joined * joined).backward()
        # current rows received gradient; memory is outside the tape entirely
        assert np.array_equal(h.grad, 2.0 * np.ones((2, 3)))

    def test_concatenation_order(self):
        mem = SegmentMemory(np.array([[0.0], [1.0]]))
        h = Tensor(np.array([[2.0], [3.0], [4.0]]))
        joined = concat_memory(mem, h)
        assert np.array_equal(joined.data[:, 0], [0.0, 1.0, 2.0, 3.0, 4.0])

    def test_update_capacity_zero(self):
        out = update_memory(SegmentMemory(np.ones((3, 2))), np.ones((2, 2)), 0)
        assert out.rows == 0

    def test_update_from_empty(self):
        new = np.arange(8.0).reshape(4, 2)
        out = update_memory(SegmentMemory.empty(2), new, 2)
        assert np.array_equal(out.data, new[-2:])

    def test_update_concat_then_tail(self):
        old = SegmentMemory(np.array([[0.0], [1.0], [2.0]]))
        new = np.array([[3.0], [4.0]])
        out = update_memory(old, new, 4)
        assert np.array_equal(out.data[:, 0], [1.0, 2.0, 3.0, 4.0])
