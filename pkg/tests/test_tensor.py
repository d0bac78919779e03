import math

import numpy as np
import pytest

from entsum import tensor as T
from entsum.tensor import (
    MaskError,
    Rng,
    ShapeError,
    Tensor,
    cross_entropy,
    finite_diff_check,
    gather_rows,
    layer_norm,
    matmul,
    parameter,
    relu,
    softmax_rows,
    sum_all,
)


def naive_matmul(a, b):
    """Triple-loop oracle with ascending inner-index summation."""
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for kk in range(k):
                s += a[i, kk] * b[kk, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), a)
        assert np.array_equal(out.data, a.data)

    def test_zero_annihilates(self):
        a = Tensor(np.zeros((3, 4)))
        b = Tensor(np.arange(20.0).reshape(4, 5))
        assert np.array_equal(matmul(a, b).data, np.zeros((3, 5)))

    def test_two_by_two(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert np.array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_against_triple_loop(self, seed):
        rng = Rng(seed)
        for _ in range(10):
            m, k, n = rng.integers(1, 9), rng.integers(1, 80), rng.integers(1, 9)
            a = rng.normal((m, k), std=3.0)
            b = rng.normal((k, n), std=3.0)
            got = matmul(Tensor(a), Tensor(b)).data
            assert np.array_equal(got, naive_matmul(a, b))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestSoftmaxRows:
    def test_equal_values_uniform(self):
        out = softmax_rows(Tensor(np.full((3, 5), 2.5)))
        assert np.allclose(out.data, 0.2, atol=1e-15)

    def test_analytic_row(self):
        out = softmax_rows(Tensor([[0.0, math.log(2.0)]]))
        assert np.allclose(out.data, [[1.0 / 3.0, 2.0 / 3.0]], atol=1e-15)

    def test_masked_matches_subvector_softmax(self):
        x = Tensor([[5.0, 1.0, 3.0]])
        mask = np.array([[True, False, True]])
        out = softmax_rows(x, mask).data
        sub = np.exp([5.0, 3.0] - np.max([5.0, 3.0]))
        sub = sub / sub.sum()
        assert out[0, 1] == 0.0
        assert abs(out[0, 0] - sub[0]) < 1e-12
        assert abs(out[0, 2] - sub[1]) < 1e-12

    def test_rows_sum_to_one_and_shift_invariant(self):
        rng = Rng(7)
        x = rng.normal((6, 9), std=4.0)
        p = softmax_rows(Tensor(x)).data
        assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
        shifted = softmax_rows(Tensor(x + 13.75)).data
        assert np.max(np.abs(p - shifted)) <= 1e-12

    def test_fully_masked_row_raises(self):
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(MaskError, match="row 1"):
            softmax_rows(Tensor(np.zeros((2, 2))), mask)

    def test_masked_entries_get_zero_grad(self):
        x = parameter(np.array([[1.0, -2.0, 0.5]]))
        mask = np.array([[True, False, True]])
        sum_all(softmax_rows(x, mask)).backward()
        assert x.grad[0, 1] == 0.0


class TestLayerNorm:
    def test_constant_input_zeros(self):
        d = 5
        out = layer_norm(Tensor(np.full(d, 3.3)), Tensor(np.ones(d)), Tensor(np.zeros(d)))
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_already_standardized(self):
        out = layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-15)
        assert np.allclose(out.data, [-1.0, 1.0], atol=1e-6)

    def test_hand_evaluated(self):
        # mean 2, population variance 2/3
        out = layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0)
        r = math.sqrt(1.5)
        assert np.allclose(out.data, [-r, 0.0, r], atol=1e-12)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = parameter(np.array([1.0, -2.0, 3.0]))
        sum_all(w).backward()
        assert np.array_equal(w.grad, [1.0, 1.0, 1.0])

    def test_square_sum_gradient(self):
        w = parameter(np.array([2.0, -3.0]))
        sum_all(w * w).backward()
        assert np.array_equal(w.grad, [4.0, -6.0])

    def test_grad_accumulates_across_uses(self):
        w = parameter(np.array([1.5]))
        loss = sum_all(w + w)
        loss.backward()
        assert np.array_equal(w.grad, [2.0])

    def test_non_scalar_backward_raises(self):
        w = parameter(np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            (w * 2.0).backward()

    def test_two_layer_composition_matches_finite_diff(self):
        rng = Rng(11)
        w1 = parameter(rng.normal((4, 3)))
        b1 = parameter(rng.normal((3,)))
        w2 = parameter(rng.normal((3, 2)))
        x = Tensor(rng.normal((2, 4)))

        def f(_params):
            h = relu(T.add(matmul(x, w1), b1))
            return sum_all(matmul(h, w2) * matmul(h, w2))

        assert finite_diff_check(f, [w1, b1, w2]) < 1e-4


class TestFiniteDiffCheck:
    def test_sum_of_squares(self):
        w = parameter(np.array([0.3, -1.2, 2.0]))

        def f(_):
            return sum_all(w * w)

        assert finite_diff_check(f, [w]) < 1e-7

    def test_softmax_cross_entropy(self):
        w = parameter(np.array([[0.2, -0.4, 1.3]]))

        def f(_):
            return cross_entropy(w, [2])

        assert finite_diff_check(f, [w]) < 1e-6


class TestOps:
    def test_gather_rows_scatter_adds(self):
        e = parameter(np.arange(12.0).reshape(4, 3))
        out = gather_rows(e, [1, 1, 3])
        assert np.array_equal(out.data, e.data[[1, 1, 3]])
        sum_all(out).backward()
        expect = np.zeros((4, 3))
        expect[1] = 2.0
        expect[3] = 1.0
        assert np.array_equal(e.grad, expect)

    def test_concat_and_slice_roundtrip_gradients(self):
        a = parameter(np.ones((2, 3)))
        b = parameter(np.ones((3, 3)))
        joined = T.concat([a, b], axis=0)
        top = T.slice_rows(joined, 0, 2)
        sum_all(top).backward()
        assert np.array_equal(a.grad, np.ones((2, 3)))
        assert b.grad is None or np.array_equal(b.grad, np.zeros((3, 3)))

    def test_transpose_and_reshape_gradients(self):
        a = parameter(np.arange(6.0).reshape(2, 3))
        out = T.reshape(T.transpose(a), (2, 3))
        sum_all(out * out).backward()
        assert np.allclose(a.grad, 2.0 * a.data)

    def test_cross_entropy_uniform_logits(self):
        logits = Tensor(np.zeros((4, 7)))
        loss = cross_entropy(logits, [0, 3, 6, 2])
        assert abs(loss.item() - math.log(7.0)) < 1e-12

    def test_detach_blocks_gradient_exactly(self):
        w = parameter(np.array([2.0, 3.0]))
        loss = sum_all(w.detach() * w)
        loss.backward()
        assert np.array_equal(w.grad, [2.0, 3.0])

    def test_dropout_inverted_scaling_and_eval_identity(self):
        x = Tensor(np.ones((20, 10)))
        rng = Rng(5)
        out = T.dropout(x, 0.4, rng, training=True)
        vals = np.unique(out.data)
        assert set(np.round(vals, 12)) <= {0.0, round(1.0 / 0.6, 12)}
        same = T.dropout(x, 0.4, rng, training=False)
        assert same is x


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = Rng(123), Rng(123)
        assert np.array_equal(a.normal((5, 5)), b.normal((5, 5)))
        assert np.array_equal(a.permutation(17), b.permutation(17))

    def test_spawn_is_deterministic_and_independent(self):
        a, b = Rng(9), Rng(9)
        assert np.array_equal(a.spawn(3).normal((4,)), b.spawn(3).normal((4,)))
        assert not np.array_equal(a.spawn(3).normal((4,)), a.spawn(4).normal((4,)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_composition_gradients(seed):
    """Random compositions of the op vocabulary pass the finite-diff check."""
    rng = Rng(seed)
    w1 = parameter(rng.normal((5, 4)))
    b1 = parameter(rng.normal((4,)))
    g = parameter(np.abs(rng.normal((4,))) + 0.5)
    b2 = parameter(rng.normal((4,)))
    w2 = parameter(rng.normal((4, 3)))
    x = Tensor(rng.normal((3, 5)))
    ids = [2, 0, 1]

    def f(_):
        h = layer_norm(T.add(matmul(x, w1), b1), g, b2)
        h = relu(h)
        att = softmax_rows(matmul(h, T.transpose(h)))
        h = matmul(att, h)
        logits = matmul(h, w2)
        return cross_entropy(logits, ids)

    assert finite_diff_check(f, [w1, b1, g, b2, w2]) < 1e-4
