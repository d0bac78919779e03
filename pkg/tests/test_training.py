import numpy as np
import pytest

from entsum.corpus import Pair, Vocabulary
from entsum.model import Summarizer, toy_config
from entsum.tensor import Tensor
from entsum.training import (
    BertAdam,
    TrainConfig,
    bert_adam_step,
    train_summarizer,
    write_loss_trace,
)


def fresh_state(t):
    return {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data)}


class TestBertAdamStep:
    def test_zero_grad_zero_decay_is_noop(self):
        cfg = TrainConfig(lr=0.1, weight_decay=0.0)
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        before = p.data.copy()
        bert_adam_step(p, np.zeros(2), fresh_state(p), cfg)
        assert np.array_equal(p.data, before)

    def test_first_step_has_no_bias_correction(self):
        # without bias correction the first-step magnitude is about
        # lr * (1-b1)/sqrt(1-b2), nowhere near lr itself
        cfg = TrainConfig(lr=0.01, weight_decay=0.0, eps=1e-12)
        p = Tensor(np.array([0.5]), requires_grad=True)
        g = np.array([2.0])
        before = p.data.copy()
        bert_adam_step(p, g, fresh_state(p), cfg)
        m = (1 - cfg.beta1) * g
        v = (1 - cfg.beta2) * g * g
        expect = before - cfg.lr * (m / (np.sqrt(v) + cfg.eps))
        assert np.allclose(p.data, expect, atol=1e-15)
        magnitude = abs(before[0] - p.data[0])
        assert abs(magnitude - cfg.lr * 0.1 / np.sqrt(0.001)) < 1e-9
        assert magnitude > 2 * cfg.lr  # a bias-corrected Adam would move ~lr

    def test_two_steps_match_closed_form(self):
        cfg = TrainConfig(lr=0.05, weight_decay=0.01, eps=1e-6)
        p = Tensor(np.array([1.0]), requires_grad=True)
        state = fresh_state(p)
        g = np.array([3.0])
        x = 1.0
        m = v = 0.0
        for _ in range(2):
            bert_adam_step(p, g, state, cfg)
            m = cfg.beta1 * m + (1 - cfg.beta1) * 3.0
            v = cfg.beta2 * v + (1 - cfg.beta2) * 9.0
            x = x - cfg.lr * (m / (np.sqrt(v) + cfg.eps) + cfg.weight_decay * x)
        assert abs(p.data[0] - x) < 1e-15

    def test_decoupled_weight_decay_moves_param_without_grad(self):
        cfg = TrainConfig(lr=0.1, weight_decay=0.5)
        p = Tensor(np.array([2.0]), requires_grad=True)
        bert_adam_step(p, np.zeros(1), fresh_state(p), cfg)
        assert abs(p.data[0] - (2.0 - 0.1 * 0.5 * 2.0)) < 1e-15


def tiny_model(seed=0):
    vocab = Vocabulary([f"t{i}" for i in range(10)])
    cfg = toy_config(n_layers=1, d_model=8, n_heads=2, d_ff=8, segment_len=8, memory_len=8, l_max=32)
    return Summarizer(cfg, vocab, seed=seed)


def tiny_corpus():
    return [
        Pair("t0 t1 t2 t3", "t0 t1"),
        Pair("t4 t5 t6 t7", "t4 t5"),
        Pair("t8 t9 t0 t1", "t8 t9"),
    ]


class TestTrainLoop:
    def test_zero_steps_leaves_model_at_init(self):
        model = tiny_model()
        before = {n: t.data.copy() for n, t in model.named_params()}
        trace = train_summarizer(tiny_corpus(), model, None, TrainConfig(lr=0.01, steps=0))
        assert trace == []
        for n, t in model.named_params():
            assert np.array_equal(t.data, before[n])

    def test_same_seed_bit_identical_traces_and_params(self):
        cfg = TrainConfig(lr=0.01, steps=8, batch_size=2, seed=7)
        m1, m2 = tiny_model(3), tiny_model(3)
        t1 = train_summarizer(tiny_corpus(), m1, None, cfg)
        t2 = train_summarizer(tiny_corpus(), m2, None, cfg)
        assert t1 == t2
        for (n1, p1), (_, p2) in zip(m1.named_params(), m2.named_params()):
            assert np.array_equal(p1.data, p2.data), n1

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty corpus"):
            train_summarizer([], tiny_model(), None, TrainConfig(lr=0.01, steps=1))

    def test_loss_trace_csv_format(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_loss_trace([1.5, 0.25], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert lines[1] == "0,1.5"
        assert lines[2] == "1,0.25"

    def test_optimizer_moves_parameters(self):
        model = tiny_model()
        before = model.embedding.data.copy()
        train_summarizer(tiny_corpus(), model, None, TrainConfig(lr=0.05, steps=3, seed=1))
        assert not np.array_equal(model.embedding.data, before)

    def test_adam_class_skips_gradless_params(self):
        model = tiny_model()
        opt = BertAdam(model.named_params(), TrainConfig(lr=0.1))
        before = model.embedding.data.copy()
        opt.step()  # no grads anywhere: nothing moves
        assert np.array_equal(model.embedding.data, before)
