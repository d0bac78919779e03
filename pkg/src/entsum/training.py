"""Optimizer and training loop for the summarizer.

The optimizer follows the original BERT recipe: Adam moments *without* bias
correction, plus decoupled weight decay folded into the update before the
learning-rate multiply:

    m <- b1*m + (1-b1)*g ;  v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (sqrt(v) + eps) + wd * p)

Training is teacher-forced cross-entropy with per-epoch seeded shuffling;
batches larger than one are plain gradient accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Pair
from .linking import Gazetteer, LinkedDocument, link, tokenize
from .model import Summarizer
from .tensor import Rng, ShapeError, scale

__all__ = [
    "TrainConfig",
    "BertAdam",
    "bert_adam_step",
    "train_summarizer",
    "toy_train_config",
    "paper_train_config",
    "write_loss_trace",
    "prepare_pair",
]


@dataclass
class TrainConfig:
    lr: float = 0.00005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.01
    steps: int = 100
    batch_size: int = 1
    seed: int = 0
    max_src: int = 400
    max_tgt_train: int = 100
    max_tgt_test: int = 120
    unk_prob: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def paper_train_config(**overrides) -> TrainConfig:
    return TrainConfig(**overrides)


def toy_train_config(**overrides) -> TrainConfig:
    base = dict(lr=0.0005, weight_decay=0.0, steps=2000, batch_size=1, max_src=64, max_tgt_train=24)
    base.update(overrides)
    return TrainConfig(**base)


def bert_adam_step(param, grad, state, config: TrainConfig):
    """One in-place BERTAdam update; ``state`` holds the m/v accumulators."""
    if grad.shape != param.data.shape:
        raise ShapeError(f"grad shape {grad.shape} != param shape {param.data.shape}")
    m, v = state["m"], state["v"]
    m *= config.beta1
    m += (1.0 - config.beta1) * grad
    v *= config.beta2
    v += (1.0 - config.beta2) * grad * grad
    update = m / (np.sqrt(v) + config.eps) + config.weight_decay * param.data
    param.data -= config.lr * update


class BertAdam:
    def __init__(self, named_params, config: TrainConfig):
        self.config = config
        self.named_params = list(named_params)
        self.state = {
            name: {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data)}
            for name, t in self.named_params
        }

    def step(self):
        for name, t in self.named_params:
            if t.grad is None:
                continue
            bert_adam_step(t, t.grad, self.state[name], self.config)

    def zero_grad(self):
        for _, t in self.named_params:
            t.zero_grad()


def prepare_pair(pair: Pair, gazetteer: Gazetteer | None, max_src: int, max_tgt: int):
    """Tokenize, truncate, and link one corpus pair."""
    art_tokens = tokenize(pair.article)[:max_src]
    sum_tokens = tokenize(pair.summary)[:max_tgt]
    gaz = gazetteer or Gazetteer()
    return (
        LinkedDocument(art_tokens, link(art_tokens, gaz)),
        LinkedDocument(sum_tokens, link(sum_tokens, gaz)),
    )


def train_summarizer(
    pairs,
    model: Summarizer,
    gazetteer: Gazetteer | None,
    config: TrainConfig,
    log_every: int = 0,
):
    """Run ``config.steps`` optimizer steps over the corpus.

    Pairs are truncated and entity-linked once up front; each epoch visits
    them in a fresh seeded shuffle. Returns the per-step mean-loss trace.
    """
    if not pairs:
        raise ValueError("cannot train on an empty corpus")
    docs = [prepare_pair(p, gazetteer, config.max_src, config.max_tgt_train) for p in pairs]
    rng = Rng(config.seed)
    shuffle_rng = rng.spawn(1)
    step_rng = rng.spawn(2)
    optimizer = BertAdam(model.named_params(), config)

    order: list[int] = []
    trace: list[float] = []
    for step in range(config.steps):
        optimizer.zero_grad()
        batch_loss = 0.0
        for _ in range(config.batch_size):
            if not order:
                order = list(shuffle_rng.permutation(len(docs)))
            article, summary = docs[order.pop(0)]
            loss = model.loss(
                article,
                summary,
                rng=step_rng,
                training=True,
                unk_prob=config.unk_prob,
            )
            batch_loss += loss.item()
            scale(loss, 1.0 / config.batch_size).backward()
        optimizer.step()
        trace.append(batch_loss / config.batch_size)
        if log_every and (step + 1) % log_every == 0:
            recent = trace[-log_every:]
            print(f"step {step + 1:5d}  loss {sum(recent) / len(recent):.4f}")
    return trace


def write_loss_trace(trace, path):
    """CSV `step,loss` with 17-significant-digit floats."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(trace):
            fh.write(f"{i},{format(loss, '.17g')}\n")
