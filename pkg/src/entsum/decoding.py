"""Beam-search and greedy decoding with incremental decoder caching.

Hypotheses accumulate unnormalized log-probabilities. EOS is masked to -inf
until ``min_len`` tokens have been generated; at ``max_len`` every
non-EOS continuation is masked instead, so hypotheses finish with EOS and
its true log-probability. Ties break by lexicographic token-id order.

Decoder-side entities are re-linked from each hypothesis's tokens at every
step (inactive before ``entity_min_tokens``). Incremental key caches are
reused while the linked entity set is unchanged and rebuilt from the full
prefix the moment it changes, which keeps cached decoding exactly equal to
full-prefix recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import SegmentMemory
from .linking import Gazetteer, LinkedDocument, link_prefix
from .model import Summarizer
from .tensor import no_grad

__all__ = [
    "DecodeConfig",
    "Hypothesis",
    "DecodeSession",
    "beam_search",
    "greedy_decode",
    "summarize_document",
    "toy_decode_config",
    "paper_decode_config",
]


@dataclass
class DecodeConfig:
    beam_width: int = 5
    min_len: int = 60
    max_len: int = 90
    entity_min_tokens: int = 20
    max_src: int = 400

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if not 0 <= self.min_len <= self.max_len:
            raise ValueError(f"need 0 <= min_len <= max_len, got {self.min_len}..{self.max_len}")


def paper_decode_config(**overrides) -> DecodeConfig:
    return DecodeConfig(**overrides)


def toy_decode_config(**overrides) -> DecodeConfig:
    base = dict(beam_width=3, min_len=2, max_len=20, max_src=64)
    base.update(overrides)
    return DecodeConfig(**base)


@dataclass
class Hypothesis:
    """Partial decode: generated token ids, cumulative logprob, finished flag.

    A finished hypothesis ends in EOS (also when finishing was forced at
    max_len — the EOS log-probability is always accounted for).
    """

    token_ids: list[int] = field(default_factory=list)
    logprob: float = 0.0
    finished: bool = False


def _log_softmax(row: np.ndarray) -> np.ndarray:
    m = row.max()
    stable = row - m
    return stable - np.log(np.exp(stable).sum())


class DecodeSession:
    """Incremental decoder state for a single hypothesis.

    Holds per-layer key caches for both causal self-attention sublayers.
    ``logprobs`` processes only the rows added since the last call, unless
    re-linking changed the entity set, in which case the whole prefix is
    recomputed so cached and from-scratch decoding stay identical.
    """

    def __init__(self, model: Summarizer, enc_states, enc_pos, gazetteer: Gazetteer, entity_min_tokens: int):
        self.model = model
        self.enc_states = enc_states
        self.enc_pos = enc_pos
        self.gazetteer = gazetteer or Gazetteer()
        self.entity_min_tokens = entity_min_tokens
        self.input_ids = [model.vocab.bos_id]
        self.tokens: list[str] = []
        self.spans: list = []
        self.caches = self._fresh_caches()
        self.processed = 0

    def _fresh_caches(self):
        d = self.model.config.d_model
        return [
            {"self1": SegmentMemory.empty(d), "self2": SegmentMemory.empty(d)}
            for _ in self.model.dec_layers
        ]

    def clone(self) -> "DecodeSession":
        other = object.__new__(DecodeSession)
        other.model = self.model
        other.enc_states = self.enc_states
        other.enc_pos = self.enc_pos
        other.gazetteer = self.gazetteer
        other.entity_min_tokens = self.entity_min_tokens
        other.input_ids = list(self.input_ids)
        other.tokens = list(self.tokens)
        other.spans = list(self.spans)
        other.caches = [
            {k: SegmentMemory(v.data.copy()) for k, v in layer.items()} for layer in self.caches
        ]
        other.processed = self.processed
        return other

    def push(self, token_id: int):
        self.input_ids.append(int(token_id))
        self.tokens.append(self.model.vocab.token(int(token_id)))

    def next_logprobs(self) -> np.ndarray:
        """Log-probabilities over the vocabulary for the next position."""
        spans = link_prefix(self.tokens, self.gazetteer, self.entity_min_tokens)
        if spans != self.spans:
            self.spans = spans
            self.caches = self._fresh_caches()
            self.processed = 0
        rows = self.input_ids[self.processed :]
        positions = np.arange(self.processed, len(self.input_ids))
        with no_grad():
            logits = self.model.decode_forward(
                self.enc_states,
                self.enc_pos,
                rows,
                positions,
                dec_spans=self.spans,
                training=False,
                caches=self.caches,
                entity_min_tokens=self.entity_min_tokens,
            )
        self.processed = len(self.input_ids)
        return _log_softmax(logits.data[-1])


def _start_session(model, article: LinkedDocument, gazetteer, config: DecodeConfig):
    if hasattr(model, "start_session"):
        return model.start_session(article, gazetteer, config)
    with no_grad():
        enc_states, enc_pos = model.encode(article, training=False)
    return DecodeSession(model, enc_states, enc_pos, gazetteer, config.entity_min_tokens)


def beam_search(model, article: LinkedDocument, gazetteer, config: DecodeConfig) -> Hypothesis:
    """Length-unnormalized beam search; returns the best finished hypothesis.

    The beam is kept sorted by descending logprob (ties: lexicographic
    token ids) and never exceeds ``beam_width`` entries.
    """
    eos = model.vocab.eos_id if hasattr(model, "vocab") else model.eos_id
    session = _start_session(model, article, gazetteer, config)
    beam: list[tuple[Hypothesis, DecodeSession | None]] = [(Hypothesis(), session)]

    while any(not hyp.finished for hyp, _ in beam):
        candidates: list[tuple[Hypothesis, tuple | None]] = []
        for hyp, sess in beam:
            if hyp.finished:
                candidates.append((hyp, None))
                continue
            lp = sess.next_logprobs().copy()
            n_gen = len(hyp.token_ids)
            if n_gen < config.min_len:
                lp[eos] = -np.inf
            if n_gen >= config.max_len:
                only_eos = np.full_like(lp, -np.inf)
                only_eos[eos] = lp[eos]
                lp = only_eos
            top = np.argsort(-lp, kind="stable")[: config.beam_width]
            for tid in top:
                tid = int(tid)
                if lp[tid] == -np.inf:
                    continue
                if tid == eos:
                    new = Hypothesis(hyp.token_ids + [eos], hyp.logprob + lp[tid], True)
                    candidates.append((new, None))
                else:
                    new = Hypothesis(hyp.token_ids + [tid], hyp.logprob + lp[tid], False)
                    candidates.append((new, (sess, tid)))
        candidates.sort(key=lambda c: (-c[0].logprob, c[0].token_ids))
        kept = candidates[: config.beam_width]

        next_beam = []
        pending: dict[int, int] = {}
        for _, plan in kept:
            if plan is not None:
                pending[id(plan[0])] = pending.get(id(plan[0]), 0) + 1
        for hyp, plan in kept:
            if plan is None:
                next_beam.append((hyp, None))
                continue
            parent, tid = plan
            pending[id(parent)] -= 1
            # the last surviving child of a parent can take over its session
            child = parent.clone() if pending[id(parent)] > 0 else parent
            child.push(tid)
            next_beam.append((hyp, child))
        beam = next_beam

    return beam[0][0]


def greedy_decode(model, article: LinkedDocument, gazetteer, config: DecodeConfig) -> Hypothesis:
    """Beam search with width 1: argmax continuation at every step."""
    cfg = DecodeConfig(
        beam_width=1,
        min_len=config.min_len,
        max_len=config.max_len,
        entity_min_tokens=config.entity_min_tokens,
        max_src=config.max_src,
    )
    return beam_search(model, article, gazetteer, cfg)


def summarize_document(model: Summarizer, article_text: str, gazetteer, config: DecodeConfig) -> str:
    """Tokenize + link an article, decode, and join the summary tokens."""
    from .linking import link, tokenize

    gaz = gazetteer or Gazetteer()
    tokens = tokenize(article_text)[: config.max_src]
    article = LinkedDocument(tokens, link(tokens, gaz))
    hyp = beam_search(model, article, gaz, config)
    ids = [t for t in hyp.token_ids if t != model.vocab.eos_id]
    return " ".join(model.vocab.token(t) for t in ids)
