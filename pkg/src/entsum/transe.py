"""TransE entity/relation embeddings learned from (head, relation, tail) facts.

A fact scores well when head + relation lands near tail in embedding space
(L2 dissimilarity). Training minimizes the margin-ranking hinge against
corrupted triples (head or tail swapped for a random entity) with SGD,
projecting entity vectors back onto the unit sphere after every step.
Gradients are closed-form numpy; the hinge's zero-gradient region is checked
against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .tensor import Rng, ShapeError

__all__ = [
    "Triple",
    "KnowledgeGraph",
    "TransEConfig",
    "TransEEmbeddings",
    "dissimilarity",
    "corrupt_triple",
    "triple_margin_loss",
    "transe_train",
    "link_prediction_eval",
    "load_triples_tsv",
    "load_entity_names_tsv",
]


class Triple(NamedTuple):
    h: int
    l: int
    t: int


@dataclass
class KnowledgeGraph:
    entity_count: int
    relation_count: int
    triples: list[Triple]
    entity_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for tr in self.triples:
            if tr in seen:
                raise ValueError(f"duplicate triple {tr}")
            seen.add(tr)
            if not (0 <= tr.h < self.entity_count and 0 <= tr.t < self.entity_count):
                raise ValueError(f"entity id out of range in {tr} (count {self.entity_count})")
            if not 0 <= tr.l < self.relation_count:
                raise ValueError(f"relation id out of range in {tr} (count {self.relation_count})")


@dataclass
class TransEConfig:
    d_ent: int = 16
    gamma: float = 1.0
    lr: float = 0.5
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"margin gamma must be positive, got {self.gamma}")


@dataclass
class TransEEmbeddings:
    entity_vectors: np.ndarray
    relation_vectors: np.ndarray

    def save_entities_tsv(self, path):
        """One row per entity, 17-significant-digit floats, with a header
        line `#transe d=<dim> entities=<n>`."""
        n, d = self.entity_vectors.shape
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#transe d={d} entities={n}\n")
            for i in range(n):
                vals = "\t".join(format(x, ".17g") for x in self.entity_vectors[i])
                fh.write(f"{i}\t{vals}\n")


def load_entity_vectors_tsv(path) -> np.ndarray:
    """Read the entity-embedding export produced by ``save_entities_tsv``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#transe"):
            raise ValueError(f"{path}: missing #transe header")
        fields = dict(part.split("=") for part in header.split()[1:])
        d, n = int(fields["d"]), int(fields["entities"])
        vectors = np.zeros((n, d))
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
            vectors[int(parts[0])] = [float(x) for x in parts[1:]]
    return vectors


def load_triples_tsv(path) -> list[Triple]:
    """`head_id<TAB>relation_id<TAB>tail_id` per line; `#` starts a comment."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated ids, got {line!r}")
            triples.append(Triple(int(parts[0]), int(parts[1]), int(parts[2])))
    return triples


def load_entity_names_tsv(path) -> dict[int, str]:
    names = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected `id<TAB>name`, got {line!r}")
            names[int(parts[0])] = parts[1]
    return names


def dissimilarity(h_vec, l_vec, t_vec) -> float:
    """L2 distance between head + relation and tail."""
    h_vec, l_vec, t_vec = (np.asarray(v, dtype=np.float64) for v in (h_vec, l_vec, t_vec))
    if not h_vec.shape == l_vec.shape == t_vec.shape:
        raise ShapeError(f"dissimilarity shapes differ: {h_vec.shape}, {l_vec.shape}, {t_vec.shape}")
    return float(np.linalg.norm(h_vec + l_vec - t_vec))


def corrupt_triple(triple: Triple, kg: KnowledgeGraph, rng: Rng) -> Triple:
    """Swap head or tail (fair coin) for a uniformly random *different* entity.

    The relation never changes, and the result always differs from the input
    in exactly one slot.
    """
    if kg.entity_count < 2:
        raise ValueError("cannot corrupt a triple with fewer than 2 entities")
    corrupt_head = rng.random() < 0.5
    original = triple.h if corrupt_head else triple.t
    replacement = rng.integers(0, kg.entity_count)
    while replacement == original:
        replacement = rng.integers(0, kg.entity_count)
    if corrupt_head:
        return Triple(replacement, triple.l, triple.t)
    return Triple(triple.h, triple.l, replacement)


def triple_margin_loss(d_pos: float, d_neg: float, gamma: float) -> float:
    """Hinge [gamma + d_pos - d_neg]_+ ; zero once the margin is satisfied.

    Grouped as gamma + (d_pos - d_neg) so equal distances give exactly gamma.
    """
    return max(0.0, gamma + (d_pos - d_neg))


def _norm_grad(diff: np.ndarray) -> np.ndarray:
    # gradient of ||diff|| w.r.t. diff; zero at the (non-differentiable) origin
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return np.zeros_like(diff)
    return diff / norm


def transe_train(kg: KnowledgeGraph, config: TransEConfig, on_step=None):
    """Margin-ranking SGD over the graph's triples.

    Init is uniform in [-6/sqrt(d), 6/sqrt(d)] per coordinate, entities then
    normalized to the unit sphere; after every optimizer step all entity
    vectors are re-projected. One corrupted sample per positive per batch.
    ``on_step``, if given, is called with (entity_vectors, relation_vectors)
    after every optimizer step (the per-step constraint hook used by tests).
    Returns (TransEEmbeddings, per-epoch mean loss trace).
    """
    if not kg.triples:
        raise ValueError("cannot train on an empty triple set")
    rng = Rng(config.seed)
    d = config.d_ent
    bound = 6.0 / np.sqrt(d)
    ent = rng.uniform(-bound, bound, (kg.entity_count, d))
    rel = rng.uniform(-bound, bound, (kg.relation_count, d))
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)

    triples = list(kg.triples)
    trace = []
    for _epoch in range(config.epochs):
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        for start in range(0, len(triples), config.batch_size):
            batch = [triples[i] for i in order[start : start + config.batch_size]]
            grad_ent = {}
            grad_rel = {}

            def bump(store, idx, g):
                if idx in store:
                    store[idx] = store[idx] + g
                else:
                    store[idx] = g.copy()

            for pos in batch:
                neg = corrupt_triple(pos, kg, rng)
                diff_pos = ent[pos.h] + rel[pos.l] - ent[pos.t]
                diff_neg = ent[neg.h] + rel[neg.l] - ent[neg.t]
                d_pos = float(np.linalg.norm(diff_pos))
                d_neg = float(np.linalg.norm(diff_neg))
                loss = triple_margin_loss(d_pos, d_neg, config.gamma)
                epoch_loss += loss
                if loss <= 0.0:
                    continue
                g_pos = _norm_grad(diff_pos)
                g_neg = _norm_grad(diff_neg)
                bump(grad_ent, pos.h, g_pos)
                bump(grad_ent, pos.t, -g_pos)
                bump(grad_rel, pos.l, g_pos)
                bump(grad_ent, neg.h, -g_neg)
                bump(grad_ent, neg.t, g_neg)
                bump(grad_rel, neg.l, -g_neg)

            step = config.lr / len(batch)
            for idx, g in grad_ent.items():
                ent[idx] -= step * g
            for idx, g in grad_rel.items():
                rel[idx] -= step * g
            # unit-sphere constraint: project every entity after each step
            ent /= np.linalg.norm(ent, axis=1, keepdims=True)
            if on_step is not None:
                on_step(ent, rel)
        trace.append(epoch_loss / len(triples))

    return TransEEmbeddings(ent, rel), trace


def link_prediction_eval(kg: KnowledgeGraph, emb: TransEEmbeddings, k: int, triples=None):
    """Tail ranking: for each triple, rank the true tail among all entities
    by dissimilarity(h + l, .) ascending, ties broken by entity id ascending.
    Returns (mean_rank, hits_at_k)."""
    triples = kg.triples if triples is None else triples
    if not triples:
        raise ValueError("no triples to evaluate")
    ranks = []
    for tr in triples:
        target = emb.entity_vectors[tr.h] + emb.relation_vectors[tr.l]
        dists = np.linalg.norm(target[None, :] - emb.entity_vectors, axis=1)
        d_true = dists[tr.t]
        rank = 1 + int(np.sum(dists < d_true))
        rank += int(np.sum((dists == d_true) & (np.arange(kg.entity_count) < tr.t)))
        ranks.append(rank)
    ranks = np.asarray(ranks)
    return float(ranks.mean()), float(np.mean(ranks <= k))
