"""Attention-score decompositions and segment-recurrence memory.

Two interchangeable score modes drive every multi-head attention block in
the summarizer:

* ``vanilla`` — absolute sinusoidal positions folded into queries and keys,
  A[i,j] = (W_q (h_i + U_i)) . (W_k (h_j + U_j)), the four-term expansion of
  the classic formulation.
* ``xl`` — content / position split with relative offsets,
  A[i,j] = q_i.k_j + q_i.(W_kR R_{i-j}) + u.k_j + v.(W_kR R_{i-j}).

Positions enter the scores only; the value pathway is position-free in both
modes. Key sets may be extended with cached hidden states from the previous
segment (``SegmentMemory``), which never receive gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Rng,
    ShapeError,
    Tensor,
    add,
    concat,
    gather_rows,
    matmul,
    matmul_t,
    reshape,
    scale,
    softmax_rows,
)

__all__ = [
    "CapacityError",
    "AbsolutePositionalEncoding",
    "RelativePositionalEncoding",
    "VanillaHeadParams",
    "AttentionHeadParams",
    "SegmentMemory",
    "vanilla_scores",
    "xl_scores",
    "multi_head_attention",
    "concat_memory",
    "update_memory",
    "sinusoid_rows",
    "make_head_params",
    "xavier_uniform",
]


class CapacityError(ValueError):
    """A position or relative offset falls outside the configured range."""


def sinusoid_rows(positions, d_model: int) -> np.ndarray:
    """Fixed sinusoid: even dims sin(p / 10000^(2k/d)), odd dims cos."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    k = np.arange(d_model, dtype=np.float64) // 2
    angles = pos / np.power(10000.0, 2.0 * k / d_model)
    table = np.empty((pos.shape[0], d_model))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


class AbsolutePositionalEncoding:
    """Non-trainable table U[position] for positions 0 .. L_max-1."""

    def __init__(self, l_max: int, d_model: int):
        self.l_max = int(l_max)
        self.d_model = int(d_model)
        self.table = Tensor(sinusoid_rows(np.arange(self.l_max), d_model))

    def rows(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and (positions.min() < 0 or positions.max() >= self.l_max):
            raise CapacityError(
                f"position {int(positions.max())} outside capacity L_max={self.l_max}"
            )
        return self.table.data[positions]


class RelativePositionalEncoding:
    """Non-trainable table R[offset] for offsets -(L_max-1) .. L_max-1.

    Offset d is stored at row d + L_max - 1 and holds the sinusoid evaluated
    at d itself (negative arguments included).
    """

    def __init__(self, l_max: int, d_model: int):
        self.l_max = int(l_max)
        self.d_model = int(d_model)
        offsets = np.arange(-(self.l_max - 1), self.l_max)
        self.table = Tensor(sinusoid_rows(offsets, d_model))

    def row_indices(self, offsets: np.ndarray) -> np.ndarray:
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.size and int(np.abs(offsets).max()) > self.l_max - 1:
            raise CapacityError(
                f"relative offset {int(np.abs(offsets).max())} outside capacity "
                f"L_max-1={self.l_max - 1}"
            )
        return offsets + self.l_max - 1


def xavier_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))


@dataclass
class VanillaHeadParams:
    """One head of absolute-position attention: query/key/value projections."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    @classmethod
    def create(cls, d_model: int, d_head: int, rng: Rng) -> "VanillaHeadParams":
        return cls(
            w_q=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            w_k=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            w_v=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
        )

    def params(self):
        return [("W_q", self.w_q), ("W_k", self.w_k), ("W_v", self.w_v)]


@dataclass
class AttentionHeadParams:
    """One head of relative-position attention (content/position split)."""

    w_q: Tensor
    w_ke: Tensor
    w_kr: Tensor
    w_v: Tensor
    u: Tensor
    v: Tensor

    @classmethod
    def create(cls, d_model: int, d_head: int, rng: Rng) -> "AttentionHeadParams":
        return cls(
            w_q=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            w_ke=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            w_kr=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            w_v=Tensor(xavier_uniform(rng, d_head, d_model), requires_grad=True),
            u=Tensor(np.zeros(d_head), requires_grad=True),
            v=Tensor(np.zeros(d_head), requires_grad=True),
        )

    def params(self):
        return [
            ("W_q", self.w_q),
            ("W_kE", self.w_ke),
            ("W_kR", self.w_kr),
            ("W_v", self.w_v),
            ("u", self.u),
            ("v", self.v),
        ]


def make_head_params(mode: str, d_model: int, d_head: int, rng: Rng):
    if mode == "vanilla":
        return VanillaHeadParams.create(d_model, d_head, rng)
    if mode == "xl":
        return AttentionHeadParams.create(d_model, d_head, rng)
    raise ValueError(f"unknown attention mode {mode!r}")


def _default_positions(n_q: int, n_k: int):
    # Self-attention over [memory || current]: query i sits at concatenated
    # index m + i, so memory keys get strictly positive left offsets.
    m = n_k - n_q
    return np.arange(m, m + n_q), np.arange(n_k)


def vanilla_scores(
    x: Tensor,
    encoding: AbsolutePositionalEncoding,
    params: VanillaHeadParams,
    h_kv: Tensor | None = None,
    q_pos=None,
    k_pos=None,
) -> Tensor:
    """Absolute-position attention scores.

    With the defaults this is self-attention of ``x`` at positions 0..n-1,
    returning the n x n matrix whose (i, j) entry is the sum of the four
    content/position terms — equivalently (W_q(x_i+U_i)) . (W_k(x_j+U_j)).
    """
    h_kv = x if h_kv is None else h_kv
    n_q, n_k = x.data.shape[0], h_kv.data.shape[0]
    if q_pos is None and k_pos is None:
        q_pos, k_pos = _default_positions(n_q, n_k)
    q_pos = np.asarray(q_pos, dtype=np.int64)
    k_pos = np.asarray(k_pos, dtype=np.int64)
    q_in = add(x, Tensor(encoding.rows(q_pos)))
    k_in = add(h_kv, Tensor(encoding.rows(k_pos)))
    q = matmul_t(q_in, params.w_q)
    k = matmul_t(k_in, params.w_k)
    return matmul_t(q, k)


def xl_scores(
    h_q: Tensor,
    h_kv: Tensor,
    encoding: RelativePositionalEncoding,
    params: AttentionHeadParams,
    q_pos=None,
    k_pos=None,
) -> Tensor:
    """Relative-position attention scores over [memory || current] keys.

    Default positions treat key j as concatenated index j and query i as
    index m + i (m = extra memory rows), so the relative offset is (i+m)-j.
    Explicit ``q_pos`` / ``k_pos`` support entity and cross attention, where
    positions are not contiguous.
    """
    n_q, n_k = h_q.data.shape[0], h_kv.data.shape[0]
    if h_q.data.shape[1] != h_kv.data.shape[1]:
        raise ShapeError(f"query/key widths differ: {h_q.data.shape} vs {h_kv.data.shape}")
    if q_pos is None and k_pos is None:
        q_pos, k_pos = _default_positions(n_q, n_k)
    q_pos = np.asarray(q_pos, dtype=np.int64)
    k_pos = np.asarray(k_pos, dtype=np.int64)

    q = matmul_t(h_q, params.w_q)
    k = matmul_t(h_kv, params.w_ke)
    # content terms: q_i.k_j + u.k_j, fused as (q_i + u).k_j
    content = matmul_t(add(q, params.u), k)

    offsets = q_pos[:, None] - k_pos[None, :]
    row_idx = encoding.row_indices(offsets)
    unique_rows, inverse = np.unique(row_idx.reshape(-1), return_inverse=True)
    r_rows = Tensor(encoding.table.data[unique_rows])
    proj = matmul_t(r_rows, params.w_kr)
    # position terms: q_i.(W_kR R_d) + v.(W_kR R_d), fused as (q_i + v).P_d,
    # then spread from the unique-offset table back to the (i, j) grid.
    per_offset = matmul_t(add(q, params.v), proj)
    n_off = unique_rows.shape[0]
    flat_idx = np.repeat(np.arange(n_q) * n_off, n_k) + inverse
    position = reshape(gather_rows(reshape(per_offset, (n_q * n_off, 1)), flat_idx), (n_q, n_k))
    return add(content, position)


def multi_head_attention(
    queries: Tensor,
    keys_values: Tensor,
    mask: np.ndarray | None,
    heads,
    w_o: Tensor,
    mode: str,
    encoding,
    q_pos=None,
    k_pos=None,
) -> Tensor:
    """Masked softmax attention per head, concatenated, projected by W_O.

    ``mask`` is boolean [n_q x n_k] with True marking attendable keys; every
    query row must keep at least one key. Scores are scaled by 1/sqrt(d_head)
    before the softmax (the underlying architecture scales even though the
    score decompositions above are stated unscaled). Residual adds and layer
    norms belong to the caller.
    """
    outputs = []
    for head in heads:
        if mode == "vanilla":
            scores = vanilla_scores(queries, encoding, head, h_kv=keys_values, q_pos=q_pos, k_pos=k_pos)
        elif mode == "xl":
            scores = xl_scores(queries, keys_values, encoding, head, q_pos=q_pos, k_pos=k_pos)
        else:
            raise ValueError(f"unknown attention mode {mode!r}")
        d_head = head.w_q.data.shape[0]
        probs = softmax_rows(scale(scores, 1.0 / np.sqrt(d_head)), mask)
        values = matmul_t(keys_values, head.w_v)
        outputs.append(matmul(probs, values))
    joined = outputs[0] if len(outputs) == 1 else concat(outputs, axis=1)
    return matmul_t(joined, w_o)


@dataclass
class SegmentMemory:
    """Per-layer cache of hidden states from earlier segments.

    The cached rows are plain arrays outside the autodiff tape, so nothing
    ever backpropagates into a previous segment through them.
    """

    data: np.ndarray

    @classmethod
    def empty(cls, d_model: int) -> "SegmentMemory":
        return cls(np.zeros((0, d_model)))

    @property
    def rows(self) -> int:
        return self.data.shape[0]


def concat_memory(mem: SegmentMemory, h_cur: Tensor) -> Tensor:
    """[memory ; current] rows; gradient reaches only the current rows."""
    if mem.data.shape[1] != h_cur.data.shape[1]:
        raise ShapeError(
            f"memory width {mem.data.shape[1]} != current width {h_cur.data.shape[1]}"
        )
    if mem.rows == 0:
        return h_cur
    return concat([Tensor(mem.data), h_cur], axis=0)


def update_memory(old: SegmentMemory, new_hidden, capacity: int) -> SegmentMemory:
    """Keep the trailing ``capacity`` rows of [old ; new], detached."""
    arr = new_hidden.data if isinstance(new_hidden, Tensor) else np.asarray(new_hidden)
    if capacity <= 0:
        return SegmentMemory(np.zeros((0, arr.shape[1])))
    joined = np.concatenate([old.data, arr], axis=0)
    return SegmentMemory(joined[-capacity:].copy())
