"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every piece of model math in this package is expressed through the small
operation vocabulary below, so gradient code exists in exactly one place and
can be checked against central finite differences. 64-bit floats throughout:
the library exists to be verified, not to be fast.

Layout is row-major and matmul accumulates over the inner dimension in
ascending order, so results are bit-identical to a naive triple loop.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Rng",
    "ShapeError",
    "MaskError",
    "tensor",
    "parameter",
    "no_grad",
    "matmul",
    "matmul_t",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "softmax_rows",
    "layer_norm",
    "gather_rows",
    "concat",
    "slice_rows",
    "slice_cols",
    "transpose",
    "reshape",
    "sum_all",
    "cross_entropy",
    "dropout",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class MaskError(ValueError):
    """A softmax row has no unmasked entry (empty attention context)."""


class Rng:
    """Deterministic random stream: PCG64 under a fixed 64-bit seed.

    Identical seeds produce identical draws across runs. ``spawn`` derives
    an independent child stream from (seed, key), so sub-components can be
    reseeded without consuming draws from the parent.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, key: int) -> "Rng":
        child_seed = np.random.SeedSequence((self.seed, int(key))).generate_state(1)[0]
        return Rng(int(child_seed))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(size=shape) * std

    def integers(self, low: int, high: int) -> int:
        """One integer drawn uniformly from [low, high)."""
        return int(self._gen.integers(low, high))

    def random(self) -> float:
        return float(self._gen.random())

    def random_array(self, shape) -> np.ndarray:
        return self._gen.random(size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


class Tensor:
    """A dense float64 array plus the tape bookkeeping for backprop.

    Tensors are immutable once built by an operation, except that ``grad``
    accumulates during backward passes and optimizers rewrite leaf ``data``
    between steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward_fn=None):
        # asarray keeps 0-d scalars 0-d; C order so matmul's summation-order
        # contract sees one consistent layout.
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same values with no tape history (stop-gradient)."""
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        Gradients accumulate across multiple uses of the same tensor. Only
        scalar outputs may seed a backward pass.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # Operator sugar over the named ops below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suppresses tape recording (forward values only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _make(data, parents, backward_fn) -> Tensor:
    """Build an op result; drop tape history when no parent needs grad."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn)
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _matmul_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Accumulate over the inner dimension in ascending order with a single
    # accumulator per output element, so results are bit-identical to the
    # naive scalar triple loop. Two routes with identical rounding: cumsum
    # (sequential prefix sums, 3 dispatches) when the product tensor is
    # small, a k-loop of fused multiply-adds otherwise.
    m, k = a.shape
    _, n = b.shape
    if k == 0:
        return np.zeros((m, n))
    if m * k * n <= 4096:
        return (a[:, :, None] * b[None, :, :]).cumsum(axis=1)[:, -1, :]
    out = np.zeros((m, n))
    for kk in range(k):
        out += a[:, kk, None] * b[kk]
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    out = _matmul_raw(a.data, b.data)

    def backward_fn(g):
        _accum(a, _matmul_raw(g, b.data.T))
        _accum(b, _matmul_raw(a.data.T, g))

    return _make(out, (a, b), backward_fn)


def matmul_t(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing the transpose — the projection idiom
    for weights stored as [rows_out x rows_in]. Summation order matches
    matmul exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul_t needs 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"matmul_t inner dimensions disagree: {a.data.shape} x {b.data.shape}^T")
    out = _matmul_raw(a.data, b.data.T)

    def backward_fn(g):
        _accum(a, _matmul_raw(g, b.data))
        _accum(b, _matmul_raw(g.T, a.data))

    return _make(out, (a, b), backward_fn)


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum. ``b`` may share ``a``'s shape, be a scalar, or be a
    1-D bias broadcast over the rows of a 2-D ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    bias_rows = a.data.ndim == 2 and b.data.ndim == 1 and b.data.shape[0] == a.data.shape[1]
    if not (a.data.shape == b.data.shape or b.data.size == 1 or a.data.size == 1 or bias_rows):
        raise ShapeError(f"add shapes incompatible: {a.data.shape} + {b.data.shape}")
    out = a.data + b.data

    def backward_fn(g):
        _accum(a, g if a.data.shape == out.shape else np.sum(g).reshape(a.data.shape))
        if b.data.shape == out.shape:
            _accum(b, g)
        elif bias_rows:
            _accum(b, g.sum(axis=0))
        else:
            _accum(b, np.sum(g).reshape(b.data.shape))

    return _make(out, (a, b), backward_fn)


def sub(a: Tensor, b) -> Tensor:
    return add(a, scale(_as_tensor(b), -1.0))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; either operand may be a scalar."""
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    a, b = _as_tensor(a), _as_tensor(b)
    if not (a.data.shape == b.data.shape or b.data.size == 1 or a.data.size == 1):
        raise ShapeError(f"mul shapes incompatible: {a.data.shape} * {b.data.shape}")
    out = a.data * b.data

    def backward_fn(g):
        ga = g * b.data
        gb = g * a.data
        _accum(a, ga if a.data.shape == out.shape else np.sum(ga).reshape(a.data.shape))
        _accum(b, gb if b.data.shape == out.shape else np.sum(gb).reshape(b.data.shape))

    return _make(out, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    out = a.data * c

    def backward_fn(g):
        _accum(a, g * c)

    return _make(out, (a,), backward_fn)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def backward_fn(g):
        _accum(x, g * (x.data > 0.0))

    return _make(out, (x,), backward_fn)


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by row-max subtraction.

    ``mask`` is boolean with True marking attendable entries; masked entries
    come out exactly 0 and receive exactly zero gradient. A fully masked row
    raises MaskError: it signals an empty attention context upstream.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got shape {x.data.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.data.shape:
            raise ShapeError(f"mask shape {mask.shape} != input shape {x.data.shape}")
        if not mask.any(axis=1).all():
            bad = int(np.flatnonzero(~mask.any(axis=1))[0])
            raise MaskError(f"softmax row {bad} is fully masked")
        z = np.where(mask, x.data, -np.inf)
    else:
        z = x.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        _accum(x, p * (g - inner))

    return _make(p, (x,), backward_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.data.shape} and {bias.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gain.data * xhat + bias.data

    def backward_fn(g):
        gxhat = g * gain.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accum(x, gx)
        if x.data.ndim == 2:
            _accum(gain, (g * xhat).sum(axis=0))
            _accum(bias, g.sum(axis=0))
        else:
            _accum(gain, g * xhat)
            _accum(bias, g)

    return _make(out, (x, gain, bias), backward_fn)


def gather_rows(x: Tensor, ids) -> Tensor:
    """Select rows of a 2-D tensor by integer index (embedding lookup).

    Gradients scatter-add back into the source rows, so repeated ids
    accumulate correctly.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"gather_rows needs a matrix, got shape {x.data.shape}")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows needs a 1-D index, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise ShapeError(f"gather_rows index out of range for {x.data.shape[0]} rows")
    out = x.data[idx]

    def backward_fn(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accum(x, gx)

    return _make(out, (x,), backward_fn)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one input")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(p, g[tuple(sl)])

    return _make(out, tuple(parts), backward_fn)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if not (0 <= start <= stop <= x.data.shape[0]):
        raise ShapeError(f"row slice [{start}:{stop}] out of range for shape {x.data.shape}")
    out = x.data[start:stop]

    def backward_fn(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        _accum(x, gx)

    return _make(out.copy(), (x,), backward_fn)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2 or not (0 <= start <= stop <= x.data.shape[1]):
        raise ShapeError(f"col slice [{start}:{stop}] out of range for shape {x.data.shape}")
    out = x.data[:, start:stop]

    def backward_fn(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        _accum(x, gx)

    return _make(out.copy(), (x,), backward_fn)


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {x.data.shape}")

    def backward_fn(g):
        _accum(x, g.T)

    return _make(x.data.T.copy(), (x,), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def backward_fn(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(out.copy(), (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.array(x.data.sum())

    def backward_fn(g):
        _accum(x, np.full_like(x.data, float(g.reshape(()))))

    return _make(out, (x,), backward_fn)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under row logits."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy needs a [t x vocab] matrix, got {logits.data.shape}")
    ids = np.asarray(targets, dtype=np.int64)
    t, v = logits.data.shape
    if ids.shape != (t,):
        raise ShapeError(f"cross_entropy targets must have shape ({t},), got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise ShapeError(f"cross_entropy target id out of range for vocab {v}")
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    lse = m[:, 0] + np.log(e.sum(axis=1))
    nll = lse - logits.data[np.arange(t), ids]
    out = np.array(nll.mean())

    def backward_fn(g):
        p = e / e.sum(axis=1, keepdims=True)
        p[np.arange(t), ids] -= 1.0
        _accum(logits, p * (float(g.reshape(())) / t))

    return _make(out, (logits,), backward_fn)


def dropout(x: Tensor, p: float, rng: Rng, training: bool) -> Tensor:
    """Seeded Bernoulli dropout with inverted scaling; identity when not
    training or p == 0. The mask is a constant on the tape, so no dedicated
    gradient code is needed."""
    if not training or p <= 0.0:
        return x
    if not 0.0 < p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = 1.0 - p
    mask = (rng.random_array(x.data.shape) < keep).astype(np.float64) / keep
    return mul(x, Tensor(mask))


def finite_diff_check(f, params, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f(params)`` must rebuild its computation from the current param values
    and return a scalar Tensor, deterministically (dropout off or seed-fixed).
    Error per coordinate: |g_an - g_num| / max(1e-8, |g_an| + |g_num|).
    """
    for p in params:
        p.zero_grad()
    out = f(params)
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f(params).item()
                flat[i] = orig - h
                fm = f(params).item()
                flat[i] = orig
                gnum = (fp - fm) / (2.0 * h)
                err = abs(gflat[i] - gnum) / max(1e-8, abs(gflat[i]) + abs(gnum))
                if err > worst:
                    worst = err
    return worst
