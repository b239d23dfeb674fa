"""Dense float64 tensors with tape-based reverse-mode differentiation.

Values live in numpy arrays (row-major). Operations compute eagerly; while a
Tape is active, each differentiable operation also appends a node holding its
backward closure. Node order is creation order, which is a topological order
by construction (an operation's inputs always exist before its output), so
``backward`` is a single reverse sweep.

All math is 64-bit. Tensors are treated as immutable once created.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """An n-dimensional array of 64-bit reals with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _bad_item(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars are treated as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    @property
    def T(self):
        return transpose(self)


def _bad_item(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "backward_fn")

    def __init__(self, out: Tensor, backward_fn):
        self.out = out
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager around the forward computation, then call
    :func:`backward` (or ``tape.backward``) on the scalar loss. Gradients
    accumulate into ``Tensor.grad``; call :func:`zero_grad` between steps.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor, seed: float = 1.0) -> None:
        backward(self, loss, seed)


_ACTIVE: list[Tape] = []


def _record(out: Tensor, backward_fn) -> None:
    out.requires_grad = True
    _ACTIVE[-1]._nodes.append(_Node(out, backward_fn))


def _tracing(*inputs: Tensor) -> bool:
    return bool(_ACTIVE) and any(t.requires_grad for t in inputs)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def backward(tape: Tape, loss: Tensor, seed: float = 1.0) -> None:
    """Reverse sweep: fill ``grad`` of every tensor the loss depends on.

    ``seed`` scales the whole gradient (d total / d loss); per-sample batch
    losses pass 1/batch_size so gradients accumulate to the batch mean.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    # reset intermediate grads so repeated sweeps accumulate only into leaves
    for node in tape._nodes:
        node.out.grad = None
    _accum(loss, np.full_like(loss.data, seed))
    for node in reversed(tape._nodes):
        g = node.out.grad
        if g is not None:
            node.backward_fn(g)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` to undo numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive operations


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    if _tracing(a, b):
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        _record(out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    if _tracing(a, b):
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(-g, b.data.shape))
        _record(out, bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    if _tracing(a, b):
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))
        _record(out, bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    if _tracing(a):
        def bwd(g, a=a, c=c):
            _accum(a, g * c)
        _record(out, bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data)
    if _tracing(a, b):
        def bwd(g, a=a, b=b):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        _record(out, bwd)
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.data.T.copy())
    if _tracing(a):
        def bwd(g, a=a):
            _accum(a, g.T)
        _record(out, bwd)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if _tracing(a):
        def bwd(g, a=a):
            _accum(a, g.reshape(a.data.shape))
        _record(out, bwd)
    return out


def slice_(a: Tensor, key) -> Tensor:
    out = Tensor(a.data[key].copy())
    if _tracing(a):
        def bwd(g, a=a, key=key):
            full = np.zeros_like(a.data)
            full[key] = g
            _accum(a, full)
        _record(out, bwd)
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    if bool(_ACTIVE) and any(p.requires_grad for p in parts):
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)
        def bwd(g, parts=tuple(parts), offsets=offsets, axis=axis):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(p, g[tuple(idx)])
        _record(out, bwd)
    return out


def tsum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    if _tracing(a):
        def bwd(g, a=a):
            _accum(a, np.full_like(a.data, float(g)))
        _record(out, bwd)
    return out


def mean(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    if _tracing(a):
        n = a.data.size
        def bwd(g, a=a, n=n):
            _accum(a, np.full_like(a.data, float(g) / n))
        _record(out, bwd)
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    if _tracing(a):
        mask = a.data > 0.0
        def bwd(g, a=a, mask=mask):
            _accum(a, g * mask)
        _record(out, bwd)
    return out


def gelu(a: Tensor) -> Tensor:
    """x * Phi(x) with the exact normal CDF (erf-based, not the tanh form)."""
    if not np.isfinite(a.data).all():
        raise NumericError("gelu input contains non-finite entries")
    phi = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = Tensor(a.data * phi)
    if _tracing(a):
        def bwd(g, a=a, phi=phi):
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
            _accum(a, g * (phi + a.data * pdf))
        _record(out, bwd)
    return out


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-safe elementwise 1/(1+exp(-x)) on a plain array."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = stable_sigmoid(a.data)
    out = Tensor(s)
    if _tracing(a):
        def bwd(g, a=a, s=s):
            _accum(a, g * s * (1.0 - s))
        _record(out, bwd)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; rejects non-finite input."""
    if not np.isfinite(a.data).all():
        raise NumericError("softmax input contains non-finite entries")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)
    if _tracing(a):
        def bwd(g, a=a, s=s, axis=axis):
            dot = (g * s).sum(axis=axis, keepdims=True)
            _accum(a, s * (g - dot))
        _record(out, bwd)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    Variance uses the population (1/d) denominator.
    """
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)
    if _tracing(x, gamma, beta):
        def bwd(g, x=x, gamma=gamma, beta=beta, xhat=xhat, inv=inv, d=d):
            reduce_axes = tuple(range(g.ndim - 1))
            _accum(gamma, (g * xhat).sum(axis=reduce_axes) if reduce_axes else g * xhat)
            _accum(beta, g.sum(axis=reduce_axes) if reduce_axes else g.copy())
            if x.requires_grad:
                dxhat = g * gamma.data
                m1 = dxhat.mean(axis=-1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
                _accum(x, inv * (dxhat - m1 - xhat * m2))
        _record(out, bwd)
    return out


def cross_entropy(logits: Tensor, label) -> Tensor:
    """-log softmax(logits)[label], computed via a stable log-sum-exp.

    1-D logits take an integer label. 2-D logits (batch x classes) take a
    sequence of labels and reduce to the batch mean.
    """
    z = logits.data
    if z.ndim == 1:
        k = z.shape[0]
        y = int(label)
        if not 0 <= y < k:
            raise IndexError(f"label {y} out of range for {k} classes")
        m = z.max()
        e = np.exp(z - m)
        lse = m + np.log(e.sum())
        out = Tensor(lse - z[y])
        if _tracing(logits):
            sm = e / e.sum()
            def bwd(g, logits=logits, sm=sm, y=y):
                d = sm.copy()
                d[y] -= 1.0
                _accum(logits, float(g) * d)
            _record(out, bwd)
        return out
    if z.ndim == 2:
        labels = np.asarray(label, dtype=np.int64)
        n, k = z.shape
        if labels.shape != (n,):
            raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
        if labels.min() < 0 or labels.max() >= k:
            raise IndexError(f"label out of range for {k} classes")
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        lse = m[:, 0] + np.log(e.sum(axis=1))
        out = Tensor((lse - z[np.arange(n), labels]).mean())
        if _tracing(logits):
            sm = e / e.sum(axis=1, keepdims=True)
            def bwd(g, logits=logits, sm=sm, labels=labels, n=n):
                d = sm.copy()
                d[np.arange(n), labels] -= 1.0
                _accum(logits, (float(g) / n) * d)
            _record(out, bwd)
        return out
    raise ShapeError(f"cross_entropy expects 1-D or 2-D logits, got shape {z.shape}")


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02,
                 limit: float = 2.0) -> np.ndarray:
    """Normal(0, std) resampled until every entry lies within limit*std."""
    out = rng.normal(0.0, std, size=shape)
    bound = limit * std
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out
