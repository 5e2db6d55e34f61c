"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value that participates in training is a :class:`Tensor` wrapping a
row-major ``numpy`` array of 64-bit floats.  Operations record their parents
and a backward rule on the implicit tape (the operation graph); calling
``backward()`` on a scalar result replays the tape once in reverse
topological order, accumulating gradients additively across fan-out.

Gradients are only tracked for tensors created with ``requires_grad=True``
and everything computed from them.  Inside a ``no_grad()`` block no graph is
recorded at all.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import DimensionError, ParameterError

_GRAD_ENABLED = True

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (forward evaluation only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float64 array plus an optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._grad_owned = False

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- gradient machinery -------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray, owned: bool = False) -> None:
        """Add a gradient contribution.

        ``owned=True`` promises ``g`` is a freshly allocated array this node
        may keep and mutate; borrowed arrays (views into a consumer's
        gradient) are only copied if a second contribution actually arrives
        (fan-out), which keeps single-consumer chains allocation-free.
        """
        if self.grad is None:
            self.grad = g
            self._grad_owned = owned
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse pass from this node; visits each tape node exactly once."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.size != 1:
                raise ParameterError(
                    f"backward() without a seed gradient requires a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        order = _toposort(self)
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        """Same values, severed from the tape: contributes zero gradient."""
        return Tensor(self.data)

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS; parents always precede their consumers in the result.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Create a result node; records the tape edge only when gradients flow."""
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            ga = _unbroadcast(g, a.shape)
            a._accumulate(ga, owned=ga is not g)
        if b.requires_grad:
            gb = _unbroadcast(g, b.shape)
            b._accumulate(gb, owned=gb is not g)

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            ga = _unbroadcast(g, a.shape)
            a._accumulate(ga, owned=ga is not g)
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape), owned=True)

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape), owned=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape), owned=True)

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape), owned=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape), owned=True)

    return _make(data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data ** exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0), owned=True)

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data, owned=True)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data, owned=True)

    return _make(data, (a,), backward)


def softplus(a) -> Tensor:
    """Elementwise ``log(1 + e^x)``, overflow-safe for large positive x."""
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        a._accumulate(g / (1.0 + np.exp(-x)), owned=True)

    return _make(data, (a,), backward)


def gelu(a) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * cdf
    if not (_GRAD_ENABLED and a.requires_grad):
        return Tensor(data)
    # derivative factor precomputed: backward is then a single multiply-add
    slope = cdf + x * (_INV_SQRT2PI * np.exp(-0.5 * x * x))

    def backward(g):
        a._accumulate(g * slope, owned=True)

    return _make(data, (a,), backward)


def detach(a: Tensor) -> Tensor:
    return as_tensor(a).detach()


# -- reductions ---------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / data.size

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / count, owned=True)

    return _make(data, (a,), backward)


def tmax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; ties route their gradient to the first maximum."""
    a = as_tensor(a)
    data = a.data.max(axis=axis, keepdims=keepdims)
    idx = a.data.argmax(axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), g, axis=axis)
        a._accumulate(ga, owned=True)

    return _make(data, (a,), backward)


# -- shape manipulation -------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    data = a.data.transpose(axes)
    inverse = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accumulate(g.transpose(inverse))

    return _make(data, (a,), backward)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    data = np.broadcast_to(a.data, shape)

    def backward(g):
        ga = _unbroadcast(g, a.shape)
        a._accumulate(ga, owned=ga is not g)

    return _make(data.copy(), (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, offsets, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece, owned=False)

    return _make(data, ts, backward)


def index_axis(a, axis: int, index: int) -> Tensor:
    """Pick one slice along ``axis`` (the axis is dropped)."""
    a = as_tensor(a)
    data = np.take(a.data, index, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        sl = [slice(None)] * a.ndim
        sl[axis] = index
        ga[tuple(sl)] = g
        a._accumulate(ga, owned=True)

    return _make(data, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"embedding: ids out of range [0, {table.shape[0]}) (min {ids.min()}, max {ids.max()})"
        )
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(gt, owned=True)

    return _make(data, (table,), backward)


def gather_axis1(a, idx: np.ndarray) -> Tensor:
    """Batched row gather: ``out[b, n] = a[b, idx[b, n]]`` for 3-d ``a``."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    if a.ndim != 3 or idx.ndim != 2 or idx.shape[0] != a.shape[0]:
        raise DimensionError(f"gather_axis1: got tensor {a.shape} and indices {idx.shape}")
    data = np.take_along_axis(a.data, idx[:, :, None], axis=1)
    batch = np.arange(a.shape[0])[:, None]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (batch, idx), g)
        a._accumulate(ga, owned=True)

    return _make(data, (a,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; batched when both operands share leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2), owned=True)
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ g, owned=True)

    return _make(data, (a, b), backward)


# -- normalizations and softmaxes ---------------------------------------------


def softmax(a, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Stable softmax of ``a / temperature`` along ``axis``."""
    if temperature <= 0.0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    a = as_tensor(a)
    z = a.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a._accumulate(data * (g - dot) / temperature, owned=True)

    return _make(data, (a,), backward)


def log_softmax(a, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Stable log-softmax of ``a / temperature`` along ``axis``."""
    if temperature <= 0.0:
        raise ParameterError(f"log_softmax temperature must be positive, got {temperature}")
    a = as_tensor(a)
    z = a.data / temperature
    m = z.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))
    data = z - lse
    soft = np.exp(data)

    def backward(g):
        a._accumulate((g - soft * g.sum(axis=axis, keepdims=True)) / temperature, owned=True)

    return _make(data, (a,), backward)


def layer_norm(a, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, a.shape[-1]).sum(axis=0), owned=True)
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, a.shape[-1]).sum(axis=0), owned=True)
        if a.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv * (gx - m1 - xhat * m2), owned=True)

    return _make(data, (a, gamma, beta), backward)


def l2_normalize(a, eps: float = 1e-12) -> Tensor:
    """Scale rows (last axis) to unit Euclidean norm."""
    a = as_tensor(a)
    sq = tsum(mul(a, a), axis=-1, keepdims=True)
    norm = power(add(sq, eps), 0.5)
    return div(a, norm)


# -- interpolation ------------------------------------------------------------


def _lerp_axis(values: np.ndarray, lo: np.ndarray, hi: np.ndarray, frac: np.ndarray, axis: int):
    a = np.take(values, lo, axis=axis)
    b = np.take(values, hi, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = len(frac)
    f = frac.reshape(shape)
    out = a + f * (b - a)
    # exact endpoint handling: frac==1 must yield b, bit for bit
    ones = (f == 1.0)
    if ones.any():
        out = np.where(ones, b, out)
    return out


def _interp_axis_setup(n_in: int, n_out: int):
    if n_out < 1:
        raise ParameterError(f"bilinear_upsample: output extent must be >= 1, got {n_out}")
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.int64), np.zeros(n_out, dtype=np.int64), np.zeros(n_out)
    src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(src).astype(np.int64), n_in - 2)
    frac = src - lo
    return lo, lo + 1, frac


def bilinear_upsample(a, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear interpolation of a 2-d map to (out_h, out_w).

    Corner samples are preserved exactly, and a constant map stays exactly
    constant (the interpolation is computed in a + f*(b-a) form).
    """
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"bilinear_upsample expects a 2-d map, got shape {a.shape}")
    h, w = a.shape
    if h < 1 or w < 1:
        raise ParameterError(f"bilinear_upsample: input must be at least 1x1, got {a.shape}")
    if out_h < h or out_w < w:
        raise ParameterError(
            f"bilinear_upsample: output {out_h}x{out_w} smaller than input {h}x{w}"
        )
    r0, r1, fr = _interp_axis_setup(h, out_h)
    c0, c1, fc = _interp_axis_setup(w, out_w)

    tmp = _lerp_axis(a.data, c0, c1, fc, axis=1)   # (h, out_w)
    data = _lerp_axis(tmp, r0, r1, fr, axis=0)     # (out_h, out_w)

    def backward(g):
        gtmp = np.zeros((h, out_w))
        np.add.at(gtmp, r0, (1.0 - fr)[:, None] * g)
        np.add.at(gtmp, r1, fr[:, None] * g)
        ga = np.zeros((h, w))
        np.add.at(ga.T, c0, ((1.0 - fc)[None, :] * gtmp).T)
        np.add.at(ga.T, c1, (fc[None, :] * gtmp).T)
        a._accumulate(ga, owned=True)

    return _make(data, (a,), backward)
