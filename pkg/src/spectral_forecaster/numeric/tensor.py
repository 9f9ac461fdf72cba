"""Reverse-mode automatic differentiation over float64 numpy storage.

A :class:`Tensor` wraps an ndarray together with an optional :class:`TapeNode`
recording the op that produced it. ``backward`` walks the recorded graph once
in reverse topological order, accumulates gradients into ``requires_grad``
leaves, and frees the tape as it goes; calling it twice on the same loss is
an error. Ops are module-level functions; arithmetic operators delegate to
them. Everything stays in float64, and spectra live as ``(re, im)`` tensor
pairs so the whole graph is real-valued.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf as _erf

from ..errors import NumericError
from .fft import irfft_kernel, n_bins, rfft_kernel

__all__ = [
    "Tensor",
    "Parameter",
    "TapeNode",
    "no_grad",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "swapaxes",
    "reshape",
    "flatten",
    "sum",
    "mean",
    "var",
    "sqrt",
    "exp",
    "relu",
    "gelu",
    "softmax",
    "rfft",
    "irfft",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation-only forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class TapeNode:
    """One recorded op: its parents and the rule mapping output grad to parent grads."""

    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op, parents, backward_fn):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    """Float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "node", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericError("tensor data must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None
        self._backward_done = False

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

    def detach(self) -> "Tensor":
        """A view of the same data, cut off from the tape."""
        return _make(self.data, requires_grad=False)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)


class Parameter(Tensor):
    """Trainable leaf tensor; modules collect these by attribute name."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def _make(data: np.ndarray, requires_grad: bool = False) -> Tensor:
    # internal fast path: ops already guarantee float64 contents
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = requires_grad
    t.node = None
    t._backward_done = False
    return t


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.node is not None


def _from_op(data: np.ndarray, op: str, parents: tuple, backward_fn) -> Tensor:
    if _grad_enabled and any(_tracked(p) for p in parents):
        out = _make(data, requires_grad=True)
        out.node = TapeNode(op, parents, backward_fn)
        return out
    return _make(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf, then free the tape."""
    if loss.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise ValueError("backward was already called on this loss; build a fresh graph")
    loss._backward_done = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if id(p) not in seen and _tracked(p):
                    stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for t in reversed(topo):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            continue
        parent_grads = t.node.backward_fn(g)
        for p, pg in zip(t.node.parents, parent_grads):
            if pg is None or not _tracked(p):
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        t.node = None


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _from_op(out, "add", (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(np.negative(g), b.shape)

    return _from_op(out, "sub", (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _from_op(out, "mul", (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _from_op(out, "div", (a, b), bwd)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        return (np.negative(g),)

    return _from_op(np.negative(a.data), "neg", (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs at least 2-D operands, got {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _from_op(out, "matmul", (a, b), bwd)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    perm = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(perm))

    def bwd(g):
        return (np.transpose(g, inv),)

    return _from_op(np.transpose(a.data, perm), "transpose", (a,), bwd)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = _wrap(a)
    perm = list(range(a.ndim))
    perm[ax1], perm[ax2] = perm[ax2], perm[ax1]
    return transpose(a, perm)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    orig = a.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _from_op(a.data.reshape(shape), "reshape", (a,), bwd)


def flatten(a, start_axis: int = 0) -> Tensor:
    """Collapse all axes from ``start_axis`` on into one."""
    a = _wrap(a)
    return reshape(a, a.shape[:start_axis] + (-1,))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _from_op(out, "sum", (a,), bwd)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _from_op(out, "mean", (a,), bwd)


def var(a, axis=None, keepdims: bool = False) -> Tensor:
    """Population variance (divides by the count, not count - 1)."""
    a = _wrap(a)
    centered = sub(a, mean(a, axis=axis, keepdims=True))
    return mean(mul(centered, centered), axis=axis, keepdims=keepdims)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.data)

    def bwd(g):
        return (g * 0.5 / out,)

    return _from_op(out, "sqrt", (a,), bwd)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _from_op(out, "exp", (a,), bwd)


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _from_op(np.where(mask, a.data, 0.0), "relu", (a,), bwd)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact gaussian-error-linear unit, 0.5 * x * (1 + erf(x / sqrt(2)))."""
    a = _wrap(a)
    cdf = 0.5 * (1.0 + _erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def bwd(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
        return (g * (cdf + a.data * pdf),)

    return _from_op(out, "gelu", (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _from_op(out, "softmax", (a,), bwd)


def _rfft_grad_scale(n: int) -> np.ndarray:
    # interior bins appear twice in the implied full spectrum, endpoints once
    w = np.full(n_bins(n), 0.5 * n)
    w[0] = n
    if n % 2 == 0:
        w[-1] = n
    return w


def rfft(a) -> tuple[Tensor, Tensor]:
    """Half-complex transform along the last axis, as a (re, im) tensor pair.

    The adjoint of each output is an inverse transform of the upstream
    gradient with endpoint bins weighted once and interior bins twice.
    """
    a = _wrap(a)
    n = a.shape[-1]
    re, im = rfft_kernel(a.data)
    scale = _rfft_grad_scale(n)
    zeros = np.zeros_like(re)

    def bwd_re(g):
        out, _ = irfft_kernel(g * scale, zeros, n)
        return (out,)

    def bwd_im(g):
        out, _ = irfft_kernel(zeros, g * scale, n)
        return (out,)

    re_t = _from_op(re, "rfft_re", (a,), bwd_re)
    im_t = _from_op(im, "rfft_im", (a,), bwd_im)
    return re_t, im_t


def irfft(re, im, n: int) -> Tensor:
    """Inverse half-complex transform back to ``n`` real samples.

    The adjoint is a forward transform of the upstream gradient, scaled by
    1/n at the endpoint bins and 2/n in the interior (imaginary endpoint
    slots are structurally zero and receive no gradient).
    """
    re, im = _wrap(re), _wrap(im)
    if re.shape != im.shape:
        raise ValueError(f"re/im shape mismatch: {re.shape} vs {im.shape}")
    out, _residual = irfft_kernel(re.data, im.data, n)
    scale = _rfft_grad_scale(n)

    def bwd(g):
        gre, gim = rfft_kernel(g)
        return gre / scale, gim / scale

    return _from_op(out, "irfft", (re, im), bwd)
