"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a C-contiguous numpy array. Every op returns a new
tensor that owns its buffer and remembers its parents plus a closure mapping
the output gradient to parent gradients. Node ids increase with creation, so
sorting reachable nodes by id gives a valid reverse topological order.

Broadcasting is deliberately absent: binary ops require identical shapes
(Python scalars excepted). The only broadcast forms are the named ones,
``channel_mul``, ``channel_affine``, ``linear`` and ``conv2d`` biases.
"""
from __future__ import annotations

import contextlib
import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError

_ids = itertools.count()
FLOAT_TYPES = {"float32": np.float32, "float64": np.float64, "longdouble": np.longdouble}
_dtype = np.float32
_grad_enabled = True
_kink_log: list | None = None


def get_dtype():
    return _dtype


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default float type.

    ``"float32"`` and ``"float64"`` are the working precisions; ``"longdouble"``
    exists for extended-precision finite-difference references.
    """
    global _dtype
    previous = _dtype
    _dtype = FLOAT_TYPES[name]
    try:
        yield
    finally:
        _dtype = previous


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


@contextlib.contextmanager
def record_kinks():
    """Collect the branch pattern of every piecewise op executed inside.

    Yields a list that receives one boolean array per relu/clamp call; the
    gradient checker compares patterns to discard perturbations that cross
    a non-differentiable point.
    """
    global _kink_log
    previous = _kink_log
    _kink_log = []
    try:
        yield _kink_log
    finally:
        _kink_log = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64, np.longdouble):
            arr = arr.astype(_dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._id = next(_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # arithmetic sugar; all same-shape or scalar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -other if not isinstance(other, Tensor) else neg(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor / tensor is not supported; divide by a Python scalar")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=_dtype), requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else tensor(x)


def _result(data, parents: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- backward


def backward(loss: Tensor):
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in nodes:
            continue
        nodes[node._id] = node
        stack.extend(node._parents)
    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = grads.pop(node_id, None)
        if node._backward is None:
            if node.requires_grad:
                if g is None:
                    g = np.zeros_like(node.data)
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not (parent.requires_grad or parent._backward is not None):
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        return _result(a.data + a.data.dtype.type(b), (a,), lambda g: (g,))
    _same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        s = a.data.dtype.type(b)
        return _result(a.data * s, (a,), lambda g: (g * s,))
    _same_shape("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form never overflows
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    s = s.astype(x.dtype, copy=False)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    if _kink_log is not None:
        _kink_log.append(mask)
    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    if _kink_log is not None:
        _kink_log.append(inside)
    return _result(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


# ---------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                   lambda g: (np.full_like(x.data, g.reshape(()) if g.ndim else g),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    return _result(np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                   lambda g: (np.full_like(x.data, g.reshape(()) / n),))


def mean_axis(x: Tensor, axis: int) -> Tensor:
    """Mean over one axis, which is removed from the result."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"mean_axis: axis {axis} invalid for shape {x.shape}")
    axis %= x.data.ndim
    n = x.shape[axis]

    def grad_fn(g):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return _result(x.data.mean(axis=axis), (x,), grad_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool expects [B,C,H,W], got {x.shape}")
    b, c, h, w = x.shape
    return _result(x.data.mean(axis=(2, 3)), (x,),
                   lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),))


# ---------------------------------------------------------------- shape ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if -1 in shape:
        known = math.prod(s for s in shape if s != -1)
        shape = tuple(x.size // known if s == -1 else s for s in shape)
    if math.prod(shape) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    return _result(x.data.reshape(shape).copy(), (x,), lambda g: (g.reshape(x.shape),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of {x.data.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    ref = tensors[0].shape
    axis %= len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis):
            raise DimensionError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    if len(tensors) == 1:
        return _result(tensors[0].data.copy(), tensors, lambda g: (g,))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                   lambda g: tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join same-shaped tensors along a new axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack of an empty list")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise DimensionError(f"stack: shapes {tensors[0].shape} and {t.shape} differ")
    n = len(tensors)
    return _result(np.stack([t.data for t in tensors], axis=axis), tensors,
                   lambda g: tuple(np.ascontiguousarray(np.take(g, i, axis=axis)) for i in range(n)))


def split_axis0(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Slice ``x`` into consecutive chunks along axis 0."""
    if sum(sizes) != x.shape[0]:
        raise DimensionError(f"split_axis0: sizes {list(sizes)} do not cover {x.shape[0]}")
    out = []
    start = 0
    for n in sizes:
        lo, hi = start, start + n

        def grad_fn(g, lo=lo, hi=hi):
            full = np.zeros_like(x.data)
            full[lo:hi] = g
            return (full,)

        out.append(_result(x.data[lo:hi].copy(), (x,), grad_fn))
        start = hi
    return out


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dims differ, {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def grad_fn(g):
        return np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)

    return _result(np.matmul(a.data, b.data), (a, b), grad_fn)


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    return _result(s, (x,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` for x [B,K], weight [K,N], bias [N]."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")

    def grad_fn(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return _result(x.data @ weight.data + bias.data, (x, weight, bias), grad_fn)


def channel_mul(x: Tensor, w: Tensor) -> Tensor:
    """Scale each [H,W] plane of x [B,C,H,W] by w [B,C]."""
    if x.data.ndim != 4 or w.shape != x.shape[:2]:
        raise DimensionError(f"channel_mul: weights {w.shape} do not match features {x.shape}")
    w4 = w.data[:, :, None, None]
    return _result(x.data * w4, (x, w),
                   lambda g: (g * w4, (g * x.data).sum(axis=(2, 3))))


def channel_affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Per-channel ``scale * x + shift`` for x [B,C,H,W], scale/shift [C]."""
    c = x.shape[1]
    if x.data.ndim != 4 or scale.shape != (c,) or shift.shape != (c,):
        raise DimensionError(f"channel_affine: {scale.shape}/{shift.shape} vs features {x.shape}")
    s4 = scale.data[None, :, None, None]
    return _result(x.data * s4 + shift.data[None, :, None, None], (x, scale, shift),
                   lambda g: (g * s4, (g * x.data).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding, via im2col and one matmul."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    b, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise DimensionError(f"conv2d: input {x.shape} has {c} channels, weight {weight.shape} expects {ci}")
    if bias.shape != (o,):
        raise DimensionError(f"conv2d: bias {bias.shape} does not match weight {weight.shape}")
    if stride < 1 or kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} stride {stride} pad {padding} invalid for {x.shape}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    pointwise = kh == kw == 1 and stride == 1 and padding == 0
    if pointwise:
        cols = x.data.reshape(b, c, h * w)
    else:
        cols = kernels.im2col(x.data, kh, kw, stride, padding)
    w2 = weight.data.reshape(o, -1)
    out = np.matmul(w2, cols) + bias.data[None, :, None]

    def grad_fn(g):
        g = g.reshape(b, o, ho * wo)
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        gcols = np.matmul(w2.T, g)
        if pointwise:
            gx = gcols.reshape(x.shape)
        else:
            gx = kernels.col2im(gcols, x.shape, kh, kw, stride, padding)
        return gx, gw, g.sum(axis=(0, 2))

    return _result(out.reshape(b, o, ho, wo), (x, weight, bias), grad_fn)


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize (align_corners=False) to a size at least the input's."""
    if x.data.ndim != 4:
        raise DimensionError(f"bilinear_upsample expects [B,C,H,W], got {x.shape}")
    h, w = x.shape[2:]
    if out_h < h or out_w < w:
        raise DimensionError(f"bilinear_upsample: target {out_h}x{out_w} smaller than input {h}x{w}")
    if (out_h, out_w) == (h, w):
        return _result(x.data.copy(), (x,), lambda g: (g,))
    return _result(kernels.upsample_bilinear(x.data, out_h, out_w), (x,),
                   lambda g: (kernels.upsample_bilinear_backward(g, h, w),))


# ---------------------------------------------------------------- helpers


def parameters_numel(params: Iterable[Tensor]) -> int:
    return sum(p.size for p in params)
