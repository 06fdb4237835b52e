"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients remember their parents and a backward rule; :func:`backward`
replays those rules in reverse topological order (a :class:`ComputationRecord`).

Arithmetic is 32-bit by default. Wrap gradient checks in
``with precision(np.float64):`` so newly created tensors are 64-bit.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


_STATE = {"grad": True, "dtype": np.float32}


@contextlib.contextmanager
def no_grad():
    prev = _STATE["grad"]
    _STATE["grad"] = False
    try:
        yield
    finally:
        _STATE["grad"] = prev


@contextlib.contextmanager
def precision(dtype):
    """Set the dtype used for tensors created inside the block."""
    prev = _STATE["dtype"]
    _STATE["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _STATE["dtype"] = prev


def default_dtype():
    return _STATE["dtype"]


def grad_enabled() -> bool:
    return _STATE["grad"]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            is_float_array = isinstance(data, np.ndarray) and data.dtype.kind == "f"
            dtype = data.dtype if is_float_array else default_dtype()
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """Trainable leaf tensor.

    ``exempt`` marks biases and normalization parameters: they skip
    layer-wise rate adaptation and weight decay in the optimizer.
    """

    __slots__ = ("trainable", "exempt")

    def __init__(self, data, trainable: bool = True, exempt: bool = False, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.trainable = trainable
        self.exempt = exempt

    @property
    def gradient(self) -> np.ndarray:
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def assign(self, value):
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ShapeError(f"assign: parameter shape {self.shape} vs value {value.shape}")
        self.data = np.ascontiguousarray(value)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _check_finite(op: str, arr: np.ndarray):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: produced non-finite values")


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    _check_finite(op, data)
    out = Tensor(data)
    out.op = op
    if _STATE["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_operands(op: str, a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        b = as_tensor(b)
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    return a, b


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _binary_operands("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _binary_operands("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _binary_operands("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _binary_operands("div", a, b)
    out = a.data / b.data

    def backward(g):
        gb = g / b.data
        return _unbroadcast(gb, a.shape), _unbroadcast(-gb * out, b.shape)

    return _make("div", out, (a, b), backward)


def affine(x, scale: float, shift: float = 0.0) -> Tensor:
    """``scale * x + shift`` with scalar coefficients."""
    x = as_tensor(x)

    def backward(g):
        return (g * scale,)

    return _make("affine", x.data * x.dtype.type(scale) + x.dtype.type(shift), (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _make("exp", out, (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def backward(g):
        return (g / x.data,)

    return _make("log", out, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _make("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), backward)


def softplus(x) -> Tensor:
    """Numerically stable ``log(1 + exp(x))``."""
    x = as_tensor(x)
    out = np.logaddexp(0, x.data).astype(x.dtype)

    def backward(g):
        return (g / (1 + np.exp(-x.data)),)

    return _make("softplus", out, (x,), backward)


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        return (g * inside,)

    return _make("clip", np.clip(x.data, lo, hi), (x,), backward)


# ------------------------------------------------------------------- linear


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make("matmul", a.data @ b.data, (a, b), backward)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of an NCHW input with an (O, C, kh, kw) kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho = kernels.conv_out_size(h, kh, stride, padding)
    wo = kernels.conv_out_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {weight.shape}")
    cols = kernels.im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} vs {o} output channels")
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = kernels.col2im(gmat @ wmat, x.shape, kh, kw, stride, padding) if x.requires_grad else None
        gw = (gmat.T @ cols).reshape(weight.shape)
        if bias is None:
            return gx, gw
        return gx, gw, gmat.sum(axis=0)

    return _make("conv2d", out, parents, backward)


def avg_pool2d(x, kernel: int, stride: int | None = None) -> Tensor:
    x = as_tensor(x)
    stride = stride or kernel
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2d: expected NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    ho = kernels.conv_out_size(h, kernel, stride, 0)
    wo = kernels.conv_out_size(w, kernel, stride, 0)
    if ho < 1 or wo < 1:
        raise ShapeError(f"avg_pool2d: input {x.shape} too small for kernel {kernel}")
    flat = x.data.reshape(n * c, 1, h, w)
    cols = kernels.im2col(flat, kernel, kernel, stride, 0)
    out = cols.mean(axis=1).reshape(n, c, ho, wo)
    area = kernel * kernel

    def backward(g):
        gcols = np.repeat(g.reshape(-1, 1) / area, area, axis=1).astype(g.dtype)
        return (kernels.col2im(gcols, flat.shape, kernel, kernel, stride, 0).reshape(x.shape),)

    return _make("avg_pool2d", out, (x,), backward)


def global_avg_pool(x) -> Tensor:
    """Mean over the spatial axes of an NCHW tensor, giving N x C."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NCHW input, got {x.shape}")
    return mean(x, axis=(2, 3))


def _resize_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    # half-pixel centres, edges clamped
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m.astype(dtype)


_RESIZE_CACHE: dict = {}


def resize_matrix(n_in: int, n_out: int, dtype=np.float32) -> np.ndarray:
    key = (n_in, n_out, np.dtype(dtype).str)
    m = _RESIZE_CACHE.get(key)
    if m is None:
        m = _RESIZE_CACHE[key] = _resize_matrix(n_in, n_out, dtype)
    return m


def resize_array(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of the last two axes of a plain array."""
    h, w = arr.shape[-2:]
    oh, ow = size
    if (h, w) == (oh, ow):
        return arr.copy()
    ry = resize_matrix(h, oh, arr.dtype)
    rx = resize_matrix(w, ow, arr.dtype)
    return np.ascontiguousarray(ry @ arr @ rx.T)


def resize_bilinear(x, size: tuple[int, int]) -> Tensor:
    """Bilinear resize of the trailing H, W axes (half-pixel centres, clamped edges)."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"resize_bilinear: need at least 2 axes, got {x.shape}")
    h, w = x.shape[-2:]
    oh, ow = int(size[0]), int(size[1])
    if oh < 1 or ow < 1:
        raise ShapeError(f"resize_bilinear: invalid target size {size}")
    ry = resize_matrix(h, oh, x.dtype)
    rx = resize_matrix(w, ow, x.dtype)
    out = np.ascontiguousarray(ry @ x.data @ rx.T)

    def backward(g):
        return (ry.T @ g @ rx,)

    return _make("resize_bilinear", out, (x,), backward)


# --------------------------------------------------------------- structural


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", out, tensors, backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _make("reshape", out, (x,), backward)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return _make("transpose", out, (x,), backward)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    out = np.ascontiguousarray(x.data[idx])

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make("getitem", out, (x,), backward)


# --------------------------------------------------------------- reductions


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", out, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.asarray(x.data.mean(axis=axes, keepdims=keepdims))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make("mean", out, (x,), backward)


def l2norm(x, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm over ``axis``; the gradient at a zero vector is taken as 0."""
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out_k = np.sqrt((x.data * x.data).sum(axis=axes, keepdims=True))
    out = out_k if keepdims else np.squeeze(out_k, axis=axes)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        safe = np.where(out_k > 0, out_k, 1)
        return (np.where(out_k > 0, g * x.data / safe, 0).astype(x.dtype),)

    return _make("l2norm", np.asarray(out), (x,), backward)


# -------------------------------------------------------------- instance stats


def instance_stats(x) -> tuple[Tensor, Tensor]:
    """Per-channel mean and population std over the two trailing spatial axes.

    Accepts C x H x W or N x C x H x W; returns tensors of shape C (or N x C).
    """
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise ShapeError(f"instance_stats: expected CHW or NCHW input, got {x.shape}")
    hw = x.shape[-1] * x.shape[-2]
    if hw < 1:
        raise ShapeError(f"instance_stats: empty spatial support {x.shape}")
    mu = mean(x, axis=(-2, -1), keepdims=True)
    centered = sub(x, mu)
    std = affine(l2norm(centered, axis=(-2, -1)), 1.0 / math.sqrt(hw))
    return reshape(mu, mu.shape[:-2]), std


# ---------------------------------------------------------------- backward


class ComputationRecord:
    """Reverse topological order of the primitives that produced ``root``.

    Each primitive appears once, so a backward replay visits it exactly once.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.nodes.reverse()

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def replay(self, seed_grad: np.ndarray) -> list[Tensor]:
        grads: dict[int, np.ndarray] = {id(self.root): seed_grad}
        visited = []
        for node in self.nodes:
            g = grads.pop(id(node), None)
            visited.append(node)
            if node._backward is None:
                # leaf: accumulate
                if g is not None:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if g is None:
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=p.dtype)
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
        return visited


def backward(root: Tensor, grad=None) -> ComputationRecord:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every contributing leaf."""
    if not root.requires_grad:
        raise ValueError("backward: tensor does not require grad")
    if grad is None:
        if root.data.size != 1:
            raise ShapeError(f"backward: implicit seed needs a scalar, got {root.shape}")
        grad = np.ones_like(root.data)
    record = ComputationRecord(root)
    record.replay(np.asarray(grad, dtype=root.dtype))
    return record


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "affine": affine,
    "exp": exp,
    "log": log,
    "relu": relu,
    "softplus": softplus,
    "clip": clip,
    "matmul": matmul,
    "conv2d": conv2d,
    "avg_pool2d": avg_pool2d,
    "global_avg_pool": global_avg_pool,
    "resize_bilinear": resize_bilinear,
    "concat": concat,
    "reshape": reshape,
    "transpose": transpose,
    "getitem": getitem,
    "sum": sum_,
    "mean": mean,
    "l2norm": l2norm,
}


def diff_primitive_set() -> dict[str, Callable]:
    """Catalog of differentiable primitives, keyed by name."""
    return dict(PRIMITIVES)
