"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

The graph is recorded dynamically: every op returns a new :class:`DiffTensor`
holding references to its parents and a closure that maps the upstream
gradient to per-parent gradients.  :func:`backward` walks the graph in reverse
topological order and accumulates (``+=``) into the ``grad`` of leaf tensors
that require gradients.

Binary elementwise ops insist on identical shapes; use :func:`broadcast_to`
to expand explicitly.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    pass


class DiffTensor:
    """Dense value with a gradient accumulator."""

    __slots__ = ("data", "_grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        self._grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[DiffTensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = None if value is None else np.array(value, dtype=DTYPE)

    def zero_grad(self) -> None:
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data)

    def __repr__(self) -> str:
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    # operator sugar; python scalars route to scale/shift
    def __add__(self, other):
        if isinstance(other, DiffTensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DiffTensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, DiffTensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DiffTensor):
            return div(self, other)
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def _make(data: np.ndarray, parents: Sequence[DiffTensor], backward_fn: Callable) -> DiffTensor:
    out = DiffTensor.__new__(DiffTensor)
    out.data = data
    out._grad = None
    out.name = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _check_same(a: DiffTensor, b: DiffTensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ----------------------------------------------------------------------------
# graph traversal


def _topo_order(root: DiffTensor) -> list[DiffTensor]:
    order: list[DiffTensor] = []
    seen: set[int] = set()
    stack: list[tuple[DiffTensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: DiffTensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf that requires grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node._grad = g.copy() if node._grad is None else node._grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            prev = pending.get(key)
            pending[key] = pg if prev is None else prev + pg


# ----------------------------------------------------------------------------
# elementwise


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _check_same(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _check_same(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _check_same(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(out, (a, b), lambda g: (g / bd, -g * out / bd))


def neg(a: DiffTensor) -> DiffTensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: DiffTensor, c: float) -> DiffTensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def shift(a: DiffTensor, c: float) -> DiffTensor:
    return _make(a.data + c, (a,), lambda g: (g,))


def relu(a: DiffTensor) -> DiffTensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: DiffTensor) -> DiffTensor:
    x = a.data
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: DiffTensor) -> DiffTensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def prelu(a: DiffTensor, slope: DiffTensor) -> DiffTensor:
    """max(0, x) + slope * min(0, x) with a learnable scalar slope."""
    if slope.size != 1:
        raise ShapeError("prelu: slope must hold a single value")
    x = a.data
    s = float(slope.data.reshape(-1)[0])
    pos = x > 0
    neg_part = np.where(pos, 0.0, x)
    out = np.where(pos, x, s * x)

    def bw(g):
        return g * np.where(pos, 1.0, s), np.array(np.sum(g * neg_part)).reshape(slope.shape)

    return _make(out, (a, slope), bw)


def exp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: DiffTensor) -> DiffTensor:
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def log1p(a: DiffTensor) -> DiffTensor:
    x = a.data
    return _make(np.log1p(x), (a,), lambda g: (g / (1.0 + x),))


def sqrt(a: DiffTensor) -> DiffTensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def square(a: DiffTensor) -> DiffTensor:
    x = a.data
    return _make(x * x, (a,), lambda g: (2.0 * g * x,))


def reciprocal(a: DiffTensor) -> DiffTensor:
    out = 1.0 / a.data
    return _make(out, (a,), lambda g: (-g * out * out,))


def elementwise(op_kind: str, *args, **kwargs) -> DiffTensor:
    """Dispatch by name: relu, sigmoid, tanh, prelu, add, mul, scale."""
    table = {
        "relu": relu,
        "sigmoid": sigmoid,
        "tanh": tanh,
        "prelu": prelu,
        "add": add,
        "mul": mul,
        "sub": sub,
        "div": div,
        "scale": scale,
        "exp": exp,
        "log": log,
        "sqrt": sqrt,
    }
    try:
        fn = table[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    return fn(*args, **kwargs)


# ----------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(out)


def _expand_grad(g: np.ndarray, shape: tuple, axes, keepdims: bool) -> np.ndarray:
    if axes is not None and not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def reduce_sum(a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    axes = _norm_axis(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)
    shape = a.shape
    return _make(np.asarray(out, dtype=DTYPE), (a,), lambda g: (_expand_grad(g, shape, axes, keepdims).copy(),))


def reduce_mean(a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    axes = _norm_axis(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    out = np.mean(a.data, axis=axes, keepdims=keepdims)
    shape = a.shape
    return _make(
        np.asarray(out, dtype=DTYPE), (a,), lambda g: (_expand_grad(g, shape, axes, keepdims) / count,)
    )


def reduce_sq_l2(a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    axes = _norm_axis(axis, a.ndim)
    x = a.data
    out = np.sum(x * x, axis=axes, keepdims=keepdims)
    shape = a.shape
    return _make(
        np.asarray(out, dtype=DTYPE), (a,), lambda g: (2.0 * _expand_grad(g, shape, axes, keepdims) * x,)
    )


def reduce(op_kind: str, a: DiffTensor, axis=None, keepdims: bool = False) -> DiffTensor:
    table = {"sum": reduce_sum, "mean": reduce_mean, "sq_l2": reduce_sq_l2}
    try:
        fn = table[op_kind]
    except KeyError:
        raise ValueError(f"unknown reduction {op_kind!r}") from None
    return fn(a, axis, keepdims)


# ----------------------------------------------------------------------------
# shape manipulation


def reshape(a: DiffTensor, shape) -> DiffTensor:
    orig = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def transpose(a: DiffTensor, axes=None) -> DiffTensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def getitem(a: DiffTensor, index) -> DiffTensor:
    shape = a.shape
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(a.data[index], dtype=DTYPE), (a,), bw)


def broadcast_to(a: DiffTensor, shape) -> DiffTensor:
    shape = tuple(shape)
    src = a.shape
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {src} to {shape}") from None
    lead = len(shape) - len(src)

    def bw(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(src) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return _make(np.ascontiguousarray(out), (a,), bw)


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, bw)


def stack(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(out, tensors, bw)


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """2-D matrix product (leading batch dims on ``a`` allowed)."""
    ad, bd = a.data, b.data
    if bd.ndim != 2 or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(ad @ bd, (a, b), bw)


# ----------------------------------------------------------------------------
# 1-D convolution


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    lead = x.shape[:-2]
    return x.reshape((-1,) + x.shape[-2:]), lead


def conv1d(
    input: DiffTensor,
    kernel: DiffTensor,
    stride: int = 1,
    dilation: int = 1,
    causal: bool = False,
) -> DiffTensor:
    """Cross-correlation over the last axis.

    ``input`` is ``[..., channels_in, time]`` and ``kernel`` is
    ``[channels_out, channels_in, width]``.  With ``causal`` the input is
    left-padded by ``(width - 1) * dilation`` zeros so the output length
    equals the input length (for stride 1).
    """
    if stride < 1 or dilation < 1:
        raise ValueError(f"conv1d: stride and dilation must be >= 1 (got {stride}, {dilation})")
    if kernel.ndim != 3 or input.ndim < 2:
        raise ShapeError(f"conv1d: bad ranks input {input.shape}, kernel {kernel.shape}")
    c_out, c_in, width = kernel.shape
    if input.shape[-2] != c_in:
        raise ShapeError(f"conv1d: kernel expects {c_in} input channels, got {input.shape[-2]}")
    x, lead = _as_batched(input.data)
    n_batch, _, t_in = x.shape
    pad = (width - 1) * dilation if causal else 0
    span = (width - 1) * dilation + 1
    t_out = (t_in + pad - span) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d: input length {t_in} shorter than kernel span {span}")
    xp = np.concatenate([np.zeros((n_batch, c_in, pad)), x], axis=-1) if pad else x
    w2 = kernel.data.reshape(c_out, c_in * width)
    stop = stride * (t_out - 1) + 1
    if width == 1 and stride == 1:
        cols = xp[..., :t_out]
    else:
        cols = np.stack([xp[:, :, k * dilation : k * dilation + stop : stride] for k in range(width)], axis=2)
        cols = cols.reshape(n_batch, c_in * width, t_out)
    out = np.matmul(w2, cols)

    def bw(g):
        g = g.reshape(n_batch, c_out, t_out)
        gk = None
        if kernel.requires_grad:
            gk = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(kernel.shape)
        gx = None
        if input.requires_grad:
            gcols = np.matmul(w2.T, g)
            if width == 1 and stride == 1:
                gxp = gcols
            else:
                gcols = gcols.reshape(n_batch, c_in, width, t_out)
                gxp = np.zeros_like(xp)
                for k in range(width):
                    gxp[:, :, k * dilation : k * dilation + stop : stride] += gcols[:, :, k]
            gx = gxp[..., pad:].reshape(input.shape)
        return gx, gk

    return _make(out.reshape(lead + (c_out, t_out)), (input, kernel), bw)


def conv_transpose1d(
    input: DiffTensor,
    kernel: DiffTensor,
    stride: int = 1,
    output_length: int | None = None,
) -> DiffTensor:
    """Adjoint of :func:`conv1d` with the same ``[c_out, c_in, width]`` kernel.

    Maps ``[..., c_out, frames]`` to ``[..., c_in, (frames - 1) * stride + width]``
    by overlap-add.  ``output_length`` trims or zero-pads the tail.
    """
    if stride < 1:
        raise ValueError(f"conv_transpose1d: stride must be >= 1 (got {stride})")
    if kernel.ndim != 3 or input.ndim < 2:
        raise ShapeError(f"conv_transpose1d: bad ranks input {input.shape}, kernel {kernel.shape}")
    c_out, c_in, width = kernel.shape
    if input.shape[-2] != c_out:
        raise ShapeError(f"conv_transpose1d: kernel expects {c_out} channels, got {input.shape[-2]}")
    y, lead = _as_batched(input.data)
    n_batch, _, frames = y.shape
    full = (frames - 1) * stride + width
    length = full if output_length is None else int(output_length)
    w2 = kernel.data.reshape(c_out, c_in * width)
    cols = np.matmul(w2.T, y).reshape(n_batch, c_in, width, frames)
    buf = np.zeros((n_batch, c_in, max(full, length)))
    stop = stride * (frames - 1) + 1
    for k in range(width):
        buf[:, :, k : k + stop : stride] += cols[:, :, k]
    out = buf[..., :length]

    def bw(g):
        g = g.reshape(n_batch, c_in, length)
        if length < full:
            g = np.concatenate([g, np.zeros((n_batch, c_in, full - length))], axis=-1)
        gcols = np.stack([g[:, :, k : k + stop : stride] for k in range(width)], axis=2)
        gcols = gcols.reshape(n_batch, c_in * width, frames)
        gy = np.matmul(w2, gcols).reshape(input.shape)
        gk = np.tensordot(y, gcols, axes=([0, 2], [0, 2])).reshape(kernel.shape)
        return gy, gk

    return _make(np.ascontiguousarray(out).reshape(lead + (c_in, length)), (input, kernel), bw)


# ----------------------------------------------------------------------------
# fused layers


def channel_layer_norm(x: DiffTensor, gain: DiffTensor, bias: DiffTensor, eps: float = 1e-5) -> DiffTensor:
    """Normalize ``[..., channels, time]`` across channels at each frame.

    Statistics never mix frames, so the op is safe inside causal stacks.
    """
    c = x.shape[-2]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"channel_layer_norm: gain/bias must have shape ({c},)")
    xd = x.data
    mu = xd.mean(axis=-2, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-2, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data[:, None]
    out = gd * xhat + bias.data[:, None]

    def bw(g):
        red = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
        ggain = np.sum(g * xhat, axis=red)
        gbias = np.sum(g, axis=red)
        gh = g * gd
        gx = inv * (gh - gh.mean(axis=-2, keepdims=True) - xhat * (gh * xhat).mean(axis=-2, keepdims=True))
        return gx, ggain, gbias

    return _make(out, (x, gain, bias), bw)


def cross_entropy(logits: DiffTensor, labels) -> DiffTensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=int)
    z = logits.data
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError(f"cross_entropy: logits {z.shape} vs labels {labels.shape}")
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    loss = -logp[rows, labels].mean()

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / z.shape[0],)

    return _make(np.asarray(loss), (logits,), bw)


# ----------------------------------------------------------------------------
# parameters and optimizer


class ParameterStore:
    """Named trainable tensors plus Adam state."""

    def __init__(self):
        self.params: dict[str, DiffTensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> DiffTensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = DiffTensor(value, requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> DiffTensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False

    def num_values(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: self.params[k].data.copy() for k in self.names()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, arr in arrays.items():
            if self.params[k].shape != arr.shape:
                raise ShapeError(f"parameter {k!r}: shape {arr.shape} != {self.params[k].shape}")
            self.params[k].data = np.array(arr, dtype=DTYPE)


def adam_step(
    store: ParameterStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update.  Gradients are left in place."""
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive (got {lr})")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        if not p.requires_grad:
            continue
        g = p.grad
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
