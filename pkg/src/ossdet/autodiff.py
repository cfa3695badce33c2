"""Dense 4-D tensors with reverse-mode automatic differentiation.

Every tensor has shape (n, c, h, w) and dtype float64; scalars are
(1, 1, 1, 1). Operations record their inputs and a backward closure on the
output; ``backward`` replays the records in strict reverse creation order,
so each node is visited exactly once. The operator set is closed: only what
the detection model needs, no general broadcasting engine (per-axis size-1
broadcasting only).

A graph and its tensors are confined to one thread. Distinct graphs may run
on distinct threads; parameters must be copied, never shared.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Param",
    "ParamStore",
    "Graph",
    "ShapeError",
    "add",
    "sub",
    "mul",
    "div",
    "affine",
    "sigmoid",
    "tanh",
    "relu",
    "pointwise",
    "softplus",
    "sqrt",
    "l2_norm",
    "smooth_l1",
    "pool",
    "upsample2x",
    "conv2d",
    "fc",
    "matmul",
    "transpose_hw",
    "reshape",
    "softmax",
    "concat_channels",
    "slice_channels",
    "shift2d",
    "reduce_sum",
    "mean_all",
    "backward",
    "grad_check",
    "GradCheckReport",
]

_NODE_IDS = itertools.count()

# Test hook: maps op name -> multiplicative factor applied to its input
# gradients. Used by the verification suite's negative control.
_CORRUPT_BACKWARD: dict[str, float] = {}


def _set_backward_corruption(op: str | None, factor: float = 1.05) -> None:
    _CORRUPT_BACKWARD.clear()
    if op is not None:
        _CORRUPT_BACKWARD[op] = factor


if os.environ.get("OSSDET_CORRUPT_BACKWARD"):
    _set_backward_corruption(os.environ["OSSDET_CORRUPT_BACKWARD"])


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def _as4d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"tensors are 4-D (n,c,h,w); got ndim={arr.ndim} shape={arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """A 4-D float64 array plus its place in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd", "_op", "_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as4d(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._bwd = None
        self._op = "leaf"
        self._id = next(_NODE_IDS)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=np.float64), requires_grad)

    @staticmethod
    def full(shape, value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full(shape, value, dtype=np.float64), requires_grad)

    @staticmethod
    def scalar(value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value, dtype=np.float64), requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other, self)) if not isinstance(other, Tensor) else add(self, other)

    def __sub__(self, other):
        return sub(self, _lift(other, self)) if not isinstance(other, Tensor) else sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return affine(self, scale=float(other))

    def __rmul__(self, other):
        return affine(self, scale=float(other))

    def __neg__(self):
        return affine(self, scale=-1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return affine(self, scale=1.0 / float(other))


def _lift(value, like: Tensor) -> Tensor:
    return Tensor.scalar(float(value)) if np.isscalar(value) else Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], bwd, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if out.data.ndim != 4:
        raise ShapeError(f"internal: op {op} produced ndim={out.data.ndim}")
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = parents if out.requires_grad else ()
    out._bwd = bwd if out.requires_grad else None
    out._op = op
    out._id = next(_NODE_IDS)
    return out


def _bcast_shape(sa, sb, op: str):
    out = []
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: shapes {sa} and {sb} do not align")
        out.append(max(da, db))
    return tuple(out)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    axes = tuple(i for i in range(4) if shape[i] == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise arithmetic (per-axis size-1 broadcasting only)
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _bcast_shape(a.shape, b.shape, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _bcast_shape(a.shape, b.shape, "sub")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _bcast_shape(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _node(ad * bd, (a, b), bwd, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _bcast_shape(a.shape, b.shape, "div")
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g / bd, a.shape), _unbroadcast(-g * ad / (bd * bd), b.shape)

    return _node(ad / bd, (a, b), bwd, "div")


def affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    def bwd(g):
        return (g * scale,)

    return _node(x.data * scale + shift, (x,), bwd, "affine")


# ---------------------------------------------------------------------------
# Pointwise nonlinearities
# ---------------------------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        gx = g * out * (1.0 - out)
        if "sigmoid" in _CORRUPT_BACKWARD:
            gx = gx * _CORRUPT_BACKWARD["sigmoid"]
        return (gx,)

    return _node(out, (x,), bwd, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        gx = g * (1.0 - out * out)
        if "tanh" in _CORRUPT_BACKWARD:
            gx = gx * _CORRUPT_BACKWARD["tanh"]
        return (gx,)

    return _node(out, (x,), bwd, "tanh")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g):
        return (g * mask,)

    return _node(np.where(mask, x.data, 0.0), (x,), bwd, "relu")


_POINTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def pointwise(x: Tensor, kind: str) -> Tensor:
    if kind not in _POINTWISE:
        raise ValueError(f"unknown pointwise kind {kind!r}; one of {sorted(_POINTWISE)}")
    return _POINTWISE[kind](x)


def softplus(x: Tensor) -> Tensor:
    # log(1 + exp(x)) in the overflow-safe form max(x, 0) + log1p(exp(-|x|))
    out = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    xd = x.data

    def bwd(g):
        s = np.empty_like(xd)
        pos = xd >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
        ex = np.exp(xd[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _node(out, (x,), bwd, "softplus")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def bwd(g):
        # Zero inputs carry zero gradient (subgradient convention); avoids
        # 0/0 when an operand is identically zero, e.g. self-distances.
        denom = np.where(out == 0.0, 1.0, out)
        return (np.where(out == 0.0, 0.0, 0.5 * g / denom),)

    return _node(out, (x,), bwd, "sqrt")


def l2_norm(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    """sqrt(sum(x^2)) over ``axes`` (keepdims), as one fused op.

    Fusing keeps the backward bounded: the gradient x / max(norm, floor)
    never exceeds 1 in magnitude, whereas sqrt-of-sum-of-squares composed
    from separate ops overflows when the norm underflows.
    """
    axes = tuple(sorted(set(int(a) for a in axes)))
    out = np.sqrt((x.data * x.data).sum(axis=axes, keepdims=True))
    xd = x.data

    def bwd(g):
        return (g * xd / np.maximum(out, 1e-12),)

    return _node(out, (x,), bwd, "l2_norm")


def smooth_l1(x: Tensor) -> Tensor:
    a = np.abs(x.data)
    out = np.where(a < 1.0, 0.5 * x.data * x.data, a - 0.5)
    xd = x.data

    def bwd(g):
        return (g * np.clip(xd, -1.0, 1.0),)

    return _node(out, (x,), bwd, "smooth_l1")


# ---------------------------------------------------------------------------
# Pooling / resampling
# ---------------------------------------------------------------------------


def pool(x: Tensor, kind: str) -> Tensor:
    if kind == "gap":
        n, c, h, w = x.shape
        out = x.data.mean(axis=(2, 3), keepdims=True)

        def bwd(g):
            return (np.broadcast_to(g / (h * w), x.shape).copy(),)

        return _node(out, (x,), bwd, "gap")

    if kind == "channel_mean":
        c = x.shape[1]
        out = x.data.mean(axis=1, keepdims=True)

        def bwd(g):
            return (np.broadcast_to(g / c, x.shape).copy(),)

        return _node(out, (x,), bwd, "channel_mean")

    if kind == "avg3x3s2":
        return _avg3x3s2(x)

    raise ValueError(f"unknown pool kind {kind!r}")


def _avg3x3s2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg3x3s2 needs even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    # Divisor counts only valid (non-padded) cells so constant maps stay
    # constant; counts depend only on (h, w).
    ones = np.pad(np.ones((h, w)), 1)
    counts = np.zeros((oh, ow))
    acc = np.zeros((n, c, oh, ow))
    for u in range(3):
        for v in range(3):
            acc += xp[:, :, u : u + 2 * oh : 2, v : v + 2 * ow : 2]
            counts += ones[u : u + 2 * oh : 2, v : v + 2 * ow : 2]
    out = acc / counts

    def bwd(g):
        gs = g / counts
        gxp = np.zeros_like(xp)
        for u in range(3):
            for v in range(3):
                gxp[:, :, u : u + 2 * oh : 2, v : v + 2 * ow : 2] += gs
        return (gxp[:, :, 1 : 1 + h, 1 : 1 + w],)

    return _node(out, (x,), bwd, "avg3x3s2")


def upsample2x(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _node(out, (x,), bwd, "upsample2x")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad: int | None = None) -> Tensor:
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel spatial dims must be odd, got {kh}x{kw}")
    if kcin != cin:
        raise ShapeError(
            f"conv2d channel mismatch: input has {cin} channels, kernel expects {kcin} "
            f"(input {x.shape}, kernel {kernel.shape})"
        )
    if pad is None:
        pad = (kh - 1) // 2
    if bias is not None and bias.shape != (1, cout, 1, 1):
        raise ShapeError(f"conv2d bias must be (1,{cout},1,1), got {bias.shape}")

    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, cin, oh, ow, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, cin * kh * kw)
    kmat = kernel.data.reshape(cout, cin * kh * kw)
    out = (cols @ kmat.T).reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout)
        gk = (g2.T @ cols).reshape(cout, cin, kh, kw)
        gcols = g2 @ kmat  # (n*oh*ow, cin*kh*kw)
        gwin = gcols.reshape(n, oh, ow, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                    gwin[:, :, :, :, u, v]
                )
        gx = gxp[:, :, pad : pad + h, pad : pad + w]
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3), keepdims=True).transpose(1, 0, 2, 3).reshape(1, cout, 1, 1)

    return _node(out, parents, bwd, "conv2d")


def fc(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Fully connected map over channels for (n, c, 1, 1) tensors."""
    if x.shape[2] != 1 or x.shape[3] != 1:
        raise ShapeError(f"fc expects (n,c,1,1), got {x.shape}")
    if weight.shape[2] != 1 or weight.shape[3] != 1:
        raise ShapeError(f"fc weight must be (cout,cin,1,1), got {weight.shape}")
    return conv2d(x, weight, bias, stride=1, pad=0)


# ---------------------------------------------------------------------------
# Matrix / shape ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    na, ca, ra, ka = a.shape
    nb, cb, kb, cb2 = b.shape
    if ka != kb:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    if (na, ca) != (nb, cb):
        raise ShapeError(f"matmul leading dims disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.swapaxes(2, 3), ad.swapaxes(2, 3) @ g

    return _node(ad @ bd, (a, b), bwd, "matmul")


def transpose_hw(x: Tensor) -> Tensor:
    def bwd(g):
        return (g.swapaxes(2, 3).copy(),)

    return _node(x.data.swapaxes(2, 3).copy(), (x,), bwd, "transpose_hw")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    old = x.shape

    def bwd(g):
        return (g.reshape(old),)

    return _node(x.data.reshape(shape), (x,), bwd, "reshape")


def softmax(x: Tensor, axis: int) -> Tensor:
    if axis not in (0, 1, 2, 3):
        raise ShapeError(f"softmax axis must be in 0..3, got {axis}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (x,), bwd, "softmax")


def concat_channels(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    base = (xs[0].shape[0], xs[0].shape[2], xs[0].shape[3])
    for t in xs:
        if (t.shape[0], t.shape[2], t.shape[3]) != base:
            raise ShapeError(f"concat_channels shape mismatch: {[t.shape for t in xs]}")
    sizes = [t.shape[1] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=1)
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1))

    return _node(out, tuple(xs), bwd, "concat_channels")


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    n, c, h, w = x.shape
    if not (0 <= start < stop <= c):
        raise ShapeError(f"slice_channels [{start}:{stop}] out of range for {c} channels")

    def bwd(g):
        gx = np.zeros(x.shape)
        gx[:, start:stop] = g
        return (gx,)

    return _node(x.data[:, start:stop].copy(), (x,), bwd, "slice_channels")


def _shift_axis(x: np.ndarray, d: int, axis: int) -> np.ndarray:
    # out[i] = x[clip(i + d, 0, len-1)] along axis
    length = x.shape[axis]
    idx = np.clip(np.arange(length) + d, 0, length - 1)
    return np.take(x, idx, axis=axis)


def _shift_axis_bwd(g: np.ndarray, d: int, axis: int) -> np.ndarray:
    length = g.shape[axis]
    gx = np.zeros_like(g)
    if d == 0:
        return g.copy()
    sl_all = [slice(None)] * 4

    def at(i):
        s = sl_all.copy()
        s[axis] = i
        return tuple(s)

    if d > 0:
        k = min(d, length - 1)
        gx[at(slice(k, length))] += g[at(slice(0, length - k))]
        gx[at(length - 1)] += g[at(slice(length - k, length))].sum(axis=axis)
    else:
        k = min(-d, length - 1)
        gx[at(slice(0, length - k))] += g[at(slice(k, length))]
        gx[at(0)] += g[at(slice(0, k))].sum(axis=axis)
    return gx


def shift2d(x: Tensor, dy: int, dx: int) -> Tensor:
    """Spatial shift with replicate-edge clamping: out[i,j] = x[i+dy, j+dx]."""
    out = _shift_axis(_shift_axis(x.data, dy, 2), dx, 3)

    def bwd(g):
        return (_shift_axis_bwd(_shift_axis_bwd(g, dx, 3), dy, 2),)

    return _node(out, (x,), bwd, "shift2d")


def reduce_sum(x: Tensor, axes: tuple[int, ...] = (0, 1, 2, 3)) -> Tensor:
    axes = tuple(sorted(set(int(a) for a in axes)))
    out = x.data.sum(axis=axes, keepdims=True)

    def bwd(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), bwd, "reduce_sum")


def mean_all(x: Tensor) -> Tensor:
    return affine(reduce_sum(x), scale=1.0 / x.data.size)


# ---------------------------------------------------------------------------
# Graph and backward pass
# ---------------------------------------------------------------------------


@dataclass
class GraphNode:
    node_id: int
    op: str
    input_ids: tuple[int, ...]


@dataclass
class Graph:
    """Reverse-topological view of the subgraph reachable from a root.

    Node ids are monotone in creation order, so ascending id order is a
    valid topological order of the define-by-run graph.
    """

    nodes: list[GraphNode] = field(default_factory=list)
    _tensors: dict[int, Tensor] = field(default_factory=dict, repr=False)

    @staticmethod
    def from_root(root: Tensor) -> "Graph":
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            t = stack.pop()
            if t._id in seen or not t.requires_grad:
                continue
            seen[t._id] = t
            stack.extend(t._parents)
        graph = Graph()
        for nid in sorted(seen):
            t = seen[nid]
            graph.nodes.append(GraphNode(nid, t._op, tuple(p._id for p in t._parents)))
            graph._tensors[nid] = t
        return graph


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    Repeated calls without ``zero_grad`` accumulate into leaf gradients.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar (1,1,1,1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    graph = Graph.from_root(loss)
    flowing: dict[int, np.ndarray] = {loss._id: np.ones((1, 1, 1, 1))}
    for rec in reversed(graph.nodes):
        g = flowing.pop(rec.node_id, None)
        if g is None:
            continue
        t = graph._tensors[rec.node_id]
        if t._bwd is None:
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        parent_grads = t._bwd(g)
        for p, pg in zip(t._parents, parent_grads):
            if not p.requires_grad:
                continue
            if pg.shape != p.shape:
                raise ShapeError(f"backward of {t._op} produced grad {pg.shape} for parent {p.shape}")
            if p._id in flowing:
                flowing[p._id] = flowing[p._id] + pg
            else:
                flowing[p._id] = pg


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


class Param:
    """Named learnable tensor (requires_grad is always on)."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.tensor.shape})"


class ParamStore:
    """Ordered registry of uniquely named parameters for one model."""

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Param] = {}

    def create(self, name: str, data) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Param(name, data)
        self._params[name] = p
        return p

    def conv_init(self, name: str, cout: int, cin: int, k: int, gain: float = 2.0) -> Param:
        std = np.sqrt(gain / (cin * k * k))
        return self.create(name, self.rng.normal(0.0, std, size=(cout, cin, k, k)))

    def zeros(self, name: str, shape) -> Param:
        return self.create(name, np.zeros(shape))

    def params(self) -> list[Param]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.tensor.zero_grad()

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: list[np.ndarray]
    deterministic: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.deterministic and self.max_rel_err <= self.tol


def grad_check(closure, inputs, step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of a scalar-valued closure to central
    finite differences.

    ``closure`` takes len(inputs) Tensors and returns a scalar Tensor; it is
    re-invoked for every perturbation, so it must be deterministic (two
    identical forward passes are compared bitwise and any mismatch is
    reported as a failure). Relative error per element is
    |a - n| / max(|a|, |n|, 1e-5).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]

    def run(vals):
        ts = [Tensor(v, requires_grad=True) for v in vals]
        out = closure(*ts)
        if out.shape != (1, 1, 1, 1):
            raise ShapeError(f"grad_check closure must return a scalar, got {out.shape}")
        return out, ts

    out1, ts = run(arrays)
    out2, _ = run(arrays)
    deterministic = np.array_equal(out1.data, out2.data)

    backward(out1)
    analytic = [t.grad if t.grad is not None else np.zeros(t.shape) for t in ts]

    per_input = []
    max_rel = 0.0
    for i, base in enumerate(arrays):
        rel = np.zeros(base.shape)
        flat = base.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            plus = [a.copy() for a in arrays]
            plus[i].reshape(-1)[j] = orig + step
            minus = [a.copy() for a in arrays]
            minus[i].reshape(-1)[j] = orig - step
            fp, _ = run(plus)
            fm, _ = run(minus)
            num = (fp.item() - fm.item()) / (2.0 * step)
            ana = analytic[i].reshape(-1)[j]
            denom = max(abs(ana), abs(num), 1e-5)
            rel.reshape(-1)[j] = abs(ana - num) / denom
        per_input.append(rel)
        if rel.size:
            max_rel = max(max_rel, float(rel.max()))
    return GradCheckReport(max_rel, per_input, deterministic, tol)
