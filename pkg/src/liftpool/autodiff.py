"""Tape-based reverse-mode differentiation over a small fixed op set.

A :class:`Tape` records every operation applied to its :class:`Var` handles.
:func:`backward` walks the tape once in reverse and returns a gradient map.

    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    loss = tape.sum(tape.tanh(x))
    grads = backward(tape, loss)
    grads[x]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import tensor as T

__all__ = [
    "Tape",
    "Var",
    "GradMap",
    "backward",
    "gradient_check",
    "SUPPORTED_OPS",
]


@dataclass(frozen=True, eq=False)
class Var:
    """Handle to a value recorded on a tape."""

    tape: "Tape"
    id: int
    requires_grad: bool

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.mul(self, other)
        return self.tape.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    attrs: dict[str, Any]
    saved: Any = None
    requires_grad: bool = False


@dataclass(frozen=True)
class OpDef:
    forward: Callable[..., tuple[np.ndarray, Any]]
    backward: Callable[..., tuple[np.ndarray | None, ...]]


_OPS: dict[str, OpDef] = {}


def _op(name: str):
    def register(cls):
        _OPS[name] = OpDef(cls.forward, cls.backward)
        return cls

    return register


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only scalar-with-tensor broadcasting is allowed
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def _binary_shapes(a: np.ndarray, b: np.ndarray, name: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"shape mismatch for {name}: {a.shape} vs {b.shape}")


@_op("add")
class _Add:
    @staticmethod
    def forward(a, b):
        _binary_shapes(a, b, "add")
        return a + b, None

    @staticmethod
    def backward(g, ins, out, saved):
        a, b = ins
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


@_op("sub")
class _Sub:
    @staticmethod
    def forward(a, b):
        _binary_shapes(a, b, "sub")
        return a - b, None

    @staticmethod
    def backward(g, ins, out, saved):
        a, b = ins
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


@_op("mul")
class _Mul:
    @staticmethod
    def forward(a, b):
        _binary_shapes(a, b, "mul")
        return a * b, None

    @staticmethod
    def backward(g, ins, out, saved):
        a, b = ins
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@_op("scale")
class _Scale:
    @staticmethod
    def forward(x, *, c):
        return x * x.dtype.type(c), None

    @staticmethod
    def backward(g, ins, out, saved, *, c):
        return (g * g.dtype.type(c),)


@_op("relu")
class _Relu:
    @staticmethod
    def forward(x):
        return np.maximum(x, 0), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (g * (ins[0] > 0),)


@_op("tanh")
class _Tanh:
    @staticmethod
    def forward(x):
        return np.tanh(x), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (g * (1 - out * out),)


@_op("sqrt")
class _Sqrt:
    @staticmethod
    def forward(x):
        return np.sqrt(x), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (g / (2 * out),)


@_op("sum")
class _Sum:
    @staticmethod
    def forward(x):
        return np.asarray(x.sum(), dtype=x.dtype), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (np.broadcast_to(g, ins[0].shape).copy(),)


@_op("mean")
class _Mean:
    @staticmethod
    def forward(x):
        return np.asarray(x.mean(), dtype=x.dtype), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (np.full(ins[0].shape, g / ins[0].size, dtype=ins[0].dtype),)


@_op("squared_l2")
class _SquaredL2:
    @staticmethod
    def forward(x):
        return np.asarray(np.vdot(x, x), dtype=x.dtype), None

    @staticmethod
    def backward(g, ins, out, saved):
        return (2 * g * ins[0],)


@_op("linear")
class _Linear:
    @staticmethod
    def forward(x, w, b=None):
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ValueError(f"linear expects [N,F] and [out,F], got {x.shape} and {w.shape}")
        y = x @ w.T
        if b is not None:
            y = y + b
        return y, None

    @staticmethod
    def backward(g, ins, out, saved):
        x, w = ins[0], ins[1]
        grads = (g @ w, g.T @ x)
        if len(ins) == 3:
            grads += (g.sum(axis=0),)
        return grads


@_op("conv1d")
class _Conv1d:
    @staticmethod
    def forward(x, w, b=None, *, groups, pad, axis):
        if axis in (0, 1) or not -x.ndim <= axis < x.ndim or x.ndim < 3:
            raise ValueError(f"conv1d axis {axis} invalid for shape {x.shape}")
        xm = np.moveaxis(x, axis, -1)
        y = T.conv1d_grouped(xm, w, b, groups, pad)
        return np.moveaxis(y, -1, axis), None

    @staticmethod
    def backward(g, ins, out, saved, *, groups, pad, axis):
        x, w = ins[0], ins[1]
        gx, gw, gb = T.conv1d_grouped_backward(
            np.moveaxis(g, axis, -1), np.moveaxis(x, axis, -1), w, groups, pad
        )
        grads = (np.moveaxis(gx, -1, axis), gw)
        if len(ins) == 3:
            grads += (gb,)
        return grads


@_op("conv2d")
class _Conv2d:
    @staticmethod
    def forward(x, w, b=None, *, stride=1, padding=None):
        return T.conv2d(x, w, b, stride, padding), None

    @staticmethod
    def backward(g, ins, out, saved, *, stride=1, padding=None):
        gx, gw, gb = T.conv2d_backward(g, ins[0], ins[1], stride, padding)
        return (gx, gw, gb) if len(ins) == 3 else (gx, gw)


def _windows(x: np.ndarray, k: int, s: int) -> np.ndarray:
    if x.ndim != 4:
        raise ValueError(f"pooling expects [N,C,H,W], got {x.shape}")
    if x.shape[2] < k or x.shape[3] < k:
        raise ValueError(f"pooling window {k} larger than input {x.shape[2:]}")
    return np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]


def window_positions(idx: np.ndarray, k: int, s: int) -> tuple[np.ndarray, ...]:
    """Absolute (n, c, row, col) coordinates for window-local flat indices."""
    n, c, ho, wo = idx.shape
    nn, cc, ii, jj = np.meshgrid(np.arange(n), np.arange(c), np.arange(ho), np.arange(wo), indexing="ij")
    return nn, cc, ii * s + idx // k, jj * s + idx % k


@_op("max_pool2d")
class _MaxPool2d:
    @staticmethod
    def forward(x, *, k, s):
        win = _windows(x, k, s)
        flat = win.reshape(win.shape[:4] + (k * k,))
        idx = np.argmax(flat, axis=-1)  # first maximum wins ties
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return np.ascontiguousarray(out), idx

    @staticmethod
    def backward(g, ins, out, idx, *, k, s):
        gx = np.zeros_like(ins[0])
        np.add.at(gx, window_positions(idx, k, s), g)
        return (gx,)


@_op("max_unpool2d")
class _MaxUnpool2d:
    @staticmethod
    def forward(y, *, indices, out_hw, k, s):
        if indices.shape != y.shape:
            raise ValueError(f"indices shape {indices.shape} does not match input {y.shape}")
        if indices.size and (indices.min() < 0 or indices.max() >= k * k):
            raise ValueError(f"max indices must lie inside a {k}x{k} window")
        out = np.zeros(y.shape[:2] + tuple(out_hw), dtype=y.dtype)
        pos = window_positions(indices, k, s)
        if pos[2].size and (pos[2].max() >= out_hw[0] or pos[3].max() >= out_hw[1]):
            raise ValueError(f"output size {tuple(out_hw)} too small for the recorded windows")
        out[pos] = y
        return out, pos

    @staticmethod
    def backward(g, ins, out, pos, **_):
        return (g[pos],)


@_op("avg_pool2d")
class _AvgPool2d:
    @staticmethod
    def forward(x, *, k, s):
        return np.ascontiguousarray(_windows(x, k, s).mean(axis=(-2, -1))), None

    @staticmethod
    def backward(g, ins, out, saved, *, k, s):
        gx = np.zeros_like(ins[0])
        ho, wo = g.shape[2:]
        share = g / (k * k)
        for a in range(k):
            for b in range(k):
                gx[:, :, a:a + s * ho:s, b:b + s * wo:s] += share
        return (gx,)


@_op("reshape")
class _Reshape:
    @staticmethod
    def forward(x, *, shape):
        return x.reshape(shape), None

    @staticmethod
    def backward(g, ins, out, saved, **_):
        return (g.reshape(ins[0].shape),)


@_op("concat")
class _Concat:
    @staticmethod
    def forward(*xs, axis):
        return np.concatenate(xs, axis=axis), None

    @staticmethod
    def backward(g, ins, out, saved, *, axis):
        cuts = np.cumsum([x.shape[axis] for x in ins])[:-1]
        return tuple(np.split(g, cuts, axis=axis))


@_op("stride_slice")
class _StrideSlice:
    @staticmethod
    def forward(x, *, axis, start):
        if x.shape[axis] % 2:
            raise ValueError(f"split needs an even length along axis {axis}, got {x.shape[axis]}")
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, None, 2)
        return np.ascontiguousarray(x[tuple(sl)]), None

    @staticmethod
    def backward(g, ins, out, saved, *, axis, start):
        gx = np.zeros_like(ins[0])
        sl = [slice(None)] * gx.ndim
        sl[axis] = slice(start, None, 2)
        gx[tuple(sl)] = g
        return (gx,)


@_op("interleave")
class _Interleave:
    @staticmethod
    def forward(even, odd, *, axis):
        if even.shape != odd.shape:
            raise ValueError(f"interleave needs equal shapes, got {even.shape} and {odd.shape}")
        shape = list(even.shape)
        shape[axis] *= 2
        out = np.empty(shape, dtype=np.result_type(even, odd))
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(0, None, 2)
        out[tuple(sl)] = even
        sl[axis] = slice(1, None, 2)
        out[tuple(sl)] = odd
        return out, None

    @staticmethod
    def backward(g, ins, out, saved, *, axis):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(0, None, 2)
        ge = g[tuple(sl)]
        sl[axis] = slice(1, None, 2)
        return ge, g[tuple(sl)]


@_op("pad_even")
class _PadEven:
    @staticmethod
    def forward(x, *, axis):
        return T.pad_to_even(x, axis)[0], None

    @staticmethod
    def backward(g, ins, out, saved, *, axis):
        n = ins[0].shape[axis]
        if g.shape[axis] == n:
            return (g,)
        gx = T.crop(g, n, axis).copy()
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(n - 1, n)
        gx[tuple(sl)] += np.take(g, [n], axis=axis)
        return (gx,)


@_op("crop")
class _Crop:
    @staticmethod
    def forward(x, *, axis, length):
        return T.crop(x, length, axis), None

    @staticmethod
    def backward(g, ins, out, saved, *, axis, length):
        gx = np.zeros_like(ins[0])
        sl = [slice(None)] * gx.ndim
        sl[axis] = slice(0, length)
        gx[tuple(sl)] = g
        return (gx,)


@_op("softmax_cross_entropy")
class _SoftmaxCrossEntropy:
    @staticmethod
    def forward(logits, *, labels, ignore_index):
        c = logits.shape[1]
        z = np.moveaxis(logits, 1, -1).reshape(-1, c)
        y = np.asarray(labels).reshape(-1)
        if y.size != z.shape[0]:
            raise ValueError(f"{y.size} labels for {z.shape[0]} predictions")
        keep = y != ignore_index if ignore_index is not None else np.ones(y.size, bool)
        count = int(keep.sum())
        if count == 0:
            raise ValueError("every target is ignored; loss is undefined")
        yk = y[keep]
        if yk.min() < 0 or yk.max() >= c:
            raise ValueError(f"label out of range [0, {c}): {int(yk.min())}..{int(yk.max())}")
        shifted = z - z.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        rows = np.nonzero(keep)[0]
        loss = -logp[rows, yk].sum() / count
        return np.asarray(loss, dtype=logits.dtype), (logp, rows, yk, count)

    @staticmethod
    def backward(g, ins, out, saved, **_):
        logp, rows, yk, count = saved
        grad = np.zeros_like(logp)
        grad[rows] = np.exp(logp[rows])
        grad[rows, yk] -= 1
        grad *= g / count
        logits = ins[0]
        moved = np.moveaxis(logits, 1, -1).shape
        return (np.ascontiguousarray(np.moveaxis(grad.reshape(moved), -1, 1)),)


SUPPORTED_OPS = frozenset(_OPS)


class Tape:
    """Append-only record of operations.

    Values live in ``values`` indexed by :attr:`Var.id`; nodes only ever
    reference earlier ids, so list order is a topological order.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.values: list[np.ndarray] = []
        self._params: dict[int, Var] = {}

    def _push(self, value: np.ndarray, node: Node) -> Var:
        self.nodes.append(node)
        self.values.append(value)
        return Var(self, len(self.values) - 1, node.requires_grad)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        value = np.asarray(value)
        if value.dtype.kind != "f":
            value = value.astype(np.float64)
        return self._push(value, Node("leaf", (), {}, requires_grad=requires_grad))

    def const(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    def param(self, array: np.ndarray) -> Var:
        """Leaf for a parameter array, reused when the same array is seen again."""
        key = id(array)
        var = self._params.get(key)
        if var is None or var.value is not array:
            var = self._push(array, Node("leaf", (), {}, requires_grad=True))
            self._params[key] = var
        return var

    def record(self, op: str, *inputs: Var | None, **attrs) -> Var:
        if op not in _OPS:
            raise ValueError(f"unsupported op {op!r}")
        ins = [v for v in inputs if v is not None]
        for v in ins:
            if not isinstance(v, Var) or v.tape is not self:
                raise ValueError(f"{op}: inputs must be Vars recorded on this tape")
        out, saved = _OPS[op].forward(*(v.value for v in ins), **attrs)
        node = Node(op, tuple(v.id for v in ins), attrs, saved, any(v.requires_grad for v in ins))
        return self._push(out, node)

    def _lift(self, x) -> Var:
        return x if isinstance(x, Var) else self.const(np.asarray(x, dtype=np.float64))

    # thin wrappers so model code reads naturally
    def add(self, a, b):
        return self.record("add", self._lift(a), self._lift(b))

    def sub(self, a, b):
        return self.record("sub", self._lift(a), self._lift(b))

    def mul(self, a, b):
        return self.record("mul", self._lift(a), self._lift(b))

    def scale(self, x, c: float):
        return self.record("scale", x, c=c)

    def relu(self, x):
        return self.record("relu", x)

    def tanh(self, x):
        return self.record("tanh", x)

    def sqrt(self, x):
        return self.record("sqrt", x)

    def sum(self, x):
        return self.record("sum", x)

    def mean(self, x):
        return self.record("mean", x)

    def squared_l2(self, x):
        return self.record("squared_l2", x)

    def linear(self, x, w, b=None):
        return self.record("linear", x, w, b)

    def conv1d(self, x, w, b=None, *, groups=1, pad=T.PadMode.ZERO, axis=-1):
        axis = axis % x.value.ndim
        return self.record("conv1d", x, w, b, groups=groups, pad=T.PadMode.parse(pad), axis=axis)

    def conv2d(self, x, w, b=None, *, stride=1, padding=None):
        return self.record("conv2d", x, w, b, stride=stride, padding=padding)

    def max_pool2d(self, x, k=2, s=2):
        out = self.record("max_pool2d", x, k=k, s=s)
        return out, self.nodes[out.id].saved

    def max_unpool2d(self, y, indices, out_hw, k=2, s=2):
        return self.record("max_unpool2d", y, indices=indices, out_hw=tuple(out_hw), k=k, s=s)

    def avg_pool2d(self, x, k=2, s=2):
        return self.record("avg_pool2d", x, k=k, s=s)

    def reshape(self, x, shape):
        return self.record("reshape", x, shape=tuple(shape))

    def concat(self, xs: Sequence[Var], axis: int):
        return self.record("concat", *xs, axis=axis)

    def split_even_odd(self, x, axis: int) -> tuple[Var, Var]:
        axis = axis % x.value.ndim
        return (self.record("stride_slice", x, axis=axis, start=0),
                self.record("stride_slice", x, axis=axis, start=1))

    def interleave(self, even, odd, axis: int):
        return self.record("interleave", even, odd, axis=axis % even.value.ndim)

    def pad_even(self, x, axis: int):
        return self.record("pad_even", x, axis=axis % x.value.ndim)

    def crop(self, x, axis: int, length: int):
        return self.record("crop", x, axis=axis % x.value.ndim, length=length)

    def softmax_cross_entropy(self, logits, labels, ignore_index=None):
        return self.record("softmax_cross_entropy", logits, labels=np.asarray(labels), ignore_index=ignore_index)


class GradMap(dict):
    """Gradients keyed by var id; also indexable by :class:`Var`."""

    def __getitem__(self, key):
        return super().__getitem__(key.id if isinstance(key, Var) else key)

    def __contains__(self, key):
        return super().__contains__(key.id if isinstance(key, Var) else key)

    def get(self, key, default=None):
        return super().get(key.id if isinstance(key, Var) else key, default)


def backward(tape: Tape, loss: Var) -> GradMap:
    """Gradient of a scalar ``loss`` for every ``requires_grad`` leaf on ``tape``."""
    if loss.tape is not tape:
        raise ValueError("loss was recorded on a different tape")
    if loss.value.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.value.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for i in range(loss.id, -1, -1):
        node = tape.nodes[i]
        g = grads.get(i)
        if g is None or node.op == "leaf" or not node.requires_grad:
            continue
        ins = [tape.values[j] for j in node.inputs]
        in_grads = _OPS[node.op].backward(g, ins, tape.values[i], node.saved, **node.attrs)
        for j, gj in zip(node.inputs, in_grads):
            if gj is None or not tape.nodes[j].requires_grad:
                continue
            gj = np.asarray(gj, dtype=tape.values[j].dtype)
            if j in grads:
                grads[j] = grads[j] + gj
            else:
                grads[j] = gj
    out = GradMap()
    for i, node in enumerate(tape.nodes):
        if node.op == "leaf" and node.requires_grad:
            g = grads.get(i)
            out[i] = np.zeros_like(tape.values[i]) if g is None else np.asarray(g).reshape(tape.values[i].shape)
    return out


def gradient_check(
    f: Callable[..., Var],
    leaves: Sequence[np.ndarray],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Largest relative error between backward() and central differences.

    ``f(tape, *vars)`` must build a scalar loss from the leaf vars. Per
    coordinate the error is ``|a - n| / max(1, |a|, |n|)``. With
    ``max_coords`` only a seeded random subset of coordinates per leaf is
    probed.
    """
    leaves = [np.array(a, dtype=np.float64) for a in leaves]
    tape = Tape()
    vars_ = [tape.leaf(a.copy()) for a in leaves]
    grads = backward(tape, f(tape, *vars_))

    def evaluate(arrays):
        t = Tape()
        return float(f(t, *[t.const(a) for a in arrays]).value)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for li, (leaf, var) in enumerate(zip(leaves, vars_)):
        analytic = grads[var].reshape(-1)
        coords = np.arange(leaf.size)
        if max_coords is not None and leaf.size > max_coords:
            coords = rng.choice(leaf.size, size=max_coords, replace=False)
        for c in coords:
            plus = [a.copy() for a in leaves]
            minus = [a.copy() for a in leaves]
            plus[li].reshape(-1)[c] += eps
            minus[li].reshape(-1)[c] -= eps
            numeric = (evaluate(plus) - evaluate(minus)) / (2 * eps)
            a = float(analytic[c])
            if not (math.isfinite(a) and math.isfinite(numeric)):
                return math.inf
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
