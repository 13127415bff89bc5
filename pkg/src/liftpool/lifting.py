"""LiftDownPool / LiftUpPool: invertible pooling built from split, predict and update.

Conventions (0-based): the even set holds positions 0, 2, 4, ...; the odd
set is predicted from it. One 2D step lifts along the width first, giving
``(s, d)``, then lifts ``s`` and ``d`` along the height:

    s -> (LL, LH)        d -> (HL, HH)

Every public function accepts plain arrays or :class:`~liftpool.autodiff.Var`
handles. With arrays it runs on a private tape and returns arrays; with
vars it records onto the caller's tape so gradients reach the operator
weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Union

import numpy as np

from .autodiff import Tape, Var
from .tensor import PadMode

Value = Union[np.ndarray, Var]

BANDS = ("LL", "LH", "HL", "HH")
POOL_MODES = ("sum", "all") + BANDS

CLASSICAL_PREDICT_TAPS = (0.0, 0.5, 0.5)
CLASSICAL_UPDATE_TAPS = (0.25, 0.25, 0.0)


@dataclass
class LiftOperator:
    """Predictor or updater.

    Learned operators compute ``tanh(conv_k1(relu(conv_K(x))))`` along the
    lifted axis. Classical operators apply a fixed 3-tap kernel: the
    two-neighbour average for prediction, the quarter-sum of adjacent
    details for update.
    """

    kind: str
    boundary: PadMode = PadMode.SYMMETRIC
    taps: tuple[float, ...] | None = None
    w1: np.ndarray | None = None
    b1: np.ndarray | None = None
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None
    groups1: int = 1
    groups2: int = 1

    def __post_init__(self):
        self.boundary = PadMode.parse(self.boundary)
        if self.kind == "classical":
            if self.taps is None or len(self.taps) % 2 == 0:
                raise ValueError("classical operator needs an odd number of taps")
        elif self.kind == "learned":
            if any(a is None for a in (self.w1, self.b1, self.w2, self.b2)):
                raise ValueError("learned operator needs w1, b1, w2, b2")
            cmid, cin_g, k = self.w1.shape
            c = self.w2.shape[0]
            if k % 2 == 0:
                raise ValueError(f"kernel size must be odd, got {k}")
            if c % self.groups1 or cmid % self.groups1 or cin_g != c // self.groups1:
                raise ValueError(f"w1 shape {self.w1.shape} inconsistent with C={c}, groups1={self.groups1}")
            if cmid % self.groups2 or c % self.groups2 or self.w2.shape != (c, cmid // self.groups2, 1):
                raise ValueError(f"w2 shape {self.w2.shape} inconsistent with Cmid={cmid}, groups2={self.groups2}")
            if self.b1.shape != (cmid,) or self.b2.shape != (c,):
                raise ValueError("bias shapes do not match the convolution outputs")
        else:
            raise ValueError(f"operator kind must be 'classical' or 'learned', got {self.kind!r}")

    @classmethod
    def classical_predict(cls, boundary=PadMode.SYMMETRIC) -> "LiftOperator":
        return cls("classical", boundary, taps=CLASSICAL_PREDICT_TAPS)

    @classmethod
    def classical_update(cls, boundary=PadMode.SYMMETRIC) -> "LiftOperator":
        return cls("classical", boundary, taps=CLASSICAL_UPDATE_TAPS)

    @property
    def channels(self) -> int | None:
        return None if self.kind == "classical" else self.w2.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        if self.kind == "classical":
            return {}
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def __call__(self, x: Var, axis: int) -> Var:
        tape = x.tape
        c = x.shape[1]
        if self.kind == "classical":
            w = np.tile(np.asarray(self.taps, dtype=x.value.dtype), (c, 1, 1))
            return tape.conv1d(x, tape.const(w), groups=c, pad=self.boundary, axis=axis)
        if c != self.channels:
            raise ValueError(f"operator built for {self.channels} channels, input has {c}")
        # weights may already be vars (e.g. leaves of a gradient check)
        w1, b1, w2, b2 = (a if isinstance(a, Var) else tape.param(a) for a in (self.w1, self.b1, self.w2, self.b2))
        h = tape.conv1d(x, w1, b1, groups=self.groups1, pad=self.boundary, axis=axis)
        h = tape.conv1d(tape.relu(h), w2, b2, groups=self.groups2, pad=self.boundary, axis=axis)
        return tape.tanh(h)


@dataclass
class LiftConfig:
    kernel_size: int = 5
    groups1: int | None = None  # None: depthwise (= channels)
    groups2: int | None = None
    mid_channels: int | None = None  # None: same as channels
    boundary: PadMode = PadMode.SYMMETRIC
    operator_kind: str = "learned"
    pool_mode: str = "sum"

    def __post_init__(self):
        self.boundary = PadMode.parse(self.boundary)
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.operator_kind not in ("classical", "learned"):
            raise ValueError(f"operator_kind must be 'classical' or 'learned', got {self.operator_kind!r}")
        if self.pool_mode not in POOL_MODES:
            raise ValueError(f"pool_mode must be one of {POOL_MODES}, got {self.pool_mode!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["boundary"] = self.boundary.value
        return d


@dataclass
class LiftPair1D:
    """Approximation ``s`` and detail ``d`` from one 1D lifting pass.

    ``x_odd`` is kept for the update constraint; it is not needed to invert.
    """

    s: Value
    d: Value
    orig_len: int
    axis: int
    x_odd: Value | None = None


@dataclass
class SubbandSet2D:
    ll: Value
    lh: Value
    hl: Value
    hh: Value
    orig_h: int
    orig_w: int
    passes: list[LiftPair1D] = field(default_factory=list, repr=False)

    def __post_init__(self):
        shapes = {tuple(b.shape) for b in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise ValueError(f"sub-bands must share one shape, got {sorted(shapes)}")

    def band(self, name: str) -> Value:
        return getattr(self, name.lower())

    def bands(self) -> dict[str, Value]:
        return {name: self.band(name) for name in BANDS}


def _to_var(x: Value, tape: Tape | None = None) -> Var:
    if isinstance(x, Var):
        return x
    return (tape or Tape()).const(np.asarray(x))


def _out(v: Var, as_array: bool) -> Value:
    return v.value if as_array else v


def _pair_out(p: LiftPair1D, as_array: bool) -> LiftPair1D:
    if not as_array:
        return p
    return replace(p, s=p.s.value, d=p.d.value, x_odd=None if p.x_odd is None else p.x_odd.value)


def split(x: Value, axis: int = -1) -> tuple[Value, Value]:
    """Polyphase split into (even positions, odd positions)."""
    xv = _to_var(x)
    even, odd = xv.tape.split_even_odd(xv, axis)
    arr = not isinstance(x, Var)
    return _out(even, arr), _out(odd, arr)


def merge(even: Value, odd: Value, axis: int = -1) -> Value:
    arr = not isinstance(even, Var)
    ev = _to_var(even)
    ov = _to_var(odd, ev.tape)
    return _out(ev.tape.interleave(ev, ov, axis), arr)


def predict(op: LiftOperator, x_even: Value, axis: int = -1) -> Value:
    xv = _to_var(x_even)
    return _out(op(xv, axis % xv.value.ndim), not isinstance(x_even, Var))


def update(op: LiftOperator, d: Value, axis: int = -1) -> Value:
    return predict(op, d, axis)


def _down_1d(x: Var, P: LiftOperator, U: LiftOperator, axis: int) -> LiftPair1D:
    tape = x.tape
    axis = axis % x.value.ndim
    n = x.shape[axis]
    xe, xo = tape.split_even_odd(tape.pad_even(x, axis), axis)
    d = tape.sub(xo, P(xe, axis))
    s = tape.add(xe, U(d, axis))
    return LiftPair1D(s, d, n, axis, xo)


def _up_1d(pair: LiftPair1D, P: LiftOperator, U: LiftOperator) -> Var:
    s = _to_var(pair.s)
    d = _to_var(pair.d, s.tape)
    if s.shape != d.shape:
        raise ValueError(f"approximation {s.shape} and detail {d.shape} shapes differ")
    if s.shape[pair.axis] != math.ceil(pair.orig_len / 2):
        raise ValueError(f"length {s.shape[pair.axis]} cannot reconstruct {pair.orig_len} samples")
    tape = s.tape
    xe = tape.sub(s, U(d, pair.axis))
    xo = tape.add(d, P(xe, pair.axis))
    x = tape.interleave(xe, xo, pair.axis)
    if x.shape[pair.axis] != pair.orig_len:
        x = tape.crop(x, pair.axis, pair.orig_len)
    return x


def lift_down_1d(x: Value, P: LiftOperator, U: LiftOperator, axis: int = -1) -> LiftPair1D:
    """``d = x_odd - P(x_even)``, ``s = x_even + U(d)``; odd lengths are edge-padded."""
    return _pair_out(_down_1d(_to_var(x), P, U, axis), not isinstance(x, Var))


def lift_up_1d(pair: LiftPair1D, P: LiftOperator, U: LiftOperator) -> Value:
    """Exact inverse of :func:`lift_down_1d` given the same operators."""
    return _out(_up_1d(pair, P, U), not isinstance(pair.s, Var))


def _down_2d(x: Var, P: LiftOperator, U: LiftOperator) -> SubbandSet2D:
    if x.value.ndim != 4:
        raise ValueError(f"2D lifting expects [N, C, H, W], got {x.shape}")
    h, w = x.shape[2:]
    horiz = _down_1d(x, P, U, axis=3)
    low = _down_1d(horiz.s, P, U, axis=2)
    high = _down_1d(horiz.d, P, U, axis=2)
    return SubbandSet2D(low.s, low.d, high.s, high.d, h, w, [horiz, low, high])


def lift_down_2d(x: Value, P: LiftOperator, U: LiftOperator) -> SubbandSet2D:
    """Horizontal pass, then vertical passes on both halves, one shared (P, U)."""
    sb = _down_2d(_to_var(x), P, U)
    if isinstance(x, Var):
        return sb
    return SubbandSet2D(*(b.value for b in (sb.ll, sb.lh, sb.hl, sb.hh)), sb.orig_h, sb.orig_w,
                        [_pair_out(p, True) for p in sb.passes])


def _up_2d(sb: SubbandSet2D, P: LiftOperator, U: LiftOperator) -> Var:
    ll = _to_var(sb.ll)
    tape = ll.tape
    lh, hl, hh = (_to_var(b, tape) for b in (sb.lh, sb.hl, sb.hh))
    for b in (lh, hl, hh):
        if b.shape != ll.shape:
            raise ValueError(f"sub-band shape {b.shape} differs from LL {ll.shape}")
    if ll.value.ndim != 4:
        raise ValueError(f"sub-bands must be [N, C, H, W], got {ll.shape}")
    s = _up_1d(LiftPair1D(ll, lh, sb.orig_h, 2), P, U)
    d = _up_1d(LiftPair1D(hl, hh, sb.orig_h, 2), P, U)
    return _up_1d(LiftPair1D(s, d, sb.orig_w, 3), P, U)


def lift_up_2d(sb: SubbandSet2D, P: LiftOperator, U: LiftOperator) -> Value:
    return _out(_up_2d(sb, P, U), not isinstance(sb.ll, Var))


def pool_output(sb: SubbandSet2D, mode: str = "sum") -> Value | SubbandSet2D:
    """Collapse a sub-band set to the pooled output for ``mode``."""
    if mode == "all":
        return sb
    if mode in BANDS:
        return sb.band(mode)
    if mode != "sum":
        raise ValueError(f"pool mode must be one of {POOL_MODES}, got {mode!r}")
    if isinstance(sb.ll, Var):
        tape = sb.ll.tape
        return tape.add(tape.add(sb.ll, sb.lh), tape.add(sb.hl, sb.hh))
    return sb.ll + sb.lh + sb.hl + sb.hh


def lift_params_init(
    cfg: LiftConfig, channels: int, seed: int | np.random.Generator = 0, *, zero: bool = False, dtype=np.float32
) -> tuple[LiftOperator, LiftOperator]:
    """Build the (P, U) pair for one pooling layer.

    Learned weights are uniform in ``[-a, a]`` with ``a = 1/sqrt(fan_in)``;
    biases start at zero. ``zero=True`` gives all-zero weights.
    """
    if cfg.operator_kind == "classical":
        return LiftOperator.classical_predict(cfg.boundary), LiftOperator.classical_update(cfg.boundary)
    g1 = cfg.groups1 or channels
    g2 = cfg.groups2 or channels
    cmid = cfg.mid_channels or channels
    if channels % g1 or cmid % g1:
        raise ValueError(f"channels {channels} / mid {cmid} not divisible by groups1={g1}")
    if channels % g2 or cmid % g2:
        raise ValueError(f"channels {channels} / mid {cmid} not divisible by groups2={g2}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = cfg.kernel_size

    def uniform(shape, fan_in):
        if zero:
            return np.zeros(shape, dtype=dtype)
        a = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape).astype(dtype)

    def make():
        w1 = uniform((cmid, channels // g1, k), channels // g1 * k)
        w2 = uniform((channels, cmid // g2, 1), cmid // g2)
        return LiftOperator("learned", cfg.boundary, None, w1, np.zeros(cmid, dtype), w2,
                            np.zeros(channels, dtype), g1, g2)

    return make(), make()
