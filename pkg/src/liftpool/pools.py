"""Baseline pooling layers: max (with indices), average, strided-conv skip, max-unpool.

Windows that do not fit inside the input are dropped. Max indices are flat
positions inside each ``k x k`` window (row-major), ties going to the
lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var


@dataclass(frozen=True)
class PoolConfig:
    k: int = 2
    s: int = 2

    def __post_init__(self):
        if self.k < 1 or self.s < 1:
            raise ValueError(f"pool kernel and stride must be >= 1, got k={self.k}, s={self.s}")


def _var(x) -> tuple[Var, bool]:
    if isinstance(x, Var):
        return x, False
    return Tape().const(np.asarray(x)), True


def max_pool2d(x, cfg: PoolConfig = PoolConfig()):
    """Returns ``(pooled, indices)``; indices have the pooled shape."""
    xv, arr = _var(x)
    out, idx = xv.tape.max_pool2d(xv, cfg.k, cfg.s)
    return (out.value if arr else out), idx


def avg_pool2d(x, cfg: PoolConfig = PoolConfig()):
    xv, arr = _var(x)
    out = xv.tape.avg_pool2d(xv, cfg.k, cfg.s)
    return out.value if arr else out


def skip_pool2d(x, w, b=None, stride: int = 2):
    """Strided convolution: a "same" conv sampled every ``stride`` pixels."""
    xv, arr = _var(x)
    tape = xv.tape
    wv = w if isinstance(w, Var) else tape.const(np.asarray(w))
    bv = b if (b is None or isinstance(b, Var)) else tape.const(np.asarray(b))
    out = tape.conv2d(xv, wv, bv, stride=stride)
    return out.value if arr else out


def max_up_pool2d(y, idx: np.ndarray, out_shape, cfg: PoolConfig = PoolConfig()):
    """Scatter ``y`` back onto the recorded max positions; every other cell is 0.

    ``out_shape`` may be the full ``(N, C, H, W)`` or just ``(H, W)``.
    """
    yv, arr = _var(y)
    hw = tuple(out_shape)[-2:]
    out = yv.tape.max_unpool2d(yv, np.asarray(idx), hw, cfg.k, cfg.s)
    return out.value if arr else out
