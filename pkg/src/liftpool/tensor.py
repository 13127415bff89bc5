"""Dense tensor primitives shared by every other module.

Tensors are plain contiguous ``numpy.ndarray`` values (float32 or float64).
The helpers here add the validation and boundary handling the lifting and
network code relies on; none of them mutate their inputs.
"""

from __future__ import annotations

import enum
import numpy as np

Tensor = np.ndarray

FLOAT_TYPES = (np.float32, np.float64)


class PadMode(str, enum.Enum):
    ZERO = "zero"
    REPLICATE = "replicate"
    SYMMETRIC = "symmetric"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "PadMode | str") -> "PadMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown pad mode {value!r}; expected one of {names}") from None


_NP_MODE = {
    PadMode.REPLICATE: "edge",
    PadMode.SYMMETRIC: "symmetric",
    PadMode.PERIODIC: "wrap",
}


def tensor(data, dtype=np.float64) -> Tensor:
    """Build a contiguous float tensor, rejecting zero-sized input."""
    dtype = np.dtype(dtype)
    if dtype.type not in FLOAT_TYPES:
        raise TypeError(f"unsupported element type {dtype}; use float32 or float64")
    arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
    if arr.size == 0:
        raise ValueError(f"zero-sized tensor of shape {arr.shape} is not allowed")
    return arr


def pad_index(length: int, before: int, after: int, mode: PadMode | str) -> np.ndarray:
    """Source index for every position of a padded axis; ``-1`` marks zero fill."""
    mode = PadMode.parse(mode)
    idx = np.arange(length)
    if mode is PadMode.ZERO:
        return np.pad(idx, (before, after), mode="constant", constant_values=-1)
    return np.pad(idx, (before, after), mode=_NP_MODE[mode])


def pad_matrix(length: int, before: int, after: int, mode: PadMode | str, dtype) -> np.ndarray:
    """One-hot ``[length, length + before + after]`` matrix so that ``x @ M`` pads ``x``.

    Its transpose scatters gradients of the padded signal back onto ``x``.
    """
    idx = pad_index(length, before, after, mode)
    m = np.zeros((length, idx.size), dtype=dtype)
    cols = np.nonzero(idx >= 0)[0]
    m[idx[cols], cols] = 1
    return m


def pad_axis(x: Tensor, before: int, after: int, mode: PadMode | str, axis: int = -1) -> Tensor:
    xm = np.moveaxis(x, axis, -1)
    out = xm @ pad_matrix(xm.shape[-1], before, after, mode, x.dtype)
    return np.moveaxis(out, -1, axis)


def _check_conv1d(x: Tensor, w: Tensor, b: Tensor | None, groups: int) -> None:
    if x.ndim < 3:
        raise ValueError(f"conv1d input must be [N, C, ..., L], got shape {x.shape}")
    if w.ndim != 3:
        raise ValueError(f"conv1d weight must be [Cout, Cin/groups, K], got shape {w.shape}")
    c = x.shape[1]
    cout, cin_g, k = w.shape
    if groups < 1 or c % groups:
        raise ValueError(f"input channels {c} not divisible by groups={groups}")
    if cout % groups:
        raise ValueError(f"output channels {cout} not divisible by groups={groups}")
    if cin_g != c // groups:
        raise ValueError(f"weight expects {cin_g} channels per group, input has {c // groups}")
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"bias must have shape ({cout},), got {b.shape}")


def _grouped_view(x: Tensor, groups: int) -> Tensor:
    """[N, C, ..., L] -> [N, G, C/G, M, L] with all middle axes folded into M."""
    n, c, length = x.shape[0], x.shape[1], x.shape[-1]
    return x.reshape(n, groups, c // groups, -1, length)


def conv1d_grouped(
    x: Tensor,
    w: Tensor,
    b: Tensor | None,
    groups: int = 1,
    pad: PadMode | str = PadMode.ZERO,
) -> Tensor:
    """Stride-1 "same" grouped cross-correlation along the last axis.

    ``x`` is ``[N, C, L]``; extra axes between C and L are treated as batch,
    so ``[N, C, H, W]`` convolves every row independently.
    """
    _check_conv1d(x, w, b, groups)
    cout, cin_g, k = w.shape
    half = k // 2
    length = x.shape[-1]
    xp = _grouped_view(pad_axis(x, half, half, pad), groups)
    wg = w.reshape(groups, cout // groups, cin_g, k)
    y = np.zeros(xp.shape[:2] + (cout // groups,) + xp.shape[3:-1] + (length,), dtype=x.dtype)
    for j in range(k):
        y += np.einsum("ngiml,goi->ngoml", xp[..., j:j + length], wg[..., j])
    y = y.reshape((x.shape[0], cout) + x.shape[2:])
    if b is not None:
        y = y + b.reshape((1, cout) + (1,) * (x.ndim - 2))
    return y


def conv1d_grouped_backward(
    gy: Tensor, x: Tensor, w: Tensor, groups: int, pad: PadMode | str
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of :func:`conv1d_grouped` w.r.t. input, weight and bias."""
    cout, cin_g, k = w.shape
    half = k // 2
    length = x.shape[-1]
    m = pad_matrix(length, half, half, pad, x.dtype)
    xp = _grouped_view(x @ m, groups)
    gyg = _grouped_view(gy, groups)
    wg = w.reshape(groups, cout // groups, cin_g, k)
    gw = np.empty_like(wg)
    gxp = np.zeros_like(xp)
    for j in range(k):
        gw[..., j] = np.einsum("ngoml,ngiml->goi", gyg, xp[..., j:j + length])
        gxp[..., j:j + length] += np.einsum("ngoml,goi->ngiml", gyg, wg[..., j])
    gx = (gxp @ m.T).reshape(x.shape)
    gb = gy.sum(axis=tuple(i for i in range(gy.ndim) if i != 1))
    return gx, gw.reshape(w.shape), gb


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2D cross-correlation with zero padding; ``padding=None`` means ``K // 2``."""
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects [N,C,H,W] and [Cout,Cin,KH,KW], got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"conv2d weight expects {w.shape[1]} input channels, got {x.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"bias must have shape ({w.shape[0]},), got {b.shape}")
    kh, kw = w.shape[2:]
    ph, pw = (kh // 2, kw // 2) if padding is None else (padding, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(y)


def conv2d_backward(
    gy: Tensor, x: Tensor, w: Tensor, stride: int = 1, padding: int | None = None
) -> tuple[Tensor, Tensor, Tensor]:
    kh, kw = w.shape[2:]
    ph, pw = (kh // 2, kw // 2) if padding is None else (padding, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    ho, wo = gy.shape[2:]
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            gw[:, :, i, j] = np.tensordot(gy, patch, axes=([0, 2, 3], [0, 2, 3]))
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.tensordot(
                gy, w[:, :, i, j], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    gx = gxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]]
    return np.ascontiguousarray(gx), gw, gy.sum(axis=(0, 2, 3))


def elementwise(a, b, op: str) -> Tensor:
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    if a_arr.ndim and b_arr.ndim and a_arr.shape != b_arr.shape:
        raise ValueError(f"shape mismatch for {op}: {a_arr.shape} vs {b_arr.shape}")
    if op == "add":
        return a_arr + b_arr
    if op == "sub":
        return a_arr - b_arr
    if op == "mul":
        return a_arr * b_arr
    raise ValueError(f"unknown elementwise op {op!r}")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def reduce(x: Tensor, kind: str):
    """``sum``/``mean`` return a scalar; ``max_with_argmax`` returns ``(value, flat_index)``."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot reduce an empty tensor")
    if kind == "sum":
        return x.sum()
    if kind == "mean":
        return x.mean()
    if kind == "max_with_argmax":
        i = int(np.argmax(x))  # first occurrence wins ties
        return x.flat[i], i
    raise ValueError(f"unknown reduction {kind!r}")


def pad_to_even(x: Tensor, axis: int) -> tuple[Tensor, int]:
    """Append one replicated edge sample when the axis length is odd."""
    n = x.shape[axis]
    if n % 2 == 0:
        return x, n
    last = np.take(x, [n - 1], axis=axis)
    return np.concatenate([x, last], axis=axis), n


def crop(x: Tensor, length: int, axis: int) -> Tensor:
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, length)
    return x[tuple(sl)]

