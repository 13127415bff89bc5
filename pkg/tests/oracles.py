"""Brute-force reference implementations used as test oracles.

Everything here is written with explicit Python loops and scalar index
arithmetic so it shares no code path with the vectorised library.
"""

from __future__ import annotations

import math

import numpy as np


def boundary_index(i: int, n: int, mode: str) -> int | None:
    """Source index for position ``i`` of a length-``n`` signal; None means zero."""
    if 0 <= i < n:
        return i
    if mode == "zero":
        return None
    if mode == "replicate":
        return min(max(i, 0), n - 1)
    if mode == "periodic":
        return i % n
    if mode == "symmetric":
        # half-sample mirror: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ...
        period = 2 * n
        j = i % period
        return j if j < n else period - 1 - j
    raise ValueError(mode)


def sample(x, i, mode):
    j = boundary_index(i, len(x), mode)
    return 0.0 if j is None else x[j]


def conv1d_loops(x, w, b, groups, mode):
    """Grouped cross-correlation over the last axis of ``x`` [N, C, L]."""
    n, c, length = x.shape
    cout, cin_g, k = w.shape
    half = k // 2
    out_g = cout // groups
    y = np.zeros((n, cout, length))
    for bi in range(n):
        for o in range(cout):
            g = o // out_g
            for t in range(length):
                acc = 0.0 if b is None else float(b[o])
                for ci in range(cin_g):
                    sig = x[bi, g * cin_g + ci]
                    for kk in range(k):
                        acc += float(w[o, ci, kk]) * sample(sig, t + kk - half, mode)
                y[bi, o, t] = acc
    return y


def conv2d_loops(x, w, b, stride=1, padding=None):
    n, c, h, wd = x.shape
    cout, cin, kh, kw = w.shape
    p = kh // 2 if padding is None else padding
    ho = (h + 2 * p - kh) // stride + 1
    wo = (wd + 2 * p - kw) // stride + 1
    y = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else float(b[o])
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                r, s = i * stride + u - p, j * stride + v - p
                                if 0 <= r < h and 0 <= s < wd:
                                    acc += float(w[o, ci, u, v]) * float(x[bi, ci, r, s])
                    y[bi, o, i, j] = acc
    return y


def avg_pool_loops(x, k=2, s=2):
    n, c, h, w = x.shape
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    y = np.zeros((n, c, ho, wo))
    for bi in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    y[bi, ch, i, j] = sum(x[bi, ch, i * s + u, j * s + v] for u in range(k) for v in range(k)) / (k * k)
    return y


def max_pool_loops(x, k=2, s=2):
    n, c, h, w = x.shape
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    y = np.zeros((n, c, ho, wo))
    idx = np.zeros((n, c, ho, wo), dtype=np.int64)
    for bi in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best, arg = -math.inf, 0
                    for u in range(k):
                        for v in range(k):
                            val = x[bi, ch, i * s + u, j * s + v]
                            if val > best:
                                best, arg = val, u * k + v
                    y[bi, ch, i, j], idx[bi, ch, i, j] = best, arg
    return y, idx


# classical 5/3-style lifting on plain Python lists

def classical_lift_1d(x, mode="symmetric"):
    """Return ``(s, d)`` for one signal using P=(0,.5,.5), U=(.25,.25,0) taps."""
    x = list(map(float, x))
    if len(x) % 2:
        x.append(x[-1])
    even, odd = x[0::2], x[1::2]
    d = [odd[i] - 0.5 * (sample(even, i, mode) + sample(even, i + 1, mode)) for i in range(len(odd))]
    s = [even[i] + 0.25 * (sample(d, i - 1, mode) + sample(d, i, mode)) for i in range(len(even))]
    return s, d


def classical_lift_2d(img, mode="symmetric"):
    """Row pass then column passes; returns (LL, LH, HL, HH) as 2D arrays."""
    img = np.asarray(img, dtype=float)
    rows_s, rows_d = zip(*(classical_lift_1d(r, mode) for r in img))
    S, D = np.array(rows_s), np.array(rows_d)

    def columns(m):
        cs, cd = zip(*(classical_lift_1d(col, mode) for col in m.T))
        return np.array(cs).T, np.array(cd).T

    ll, lh = columns(S)
    hl, hh = columns(D)
    return ll, lh, hl, hh


def generic_lift_1d(x, P, U):
    """1D lift with arbitrary callables ``P(even)``/``U(d)`` (numpy 1D -> 1D)."""
    x = np.asarray(x, dtype=float)
    if len(x) % 2:
        x = np.append(x, x[-1])
    even, odd = x[0::2], x[1::2]
    d = odd - P(even)
    s = even + U(d)
    return s, d
