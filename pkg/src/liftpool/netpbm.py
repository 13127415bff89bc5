"""Binary PGM (P5) and PPM (P6) images with maxval 255."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import FormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _token(raw: bytes, pos: int, name: str) -> tuple[bytes, int]:
    """Next header token, skipping whitespace and ``#`` comments."""
    n = len(raw)
    while pos < n:
        c = raw[pos:pos + 1]
        if c in _WHITESPACE and c:
            pos += 1
        elif c == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and raw[pos:pos + 1] not in _WHITESPACE and raw[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError(name, "header ended early")
    return raw[start:pos], pos


def _int_field(raw: bytes, pos: int, name: str) -> tuple[int, int]:
    tok, pos = _token(raw, pos, name)
    if not tok.isdigit():
        raise FormatError(name, f"expected a decimal integer, got {tok[:16]!r}")
    value = int(tok)
    if value < 1:
        raise FormatError(name, f"must be positive, got {value}")
    return value, pos


def decode_pnm(raw: bytes) -> np.ndarray:
    """Decode P5/P6 bytes into ``uint8`` ``[H, W]`` (gray) or ``[H, W, 3]`` (color)."""
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError("magic", f"expected P5 or P6, got {magic!r}")
    pos = 2
    if pos >= len(raw) or raw[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("magic", "magic number must be followed by whitespace")
    width, pos = _int_field(raw, pos, "width")
    height, pos = _int_field(raw, pos, "height")
    maxval, pos = _int_field(raw, pos, "maxval")
    if maxval != 255:
        raise FormatError("maxval", f"only maxval 255 is supported, got {maxval}")
    if pos >= len(raw) or raw[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("maxval", "header must end with a single whitespace byte")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    if len(raw) - pos < need:
        raise FormatError("payload", f"expected {need} bytes, found {len(raw) - pos}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=need, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return pixels.reshape(shape).copy()


def encode_pnm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise TypeError(f"pixels must be uint8, got {pixels.dtype}")
    if pixels.ndim == 2:
        magic = b"P5"
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected [H, W] or [H, W, 3] pixels, got {pixels.shape}")
    h, w = pixels.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(pixels).tobytes()


def read_pgm(src) -> np.ndarray:
    """Read a P5/P6 file (path) or in-memory bytes."""
    raw = bytes(src) if isinstance(src, (bytes, bytearray, memoryview)) else Path(src).read_bytes()
    return decode_pnm(raw)


def write_pgm(pixels: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``[H, W]`` as P5 or ``[H, W, 3]`` as P6."""
    Path(path).write_bytes(encode_pnm(pixels))


read_ppm = read_pgm
write_ppm = write_pgm


def to_tensor(pixels: np.ndarray, dtype=np.float64) -> np.ndarray:
    """uint8 image -> ``[1, C, H, W]`` in [0, 1]."""
    arr = np.asarray(pixels, dtype=dtype) / 255.0
    if arr.ndim == 2:
        return arr[None, None]
    return np.moveaxis(arr, -1, 0)[None]


def normalize_to_u8(band: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max scale to 0..255; a constant band maps to 0."""
    lo, hi = float(band.min()), float(band.max())
    if hi > lo:
        scaled = (band - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(band, dtype=np.float64)
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8), lo, hi
