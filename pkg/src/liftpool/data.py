"""Datasets: IDX and CIFAR binary parsers, seeded synthetic shapes, corruptions."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

IDX_TYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}

CIFAR_PIXELS = 3 * 32 * 32
CIFAR_LABEL_BYTES = {"cifar10": 1, "coarse": 2, "fine": 2}

SHAPE_KINDS = ("rectangle", "disk", "cross", "triangle")

NOISE_SIGMA = {1: 0.05, 2: 0.1, 3: 0.2}
BLUR_KERNEL = {1: 3, 2: 5, 3: 7}
SHIFT_PIXELS = {1: 1, 2: 2, 3: 4}
CORRUPTIONS = ("gaussian_noise", "box_blur", "shift")


@dataclass
class Dataset:
    images: np.ndarray  # [N, C, H, W] in [0, 1]
    labels: np.ndarray  # [N] class ids, or [N, H, W] masks
    split: str = "train"
    task: str = "classification"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N, C, H, W], got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("image values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.images)


def parse_idx(raw: bytes, scale: bool = True, dtype=np.float32) -> np.ndarray:
    """Decode an IDX blob. ``uint8`` payloads are scaled by 1/255 when ``scale``."""
    raw = bytes(raw)
    if len(raw) < 4:
        raise FormatError("magic", f"need 4 header bytes, got {len(raw)}")
    if raw[0] != 0 or raw[1] != 0:
        raise FormatError("magic", f"first two bytes must be zero, got {raw[:2].hex()}")
    code, ndim = raw[2], raw[3]
    if code not in IDX_TYPES:
        raise FormatError("dtype", f"unsupported type code 0x{code:02x}")
    if ndim == 0:
        raise FormatError("ndim", "at least one dimension is required")
    if len(raw) < 4 + 4 * ndim:
        raise FormatError("dims", f"need {4 * ndim} bytes of dimensions, got {len(raw) - 4}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    if 0 in dims:
        raise FormatError("dims", f"zero-sized dimension in {dims}")
    elem = IDX_TYPES[code]
    count = 1
    for d in dims:
        count *= d
    need = count * elem.itemsize
    body = len(raw) - 4 - 4 * ndim
    if body < need:
        raise FormatError("payload", f"truncated: expected {need} bytes, found {body}")
    if body > need:
        raise FormatError("payload", f"{body - need} unexpected trailing bytes")
    arr = np.frombuffer(raw, dtype=elem, count=count, offset=4 + 4 * ndim).reshape(dims)
    if not scale:
        return arr.astype(elem.newbyteorder("="))
    if code == 0x08:
        return (arr.astype(dtype) / 255).astype(dtype)
    return arr.astype(dtype)


def encode_idx(array: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx` for unscaled integer/float arrays."""
    array = np.asarray(array)
    for code, dt in IDX_TYPES.items():
        if array.dtype.kind == dt.kind and array.dtype.itemsize == dt.itemsize:
            header = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
            return header + array.astype(dt).tobytes()
    raise TypeError(f"no IDX type for {array.dtype}")


def load_idx_dataset(images_path, labels_path, split: str = "train") -> Dataset:
    images = parse_idx(Path(images_path).read_bytes())
    labels = parse_idx(Path(labels_path).read_bytes(), scale=False).astype(np.int64)
    if images.ndim == 3:
        images = images[:, None]
    return Dataset(images, labels.reshape(-1), split)


def parse_cifar_binary(raw: bytes, label_mode: str = "cifar10", split: str = "train") -> Dataset:
    """Decode CIFAR binary records: label byte(s) then 3072 channel-planar pixels.

    ``label_mode`` is ``cifar10`` (one label byte) or ``coarse``/``fine``
    (CIFAR-100, two label bytes: coarse then fine).
    """
    if label_mode not in CIFAR_LABEL_BYTES:
        raise ValueError(f"label_mode must be one of {sorted(CIFAR_LABEL_BYTES)}, got {label_mode!r}")
    nlab = CIFAR_LABEL_BYTES[label_mode]
    rec = nlab + CIFAR_PIXELS
    raw = bytes(raw)
    if not raw or len(raw) % rec:
        raise FormatError("record_size", f"length {len(raw)} is not a positive multiple of {rec}")
    recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    labels = recs[:, 1 if label_mode == "fine" else 0].astype(np.int64)
    images = recs[:, nlab:].reshape(-1, 3, 32, 32).astype(np.float32) / 255
    return Dataset(images.astype(np.float32), labels, split)


def _draw_shape(kind: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    r = int(rng.integers(max(3, size // 5), size // 3 + 1))
    cy = int(rng.integers(r, size - r))
    cx = int(rng.integers(r, size - r))
    if kind == 0:
        hh = int(rng.integers(max(1, r // 2), r + 1))
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= r)
    if kind == 1:
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == 2:
        t = max(1, r // 3)
        vertical = (np.abs(xx - cx) <= t) & (np.abs(yy - cy) <= r)
        horizontal = (np.abs(yy - cy) <= t) & (np.abs(xx - cx) <= r)
        return vertical | horizontal
    # triangle pointing up, apex at the top
    rel = yy - (cy - r)
    return (rel >= 0) & (yy <= cy + r) & (np.abs(xx - cx) * 2 <= rel)


def synth_shapes(
    n: int, size: int = 16, classes: int = 3, seed: int = 0, task: str = "classification", split: str = "train"
) -> Dataset:
    """Grayscale images with one random rectangle, disk, cross or triangle each.

    Classification labels are the shape kind (balanced to within one).
    Segmentation masks hold ``kind + 1`` on shape pixels, 0 elsewhere.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if not 1 <= classes <= len(SHAPE_KINDS):
        raise ValueError(f"classes must be in 1..{len(SHAPE_KINDS)}, got {classes}")
    if task not in ("classification", "segmentation"):
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed)
    kinds = rng.permutation(np.arange(n) % classes)
    images = np.empty((n, 1, size, size), dtype=np.float32)
    masks = np.zeros((n, size, size), dtype=np.int64)
    for i, kind in enumerate(kinds):
        shape = _draw_shape(int(kind), size, rng)
        bg = rng.uniform(0.0, 0.25)
        fg = rng.uniform(0.6, 1.0)
        img = np.where(shape, fg, bg) + rng.normal(0.0, 0.03, (size, size))
        images[i, 0] = np.clip(img, 0.0, 1.0)
        masks[i][shape] = kind + 1
    labels = masks if task == "segmentation" else kinds.astype(np.int64)
    return Dataset(images, labels, split, task)


def translate(images: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Move content by ``(dy, dx)`` pixels, replicating the edge into the gap."""
    h, w = images.shape[-2:]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return images[..., rows[:, None], cols[None, :]]


def box_blur(images: np.ndarray, k: int) -> np.ndarray:
    half = k // 2
    pad = [(0, 0)] * (images.ndim - 2) + [(half, half), (half, half)]
    xp = np.pad(images, pad, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(-2, -1))
    return win.mean(axis=(-2, -1)).astype(images.dtype)


@dataclass(frozen=True)
class CorruptionSpec:
    """Severity 1..3 follows the ladder; severity 0 is the identity (clean reference)."""

    kind: str
    severity: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise ValueError(f"corruption kind must be one of {CORRUPTIONS}, got {self.kind!r}")
        if not 0 <= self.severity <= 3:
            raise ValueError(f"severity must be in 0..3, got {self.severity}")


def apply_corruption(images: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    if spec.severity == 0:
        return images.copy()
    if spec.kind == "gaussian_noise":
        rng = np.random.default_rng(spec.seed)
        noisy = images + rng.normal(0.0, NOISE_SIGMA[spec.severity], images.shape)
        return np.clip(noisy, 0.0, 1.0).astype(images.dtype)
    if spec.kind == "box_blur":
        return box_blur(images, BLUR_KERNEL[spec.severity])
    p = SHIFT_PIXELS[spec.severity]
    return translate(images, p, p)


def default_corruptions(seed: int = 0) -> list[CorruptionSpec]:
    return [CorruptionSpec(k, s, seed) for k in CORRUPTIONS for s in (1, 2, 3)]
