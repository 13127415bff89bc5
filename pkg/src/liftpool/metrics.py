"""Evaluation metrics: top-1 error, shift consistency, corruption error, mIoU.

``model`` arguments are any callable mapping ``[N, C, H, W]`` images to
logits (``[N, classes]`` or ``[N, classes, H, W]``).
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .data import CorruptionSpec, Dataset, apply_corruption, translate

Predictor = Callable[[np.ndarray], np.ndarray]

DEFAULT_SHIFTS = tuple(itertools.product((0, 1, 2), repeat=2))


def predict(model: Predictor, images: np.ndarray, batch_size: int = 100) -> np.ndarray:
    out = [np.argmax(model(images[i:i + batch_size]), axis=1) for i in range(0, len(images), batch_size)]
    return np.concatenate(out)


def top1_error(model: Predictor, dataset: Dataset, batch_size: int = 100) -> float:
    pred = predict(model, dataset.images, batch_size)
    return float(np.mean(pred != dataset.labels))


def shift_consistency(
    model: Predictor,
    dataset: Dataset,
    shifts: Sequence[tuple[int, int]] = DEFAULT_SHIFTS,
    max_pairs: int | None = None,
    batch_size: int = 100,
) -> float:
    """Fraction of (image, shift pair) cases whose two predictions agree.

    Pairs are all ordered pairs of ``shifts`` (identical pairs included),
    truncated to the first ``max_pairs``.
    """
    shifts = [tuple(s) for s in shifts]
    pairs = list(itertools.product(range(len(shifts)), repeat=2))
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    preds = [predict(model, translate(dataset.images, dy, dx), batch_size) for dy, dx in shifts]
    agree = [np.mean(preds[a] == preds[b]) for a, b in pairs]
    return float(np.mean(agree))


def corruption_error(
    model: Predictor, dataset: Dataset, specs: Sequence[CorruptionSpec], batch_size: int = 100
) -> tuple[list[dict], float]:
    """Top-1 error per (kind, severity) and the mean over kinds of per-kind means.

    Values are raw error rates; no baseline normalisation is applied.
    """
    rows = []
    for spec in specs:
        corrupted = Dataset(apply_corruption(dataset.images, spec), dataset.labels, dataset.split, dataset.task)
        rows.append({"kind": spec.kind, "severity": spec.severity,
                     "error": top1_error(model, corrupted, batch_size)})
    return rows, mean_corruption_error(rows)


def mean_corruption_error(rows: Sequence[dict]) -> float:
    kinds: dict[str, list[float]] = {}
    for r in rows:
        kinds.setdefault(r["kind"], []).append(r["error"])
    if not kinds:
        return float("nan")
    return float(np.mean([np.mean(v) for v in kinds.values()]))


def miou(pred_masks: np.ndarray, true_masks: np.ndarray, classes: int) -> float:
    """Mean IoU over the classes that occur in ``true_masks``."""
    pred_masks = np.asarray(pred_masks)
    true_masks = np.asarray(true_masks)
    if pred_masks.shape != true_masks.shape:
        raise ValueError(f"mask shapes differ: {pred_masks.shape} vs {true_masks.shape}")
    ious = []
    for c in range(classes):
        t = true_masks == c
        if not t.any():
            continue
        p = pred_masks == c
        ious.append((p & t).sum() / (p | t).sum())
    return float(np.mean(ious)) if ious else float("nan")


def segmentation_miou(model: Predictor, dataset: Dataset, classes: int, batch_size: int = 100) -> float:
    return miou(predict(model, dataset.images, batch_size), dataset.labels, classes)
