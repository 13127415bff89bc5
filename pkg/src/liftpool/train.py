"""SGD with momentum and step decay, the training loop, and the metrics report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .autodiff import Tape, backward
from .data import Dataset
from .losses import LossConfig, lifting_constraints, total_loss
from .metrics import segmentation_miou, top1_error
from .models import Model

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.02
    lr_decay: float = 0.1
    milestones: tuple[int, ...] = (25,)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 20
    epochs: int = 30
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        self.milestones = tuple(self.milestones)
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError(f"milestones must be ascending, got {self.milestones}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def lr_at(self, epoch: int) -> float:
        drops = sum(1 for m in self.milestones if epoch >= m)
        return self.lr * self.lr_decay ** drops

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        return d


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    decay: Iterable[str] | None = None,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """``v <- momentum * v - lr * (g + wd * theta)``; ``theta <- theta + v``.

    Weight decay applies only to names in ``decay`` (all names when None).
    Returns new dicts; inputs are left untouched.
    """
    decay = set(params) if decay is None else set(decay)
    new_params, new_vel = {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {theta.shape}")
        if name in decay and weight_decay:
            g = g + weight_decay * theta
        v = velocity.get(name)
        v = -lr * g if v is None else momentum * v - lr * g
        new_vel[name] = v.astype(theta.dtype)
        new_params[name] = (theta + v).astype(theta.dtype)
    return new_params, new_vel


@dataclass
class MetricsReport:
    variant: str = ""
    epochs: list[dict] = field(default_factory=list)
    top1_error: float | None = None
    consistency: float | None = None
    corruption: list[dict] = field(default_factory=list)
    mce: float | None = None
    miou: float | None = None
    runtime_seconds: float = 0.0
    data_hash: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_row(self) -> dict:
        last = self.epochs[-1] if self.epochs else {}
        return {
            "variant": self.variant,
            "top1_error": self.top1_error,
            "consistency": self.consistency,
            "mce": self.mce,
            "miou": self.miou,
            "task_loss": last.get("task_loss"),
            "c_u": last.get("c_u"),
            "c_p": last.get("c_p"),
            "runtime_seconds": self.runtime_seconds,
            "data_hash": self.data_hash,
        }

    def to_csv(self) -> str:
        """Per-epoch table followed by nothing else; corruption rows go in :meth:`corruption_csv`."""
        return rows_to_csv(self.epochs, EPOCH_COLUMNS)

    def corruption_csv(self) -> str:
        return rows_to_csv(self.corruption, ["kind", "severity", "error"])


EPOCH_COLUMNS = ["epoch", "lr", "task_loss", "c_u", "c_p", "total", "top1_error", "miou"]
SUMMARY_COLUMNS = ["variant", "top1_error", "consistency", "mce", "miou", "task_loss", "c_u", "c_p",
                   "runtime_seconds", "data_hash"]


def rows_to_csv(rows: Iterable[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def _task_loss(tape: Tape, logits, labels, task: str):
    if task == "segmentation":
        return tape.softmax_cross_entropy(logits, labels, ignore_index=255)
    return tape.softmax_cross_entropy(logits, labels)


def evaluate_epoch(model: Model, dataset: Dataset) -> dict:
    if dataset.task == "segmentation":
        return {"miou": segmentation_miou(model, dataset, model.spec.classes)}
    return {"top1_error": top1_error(model, dataset)}


def train(
    model: Model,
    dataset: Dataset,
    cfg: TrainConfig,
    on_step: Callable[[dict], None] | None = None,
    variant: str = "",
) -> tuple[Model, MetricsReport]:
    """Train ``model`` in place (its ``params`` are replaced each step).

    Shuffling uses ``cfg.seed`` only, so the batch order is identical across
    model variants. ``on_step`` receives one record per optimizer step.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    order_hash = hashlib.sha256()
    velocity: dict[str, np.ndarray] = {}
    decay = model.decay_names()
    report = MetricsReport(variant=variant)
    n = len(dataset)
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        order_hash.update(perm.astype("<i8").tobytes())
        sums = np.zeros(4)
        batches = 0
        for i in range(0, n, cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            tape = Tape()
            x = tape.const(dataset.images[idx].astype(model.dtype))
            out = model.forward(tape, x)
            task = _task_loss(tape, out.logits, dataset.labels[idx], dataset.task)
            cu, cp = lifting_constraints(tape, out.passes, cfg.loss.constraint_form)
            loss, rep = total_loss(task, cu, cp, cfg.loss)
            if not math.isfinite(rep.total):
                raise NumericError(f"non-finite loss {rep.total} at step {step} (epoch {epoch})")
            if lr:
                grads = backward(tape, loss)
                g = {}
                for name, arr in model.params.items():
                    gv = grads.get(tape.param(arr))
                    g[name] = np.zeros_like(arr) if gv is None else gv
                model.params, velocity = sgd_step(model.params, g, velocity, lr, cfg.momentum,
                                                  cfg.weight_decay, decay)
            record = {"step": step, "epoch": epoch, **rep.to_dict(), "lr": lr}
            if on_step:
                on_step(record)
            sums += (rep.task_loss, rep.c_u, rep.c_p, rep.total)
            batches += 1
            step += 1
        means = sums / max(batches, 1)
        row = {"epoch": epoch, "lr": lr, "task_loss": means[0], "c_u": means[1], "c_p": means[2],
               "total": means[3], **evaluate_epoch(model, dataset)}
        report.epochs.append(row)
        log.info("epoch %d: %s", epoch, {k: round(v, 5) if isinstance(v, float) else v for k, v in row.items()})
    if report.epochs:
        last = report.epochs[-1]
        report.top1_error = last.get("top1_error")
        report.miou = last.get("miou")
    report.runtime_seconds = time.perf_counter() - start
    report.data_hash = order_hash.hexdigest()
    return model, report


class JsonlLog:
    """Append step records to a JSON-lines file."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w")

    def __call__(self, record: dict) -> None:
        keys = ("step", "task_loss", "c_u", "c_p", "total", "lr")
        self._fh.write(json.dumps({k: record[k] for k in keys}) + "\n")

    def close(self) -> None:
        self._fh.close()
