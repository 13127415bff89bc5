"""Task losses, the two lifting constraints, and the weighted total objective."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .autodiff import Tape, Var
from .lifting import LiftPair1D

IGNORE_LABEL = 255
L2_EPS = 1e-12


@dataclass
class LossConfig:
    lambda_u: float = 0.01
    lambda_p: float = 0.1
    constraint_form: str = "mean_squared"  # or "l2_norm"

    def __post_init__(self):
        if self.lambda_u < 0 or self.lambda_p < 0:
            raise ValueError("constraint weights must be non-negative")
        if self.constraint_form not in ("mean_squared", "l2_norm"):
            raise ValueError(f"unknown constraint form {self.constraint_form!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossReport:
    task_loss: float
    c_u: float
    c_p: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _vars(*xs):
    tape = next((x.tape for x in xs if isinstance(x, Var)), None)
    arr = tape is None
    tape = tape or Tape()
    return tape, [x if isinstance(x, Var) else tape.const(np.asarray(x)) for x in xs], arr


def _residual_norm(tape: Tape, r: Var, form: str) -> Var:
    if form == "mean_squared":
        return tape.scale(tape.squared_l2(r), 1.0 / r.value.size)
    if form == "l2_norm":
        return tape.sqrt(tape.add(tape.squared_l2(r), L2_EPS))
    raise ValueError(f"unknown constraint form {form!r}")


def constraint_cu(s, x_odd, form: str = "mean_squared"):
    """Distance between the approximation and the odd samples."""
    tape, (sv, ov), arr = _vars(s, x_odd)
    if sv.shape != ov.shape:
        raise ValueError(f"shape mismatch: s {sv.shape} vs x_odd {ov.shape}")
    out = _residual_norm(tape, tape.sub(sv, ov), form)
    return float(out.value) if arr else out


def constraint_cp(x_odd, p_of_x_even, form: str = "mean_squared"):
    """Size of the prediction residual, i.e. of the detail band."""
    tape, (ov, pv), arr = _vars(x_odd, p_of_x_even)
    if ov.shape != pv.shape:
        raise ValueError(f"shape mismatch: x_odd {ov.shape} vs prediction {pv.shape}")
    out = _residual_norm(tape, tape.sub(ov, pv), form)
    return float(out.value) if arr else out


def lifting_constraints(tape: Tape, passes: Iterable[LiftPair1D], form: str = "mean_squared") -> tuple[Var, Var]:
    """Sum ``c_u`` and ``c_p`` over every recorded 1D lifting pass.

    ``c_p`` uses ``d`` directly since ``d = x_odd - P(x_even)``.
    """
    cu = cp = None
    for p in passes:
        u = _residual_norm(tape, tape.sub(p.s, p.x_odd), form)
        q = _residual_norm(tape, p.d, form)
        cu = u if cu is None else tape.add(cu, u)
        cp = q if cp is None else tape.add(cp, q)
    if cu is None:
        zero = tape.const(np.zeros((), dtype=np.float64))
        return zero, zero
    return cu, cp


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of the true class for ``[N, classes]`` logits."""
    tape, (lv,), arr = _vars(logits)
    if lv.value.ndim != 2:
        raise ValueError(f"logits must be [N, classes], got {lv.shape}")
    out = tape.softmax_cross_entropy(lv, labels)
    return float(out.value) if arr else out


def pixel_cross_entropy(logits, mask, ignore_index: int = IGNORE_LABEL):
    """Per-pixel cross-entropy averaged over pixels whose label is not ``ignore_index``."""
    tape, (lv,), arr = _vars(logits)
    if lv.value.ndim != 4:
        raise ValueError(f"logits must be [N, classes, H, W], got {lv.shape}")
    mask = np.asarray(mask)
    expected = (lv.shape[0],) + lv.shape[2:]
    if mask.shape != expected:
        raise ValueError(f"mask shape {mask.shape} does not match logits {expected}")
    out = tape.softmax_cross_entropy(lv, mask, ignore_index=ignore_index)
    return float(out.value) if arr else out


def total_loss(task, c_u, c_p, cfg: LossConfig = LossConfig()):
    """``task + lambda_u * c_u + lambda_p * c_p``.

    With vars, returns ``(total_var, LossReport)``; with floats, the report.
    """
    if isinstance(task, Var):
        tape = task.tape
        total = tape.add(tape.add(task, tape.scale(c_u, cfg.lambda_u)), tape.scale(c_p, cfg.lambda_p))
        report = LossReport(float(task.value), float(c_u.value), float(c_p.value), float(total.value))
        return total, report
    task, c_u, c_p = float(task), float(c_u), float(c_p)
    return LossReport(task, c_u, c_p, task + cfg.lambda_u * c_u + cfg.lambda_p * c_p)


def recomposition_gap(report: LossReport, cfg: LossConfig) -> float:
    expected = report.task_loss + cfg.lambda_u * report.c_u + cfg.lambda_p * report.c_p
    return abs(report.total - expected) if math.isfinite(report.total) else math.inf
