"""Desk-scale networks for exercising the pooling layers, plus checkpoint I/O.

Both models keep every trainable array in ``model.params`` (name -> array).
Lifting operators are rebuilt from those arrays on each forward pass, so
overwriting ``params`` (e.g. from a checkpoint) is all it takes to load.

Checkpoint layout, all little-endian::

    b"LPCK" | u32 version | u32 header length | JSON header | float32 payload
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .autodiff import Tape, Var
from .lifting import (
    BANDS,
    LiftConfig,
    LiftOperator,
    SubbandSet2D,
    lift_down_2d,
    lift_params_init,
    lift_up_2d,
    pool_output,
)

CLASSIFIER_POOLS = ("max", "avg", "skip", "lift")
SEGNET_POOLS = ("max", "lift")

CHECKPOINT_MAGIC = b"LPCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ClassifierSpec:
    in_channels: int = 1
    image_size: int = 16
    classes: int = 3
    channels: tuple[int, ...] = (16, 32)
    pooling: str = "max"
    lift: LiftConfig = field(default_factory=LiftConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["lift"] = self.lift.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierSpec":
        d = dict(d)
        d["channels"] = tuple(d.get("channels", (16, 32)))
        d["lift"] = LiftConfig(**d.get("lift", {}))
        return cls(**d)


@dataclass
class SegNetSpec:
    in_channels: int = 1
    image_size: int = 16
    classes: int = 4
    channels: tuple[int, int] = (16, 32)
    pooling: str = "max"
    lift: LiftConfig = field(default_factory=lambda: LiftConfig(pool_mode="all"))

    to_dict = ClassifierSpec.to_dict

    @classmethod
    def from_dict(cls, d: dict) -> "SegNetSpec":
        d = dict(d)
        d["channels"] = tuple(d.get("channels", (16, 32)))
        d["lift"] = LiftConfig(**d.get("lift", {"pool_mode": "all"}))
        return cls(**d)


def _uniform(rng, shape, fan_in, dtype, gain=math.sqrt(6.0)):
    a = gain / math.sqrt(fan_in)
    return rng.uniform(-a, a, size=shape).astype(dtype)


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


class Model:
    kind = ""

    def __init__(self, spec, seed: int, dtype):
        self.spec = spec
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self._rng = np.random.default_rng(seed)

    def _conv(self, name, cin, cout, k=3):
        self.params[f"{name}.w"] = _uniform(self._rng, (cout, cin, k, k), cin * k * k, self.dtype)
        self.params[f"{name}.b"] = np.zeros(cout, self.dtype)

    def _lift_pair(self, name, channels):
        P, U = lift_params_init(self.spec.lift, channels, self._rng, dtype=self.dtype)
        for role, op in (("P", P), ("U", U)):
            for key, arr in op.parameters().items():
                self.params[f"{name}.{role}.{key}"] = arr

    def lift_ops(self, name: str) -> tuple[LiftOperator, LiftOperator]:
        cfg = self.spec.lift
        if cfg.operator_kind == "classical":
            return lift_params_init(cfg, 1)
        ops = []
        for role in ("P", "U"):
            w1 = self.params[f"{name}.{role}.w1"]
            c = self.params[f"{name}.{role}.w2"].shape[0]
            ops.append(LiftOperator(
                "learned", cfg.boundary, None, w1, self.params[f"{name}.{role}.b1"],
                self.params[f"{name}.{role}.w2"], self.params[f"{name}.{role}.b2"],
                cfg.groups1 or c, cfg.groups2 or c,
            ))
        return ops[0], ops[1]

    def _p(self, tape: Tape, name: str) -> Var:
        return tape.param(self.params[name])

    def conv(self, tape: Tape, x: Var, name: str, stride: int = 1) -> Var:
        return tape.conv2d(x, self._p(tape, f"{name}.w"), self._p(tape, f"{name}.b"), stride=stride)

    def decay_names(self) -> list[str]:
        return [n for n in self.params if not is_bias(n)]

    def forward(self, tape: Tape, x: Var):
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        tape = Tape()
        out = self.forward(tape, tape.const(np.asarray(x, dtype=self.dtype)))
        return out.logits.value

    def spec_dict(self) -> dict:
        return {"type": self.kind, "spec": self.spec.to_dict()}


@dataclass
class ForwardResult:
    logits: Var
    passes: list = field(default_factory=list)  # LiftPair1D records for the constraints
    side: list = field(default_factory=list)  # per-level info handed to the decoder


class TinyClassifier(Model):
    """``blocks x [conv3x3, relu, conv3x3, relu, pool]`` then flatten + dense."""

    kind = "classifier"

    def __init__(self, spec: ClassifierSpec, seed: int = 0, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        if spec.pooling not in CLASSIFIER_POOLS:
            raise ValueError(f"classifier pooling must be one of {CLASSIFIER_POOLS}, got {spec.pooling!r}")
        if spec.pooling == "lift" and spec.lift.pool_mode == "all":
            raise ValueError("classifier lift pooling needs 'sum' or a single sub-band, not 'all'")
        size = spec.image_size
        for _ in spec.channels:
            if size % 2:
                raise ValueError(
                    f"image_size {spec.image_size} cannot be halved {len(spec.channels)} times evenly")
            size //= 2
        if size < 1:
            raise ValueError("final spatial size must be >= 1")
        self.final_size = size
        cin = spec.in_channels
        for i, c in enumerate(spec.channels, 1):
            self._conv(f"block{i}.conv1", cin, c)
            self._conv(f"block{i}.conv2", c, c)
            if spec.pooling == "skip":
                self._conv(f"block{i}.skip", c, c)
            elif spec.pooling == "lift":
                self._lift_pair(f"block{i}.lift", c)
            cin = c
        feat = cin * size * size
        self.params["head.w"] = _uniform(self._rng, (spec.classes, feat), feat, self.dtype)
        self.params["head.b"] = np.zeros(spec.classes, self.dtype)

    def pool(self, tape: Tape, x: Var, i: int, passes: list) -> Var:
        kind = self.spec.pooling
        if kind == "max":
            return tape.max_pool2d(x, 2, 2)[0]
        if kind == "avg":
            return tape.avg_pool2d(x, 2, 2)
        if kind == "skip":
            return self.conv(tape, x, f"block{i}.skip", stride=2)
        P, U = self.lift_ops(f"block{i}.lift")
        sb = lift_down_2d(x, P, U)
        passes.extend(sb.passes)
        out = pool_output(sb, self.spec.lift.pool_mode)
        if self.spec.lift.pool_mode == "sum":
            # keeps activation scale at that of average pooling (no batch norm here)
            out = tape.scale(out, 0.25)
        return out

    def forward(self, tape: Tape, x: Var) -> ForwardResult:
        passes: list = []
        h = x
        for i in range(1, len(self.spec.channels) + 1):
            h = tape.relu(self.conv(tape, h, f"block{i}.conv1"))
            h = tape.relu(self.conv(tape, h, f"block{i}.conv2"))
            h = self.pool(tape, h, i, passes)
        h = tape.reshape(h, (h.shape[0], -1))
        logits = tape.linear(h, self._p(tape, "head.w"), self._p(tape, "head.b"))
        return ForwardResult(logits, passes)


class TinySegNet(Model):
    """Two-level encoder/decoder whose up-pools consume their paired down-pool's side info.

    Max variant: the decoder gets the max indices. Lift variant: only LL
    continues down the encoder; LH/HL/HH are stashed and fed to LiftUpPool
    at the same level with the same operators.
    """

    kind = "segnet"

    def __init__(self, spec: SegNetSpec, seed: int = 0, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        if spec.pooling not in SEGNET_POOLS:
            raise ValueError(f"segnet pooling must be paired (one of {SEGNET_POOLS}), got {spec.pooling!r}")
        if spec.image_size % 4:
            raise ValueError(f"image_size {spec.image_size} must be divisible by 4")
        c1, c2 = spec.channels
        self._conv("enc1", spec.in_channels, c1)
        self._conv("enc2", c1, c2)
        self._conv("mid", c2, c2)
        self._conv("dec2", c2, c1)
        self._conv("dec1", c1, c1)
        self._conv("head", c1, spec.classes, k=1)
        if spec.pooling == "lift":
            self._lift_pair("pool1", c1)
            self._lift_pair("pool2", c2)

    def down(self, tape, x, name, passes):
        if self.spec.pooling == "max":
            y, idx = tape.max_pool2d(x, 2, 2)
            return y, ("max", idx, x.shape[2:])
        P, U = self.lift_ops(name)
        sb = lift_down_2d(x, P, U)
        passes.extend(sb.passes)
        return sb.ll, ("lift", (sb.lh, sb.hl, sb.hh), (sb.orig_h, sb.orig_w))

    def up(self, tape, y, name, side):
        kind, info, hw = side
        if kind == "max":
            return tape.max_unpool2d(y, info, hw, 2, 2)
        P, U = self.lift_ops(name)
        lh, hl, hh = info
        return lift_up_2d(SubbandSet2D(y, lh, hl, hh, *hw), P, U)

    def forward(self, tape: Tape, x: Var) -> ForwardResult:
        passes: list = []
        h = tape.relu(self.conv(tape, x, "enc1"))
        h, side1 = self.down(tape, h, "pool1", passes)
        h = tape.relu(self.conv(tape, h, "enc2"))
        h, side2 = self.down(tape, h, "pool2", passes)
        h = tape.relu(self.conv(tape, h, "mid"))
        h = self.up(tape, h, "pool2", side2)
        h = tape.relu(self.conv(tape, h, "dec2"))
        h = self.up(tape, h, "pool1", side1)
        h = tape.relu(self.conv(tape, h, "dec1"))
        logits = self.conv(tape, h, "head")
        return ForwardResult(logits, passes, [side1, side2])


def build_classifier(spec: ClassifierSpec, seed: int = 0, dtype=np.float32) -> TinyClassifier:
    return TinyClassifier(spec, seed, dtype)


def build_segnet(spec: SegNetSpec, seed: int = 0, dtype=np.float32) -> TinySegNet:
    return TinySegNet(spec, seed, dtype)


def build_model(spec_dict: dict, seed: int = 0, dtype=np.float32) -> Model:
    kind = spec_dict.get("type")
    if kind == "classifier":
        return build_classifier(ClassifierSpec.from_dict(spec_dict["spec"]), seed, dtype)
    if kind == "segnet":
        return build_segnet(SegNetSpec.from_dict(spec_dict["spec"]), seed, dtype)
    raise ValueError(f"unknown model type {kind!r}")


def save_checkpoint(model: Model, path, step: int = 0, extra: dict[str, Any] | None = None) -> None:
    tensors = []
    chunks = []
    offset = 0
    for name in sorted(model.params):
        data = np.ascontiguousarray(model.params[name], dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(model.params[name].shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "model": model.spec_dict(),
        "tensors": tensors,
        "step": int(step),
        "seed": int(model.seed),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for c in chunks:
            f.write(c)


def read_checkpoint_header(raw: bytes) -> tuple[dict, bytes]:
    if len(raw) < 12:
        raise CheckpointError("checkpoint truncated: missing fixed header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}; not a checkpoint")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    if len(raw) < 12 + hlen:
        raise CheckpointError("checkpoint truncated inside the JSON header")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    return header, raw[12 + hlen:]


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild the model stored at ``path``; returns ``(model, header)``."""
    header, payload = read_checkpoint_header(Path(path).read_bytes())
    try:
        model = build_model(header["model"], seed=header.get("seed", 0), dtype=np.float32)
        directory = {t["name"]: t for t in header["tensors"]}
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint header missing field {exc}") from None
    for name, arr in model.params.items():
        entry = directory.get(name)
        if entry is None:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        if tuple(entry["shape"]) != arr.shape:
            raise CheckpointError(f"tensor {name!r} has shape {tuple(entry['shape'])}, model expects {arr.shape}")
        start, nbytes = entry["offset"], entry["nbytes"]
        if nbytes != arr.size * 4:
            raise CheckpointError(f"tensor {name!r} byte count {nbytes} does not match its shape")
        if start < 0 or start + nbytes > len(payload):
            raise CheckpointError(f"checkpoint payload truncated in tensor {name!r}")
        model.params[name] = np.frombuffer(payload, dtype="<f4", count=arr.size, offset=start).reshape(arr.shape).astype(np.float32)
    return model, header


__all__ = [
    "BANDS",
    "CheckpointError",
    "ClassifierSpec",
    "SegNetSpec",
    "TinyClassifier",
    "TinySegNet",
    "build_classifier",
    "build_segnet",
    "build_model",
    "save_checkpoint",
    "load_checkpoint",
]
