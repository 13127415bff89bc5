"""JSON schemas for run configs and metrics reports."""

from __future__ import annotations

import jsonschema

_rate = {"type": ["number", "null"], "minimum": 0, "maximum": 1}

LIFT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kernel_size": {"type": "integer", "minimum": 1},
        "groups1": {"type": ["integer", "null"], "minimum": 1},
        "groups2": {"type": ["integer", "null"], "minimum": 1},
        "mid_channels": {"type": ["integer", "null"], "minimum": 1},
        "boundary": {"enum": ["zero", "replicate", "symmetric", "periodic"]},
        "operator_kind": {"enum": ["classical", "learned"]},
        "pool_mode": {"enum": ["sum", "all", "LL", "LH", "HL", "HH"]},
    },
}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"enum": ["classifier", "segnet"]},
        "in_channels": {"type": "integer", "minimum": 1},
        "image_size": {"type": "integer", "minimum": 2},
        "classes": {"type": "integer", "minimum": 1},
        "channels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "pooling": {"enum": ["max", "avg", "skip", "lift"]},
        "lift": LIFT_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
    },
}

LOSS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lambda_u": {"type": "number", "minimum": 0},
        "lambda_p": {"type": "number", "minimum": 0},
        "constraint_form": {"enum": ["mean_squared", "l2_norm"]},
    },
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lr": {"type": "number", "minimum": 0},
        "lr_decay": {"type": "number", "minimum": 0},
        "milestones": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "momentum": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "loss": LOSS_SCHEMA,
    },
}

DATA_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["source"],
            "properties": {
                "source": {"const": "synth"},
                "n": {"type": "integer", "minimum": 1},
                "size": {"type": "integer", "minimum": 16},
                "classes": {"type": "integer", "minimum": 1, "maximum": 4},
                "seed": {"type": "integer", "minimum": 0},
                "task": {"enum": ["classification", "segmentation"]},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["source", "images", "labels"],
            "properties": {
                "source": {"const": "idx"},
                "images": {"type": "string"},
                "labels": {"type": "string"},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["source", "path"],
            "properties": {
                "source": {"const": "cifar"},
                "path": {"type": "string"},
                "label_mode": {"enum": ["cifar10", "coarse", "fine"]},
            },
        },
    ]
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "data"],
    "properties": {
        "model": MODEL_SCHEMA,
        "train": TRAIN_SCHEMA,
        "data": DATA_SCHEMA,
        "output_dir": {"type": "string"},
    },
}

DATASET_FILE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["data"],
    "properties": {"data": DATA_SCHEMA},
}

_epoch_row = {
    "type": "object",
    "required": ["epoch", "lr", "task_loss", "c_u", "c_p", "total"],
    "properties": {
        "epoch": {"type": "integer", "minimum": 0},
        "lr": {"type": "number"},
        "task_loss": {"type": "number"},
        "c_u": {"type": "number", "minimum": 0},
        "c_p": {"type": "number", "minimum": 0},
        "total": {"type": "number"},
        "top1_error": _rate,
        "miou": _rate,
    },
}

_corruption_row = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "severity", "error"],
    "properties": {
        "kind": {"enum": ["gaussian_noise", "box_blur", "shift"]},
        "severity": {"type": "integer", "minimum": 0, "maximum": 3},
        "error": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

METRICS_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "additionalProperties": False,
    "required": ["variant", "epochs", "top1_error", "consistency", "corruption", "mce", "miou",
                 "runtime_seconds", "data_hash"],
    "properties": {
        "variant": {"type": "string"},
        "epochs": {"type": "array", "items": _epoch_row},
        "top1_error": _rate,
        "consistency": _rate,
        "corruption": {"type": "array", "items": _corruption_row},
        "mce": _rate,
        "miou": _rate,
        "runtime_seconds": {"type": "number", "minimum": 0},
        "data_hash": {"type": "string"},
    },
}


def validate(instance, schema) -> None:
    """Raise ``jsonschema.ValidationError`` when ``instance`` violates ``schema``."""
    jsonschema.validate(instance, schema)
