"""``liftpool`` command line: decompose, roundtrip, train, eval, robustness, compare.

Exit codes: 0 success, 1 usage, 2 I/O, 3 schema/format, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .data import Dataset, default_corruptions, load_idx_dataset, parse_cifar_binary, synth_shapes
from .errors import FormatError
from .lifting import BANDS, LiftConfig, lift_down_2d, lift_params_init, lift_up_2d
from .metrics import corruption_error, segmentation_miou, shift_consistency, top1_error
from .models import CheckpointError, build_model, load_checkpoint, save_checkpoint
from .netpbm import normalize_to_u8, read_pgm, to_tensor, write_pgm
from .schemas import DATASET_FILE_SCHEMA, METRICS_REPORT_SCHEMA, RUN_CONFIG_SCHEMA, validate
from .train import SUMMARY_COLUMNS, JsonlLog, MetricsReport, NumericError, TrainConfig, rows_to_csv, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3, 4

ROUNDTRIP_LIMIT = 1e-4

POOLING_VARIANTS = {
    "max": ("max", "sum"),
    "avg": ("avg", "sum"),
    "skip": ("skip", "sum"),
    "lift-sum": ("lift", "sum"),
    "lift-LL": ("lift", "LL"),
    "lift-LH": ("lift", "LH"),
    "lift-HL": ("lift", "HL"),
    "lift-HH": ("lift", "HH"),
}

log = logging.getLogger("liftpool")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path, schema) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, f"{path} is not valid JSON: {exc}") from None
    try:
        validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(EXIT_SCHEMA, f"{path}: {where}: {exc.message}") from None
    return doc


def _read_image(path) -> np.ndarray:
    try:
        return read_pgm(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except FormatError as exc:
        raise CliError(EXIT_IO, f"cannot decode {path}: {exc}") from None


def _operators(kind: str, boundary: str, channels: int, seed: int, kernel_size: int, dtype):
    cfg = LiftConfig(kernel_size=kernel_size, boundary=boundary, operator_kind=kind)
    return lift_params_init(cfg, channels, seed, dtype=dtype)


def load_dataset(spec: dict) -> Dataset:
    source = spec["source"]
    try:
        if source == "synth":
            return synth_shapes(spec.get("n", 200), spec.get("size", 16), spec.get("classes", 3),
                                spec.get("seed", 0), spec.get("task", "classification"))
        if source == "idx":
            return load_idx_dataset(spec["images"], spec["labels"])
        raw = Path(spec["path"]).read_bytes()
        return parse_cifar_binary(raw, spec.get("label_mode", "cifar10"))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read dataset: {exc}") from None
    except FormatError as exc:
        raise CliError(EXIT_SCHEMA, f"malformed dataset: {exc}") from None


def _model_from_config(model_cfg: dict, default_seed: int):
    model_cfg = dict(model_cfg)
    kind = model_cfg.pop("type")
    seed = model_cfg.pop("seed", default_seed)
    try:
        return build_model({"type": kind, "spec": model_cfg}, seed=seed)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_SCHEMA, f"invalid model spec: {exc}") from None


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc.strerror or exc}") from None
    return out


def _report_json(report: MetricsReport) -> str:
    doc = report.to_dict()
    validate(doc, METRICS_REPORT_SCHEMA)
    return json.dumps(doc, indent=2, sort_keys=True)


def cmd_decompose(args) -> int:
    pixels = _read_image(args.image)
    x = to_tensor(pixels)
    P, U = _operators(args.operator, args.boundary, x.shape[1], args.seed, args.kernel_size, np.float64)
    sb = lift_down_2d(x, P, U)
    out = _outdir(args.out)
    sidecar = {"image": str(args.image), "operator": args.operator, "boundary": args.boundary,
               "seed": args.seed, "shape": list(pixels.shape), "bands": {}}
    ext = "pgm" if pixels.ndim == 2 else "ppm"
    for name in BANDS:
        band = sb.band(name)[0]
        img = band[0] if band.shape[0] == 1 else np.moveaxis(band, 0, -1)
        u8, lo, hi = normalize_to_u8(img)
        try:
            write_pgm(u8, out / f"{name}.{ext}")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {name}: {exc.strerror or exc}") from None
        sidecar["bands"][name] = {"file": f"{name}.{ext}", "min": lo, "max": hi, "range": hi - lo,
                                  "energy": float(np.mean(band ** 2))}
    _write(out / "subbands.json", json.dumps(sidecar, indent=2))
    for name in BANDS:
        b = sidecar["bands"][name]
        print(f"{name}: min={b['min']:.6g} max={b['max']:.6g} energy={b['energy']:.6g}")
    print(f"wrote {len(BANDS)} sub-bands to {out}")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    pixels = _read_image(args.image)
    dtype = np.float32 if args.dtype == "float32" else np.float64
    x = to_tensor(pixels, dtype)
    P, U = _operators(args.operator, args.boundary, x.shape[1], args.seed, args.kernel_size, dtype)
    err = float(np.max(np.abs(lift_up_2d(lift_down_2d(x, P, U), P, U) - x)))
    print(f"max abs reconstruction error: {err:.3e}")
    print(json.dumps({"image": str(args.image), "operator": args.operator, "max_abs_error": err}))
    return EXIT_OK if err <= ROUNDTRIP_LIMIT else EXIT_NUMERIC


def _train_one(config: dict, out: Path, variant: str = "", pooling: tuple[str, str] | None = None):
    train_cfg = TrainConfig(**config.get("train", {}))
    model_cfg = dict(config["model"])
    if pooling is not None:
        model_cfg["pooling"] = pooling[0]
        model_cfg["lift"] = {**model_cfg.get("lift", {}), "pool_mode": pooling[1]}
    dataset = load_dataset(config["data"])
    model = _model_from_config(model_cfg, train_cfg.seed)
    if model.kind == "segnet" and dataset.task != "segmentation":
        raise CliError(EXIT_SCHEMA, "segnet needs a segmentation dataset")
    if model.kind == "classifier" and dataset.task != "classification":
        raise CliError(EXIT_SCHEMA, "classifier needs a classification dataset")
    init_path = out / "initial.lpck"
    save_checkpoint(model, init_path, step=0, extra={"data": config["data"]})
    step_log = JsonlLog(out / "train_log.jsonl")
    try:
        model, report = train(model, dataset, train_cfg, on_step=step_log, variant=variant)
    except NumericError as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from None
    finally:
        step_log.close()
    steps = sum(1 for _ in open(out / "train_log.jsonl"))
    save_checkpoint(model, out / "checkpoint.lpck", step=steps,
                    extra={"data": config["data"], "train": train_cfg.to_dict()})
    _write(out / "metrics.json", _report_json(report))
    _write(out / "metrics.csv", report.to_csv())
    return report


def cmd_train(args) -> int:
    config = _read_json(args.config, RUN_CONFIG_SCHEMA)
    out = _outdir(args.out or config.get("output_dir", "runs/train"))
    report = _train_one(config, out)
    last = report.epochs[-1] if report.epochs else {}
    print(f"trained {len(report.epochs)} epochs in {report.runtime_seconds:.1f}s; "
          f"final top1_error={report.top1_error} miou={report.miou} task_loss={last.get('task_loss')}")
    print(f"checkpoint: {out / 'checkpoint.lpck'}")
    return EXIT_OK


def _load_checkpoint(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except CheckpointError as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: {exc}") from None


def _eval_dataset(args, header) -> Dataset:
    if args.dataset:
        return load_dataset(_read_json(args.dataset, DATASET_FILE_SCHEMA)["data"])
    data = header.get("extra", {}).get("data")
    if data is None:
        raise CliError(EXIT_USAGE, "checkpoint records no dataset; pass --dataset")
    return load_dataset(data)


def _robustness(model, dataset, report: MetricsReport, seed: int) -> None:
    report.consistency = shift_consistency(model, dataset)
    report.corruption, report.mce = corruption_error(model, dataset, default_corruptions(seed))


def cmd_eval(args) -> int:
    model, header = _load_checkpoint(args.checkpoint)
    dataset = _eval_dataset(args, header)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - {"top1", "consistency", "corruption", "miou"}
    if unknown:
        raise CliError(EXIT_USAGE, f"unknown metrics: {', '.join(sorted(unknown))}")
    report = MetricsReport(variant=model.spec.pooling)
    if model.kind == "segnet":
        if set(metrics) - {"miou"}:
            raise CliError(EXIT_USAGE, "segnet checkpoints support only the miou metric")
        report.miou = segmentation_miou(model, dataset, model.spec.classes)
    else:
        if "miou" in metrics:
            raise CliError(EXIT_USAGE, "miou needs a segnet checkpoint")
        if "top1" in metrics:
            report.top1_error = top1_error(model, dataset)
        if "consistency" in metrics:
            report.consistency = shift_consistency(model, dataset)
        if "corruption" in metrics:
            report.corruption, report.mce = corruption_error(model, dataset, default_corruptions(args.seed))
    out = _outdir(args.out)
    _write(out / "eval.json", _report_json(report))
    _write(out / "eval.csv", rows_to_csv([report.summary_row()], SUMMARY_COLUMNS))
    print(f"top1_error={report.top1_error} consistency={report.consistency} mce={report.mce} miou={report.miou}")
    return EXIT_OK


def cmd_robustness(args) -> int:
    model, header = _load_checkpoint(args.checkpoint)
    if model.kind != "classifier":
        raise CliError(EXIT_USAGE, "robustness needs a classifier checkpoint")
    dataset = _eval_dataset(args, header)
    report = MetricsReport(variant=model.spec.pooling)
    report.top1_error = top1_error(model, dataset)
    _robustness(model, dataset, report, args.seed)
    out = _outdir(args.out)
    _write(out / "robustness.json", _report_json(report))
    _write(out / "corruption.csv", report.corruption_csv())
    print(f"clean error={report.top1_error:.4f} consistency={report.consistency:.4f} mce={report.mce:.4f}")
    for row in report.corruption:
        print(f"  {row['kind']:<15} severity {row['severity']}: error {row['error']:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _read_json(args.config, RUN_CONFIG_SCHEMA)
    if config["model"]["type"] != "classifier":
        raise CliError(EXIT_USAGE, "compare runs classifier variants only")
    names = [p.strip() for p in args.pooling.split(",") if p.strip()]
    unknown = [p for p in names if p not in POOLING_VARIANTS]
    if unknown:
        raise CliError(EXIT_USAGE, f"unknown pooling variants: {', '.join(unknown)}")
    out = _outdir(args.out or config.get("output_dir", "runs/compare"))
    rows = []
    for name in names:
        report = _train_one(config, _outdir(out / name), variant=name, pooling=POOLING_VARIANTS[name])
        rows.append(report.summary_row())
        print(f"{name:<9} top1_error={report.top1_error:.4f} runtime={report.runtime_seconds:.1f}s "
              f"data_hash={report.data_hash[:12]}")
    _write(out / "compare.csv", rows_to_csv(rows, SUMMARY_COLUMNS))
    print(f"wrote {out / 'compare.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="liftpool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def image_cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("image", help="binary PGM (P5) or PPM (P6) image")
        p.add_argument("--operator", choices=["classical", "learned"], default="classical")
        p.add_argument("--boundary", choices=["zero", "replicate", "symmetric", "periodic"], default="symmetric")
        p.add_argument("--seed", type=int, default=0, help="seed for learned operator weights")
        p.add_argument("--kernel-size", type=int, default=5)
        return p

    p = image_cmd("decompose", "write LL/LH/HL/HH sub-band images and a normalisation sidecar")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = image_cmd("roundtrip", "lift down then up and report the max abs reconstruction error")
    p.add_argument("--dtype", choices=["float32", "float64"], default="float64")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a checkpoint"),
                              ("robustness", cmd_robustness, "shift consistency and corruption errors")):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("checkpoint")
        p.add_argument("--dataset", help="JSON file with a 'data' section (default: the training data)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="seed for noise corruptions")
        if name == "eval":
            p.add_argument("--metrics", default="top1", help="comma list of top1,consistency,corruption,miou")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="train several pooling variants on the same data and seed")
    p.add_argument("config")
    p.add_argument("--pooling", default=",".join(POOLING_VARIANTS),
                   help=f"comma list from {', '.join(POOLING_VARIANTS)}")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_compare)
    return parser


def _thread_limit():
    raw = os.environ.get("LIFTPOOL_THREADS", "1")
    try:
        n = max(1, int(raw))
    except ValueError:
        raise CliError(EXIT_USAGE, f"LIFTPOOL_THREADS must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except CliError as exc:
        print(f"liftpool {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, TypeError) as exc:
        print(f"liftpool {args.command}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FloatingPointError as exc:
        print(f"liftpool {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
