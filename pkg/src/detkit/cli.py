"""Batch command-line front end.

Subcommands: eval, validate, gradcheck, pyramid, schedule. Every command
reads its configuration from embedded defaults, optionally overlaid by a
single JSON file (--config) and then by explicit flags; --print-config
shows the resolved configuration without running.

Exit codes: 0 success, 1 I/O or internal error, 2 invalid input content
or configuration, 3 defects found (validate without --fix), 4 gradient
check failed.

Every successful run emits a manifest (command, resolved config, sha256
of each input file, toolkit version, wall-clock duration) as one JSON
line on stderr, plus a ``<out>.manifest.json`` sidecar when the command
writes an output file. The manifest carries timing and is therefore not
byte-reproducible; the primary outputs are.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    MalformedFileError,
    clean,
    ground_truths_from,
    load_annotations,
    load_results,
    save_annotations,
    validate,
)
from .evaluation import (
    DEFAULT_IOU_THRESHOLDS,
    EvalConfig,
    IdSpaceMismatchError,
    evaluate,
)
from .gradcheck import LOSS_NAMES, run_check
from .pyramid import (
    FeatureMap,
    PyramidWeights,
    make_input_pyramid,
    pyramid_pipeline,
    severed_weights,
)
from .schedule import ScheduleConfig, schedule_dump, write_schedule_csv

DUMP_DTYPE = "<f8"


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, dict[str, str]]
    version: str
    duration_seconds: float

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "version": self.version,
            "duration_seconds": self.duration_seconds,
        }
        return json.dumps(payload, sort_keys=True)


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit_manifest(command, config, input_paths: dict, started: float, out_path=None) -> None:
    manifest = RunManifest(
        command=command,
        config=config,
        inputs={name: {"path": str(p), "sha256": _sha256(p)} for name, p in input_paths.items()},
        version=__version__,
        duration_seconds=time.perf_counter() - started,
    )
    print(manifest.to_json(), file=sys.stderr)
    if out_path is not None:
        Path(str(out_path) + ".manifest.json").write_text(manifest.to_json() + "\n")


def resolve_config(defaults: dict, config_path, overrides: dict) -> dict:
    cfg = dict(defaults)
    if config_path:
        data = json.loads(Path(config_path).read_text())
        if not isinstance(data, dict):
            raise MalformedFileError(f"{config_path}: config must be a JSON object")
        unknown = sorted(set(data) - set(defaults))
        if unknown:
            raise ValueError(f"{config_path}: unknown config keys {unknown}")
        cfg.update(data)
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def _print_config(cfg: dict) -> int:
    print(json.dumps(cfg, sort_keys=True, indent=2))
    return 0


def write_tensor_dump(path: str | Path, levels: dict[int, FeatureMap]) -> None:
    """Flat binary of little-endian float64 level data behind one JSON header line."""
    header = {
        "dtype": DUMP_DTYPE,
        "levels": [{"level": l, "shape": list(levels[l].data.shape)} for l in sorted(levels)],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for l in sorted(levels):
            f.write(np.ascontiguousarray(levels[l].data, dtype=DUMP_DTYPE).tobytes())


def read_tensor_dump(path: str | Path) -> dict[int, np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        out = {}
        for rec in header["levels"]:
            shape = tuple(rec["shape"])
            n = int(np.prod(shape))
            data = np.frombuffer(f.read(n * 8), dtype=header["dtype"])
            out[rec["level"]] = data.reshape(shape)
    return out


# ---------------------------------------------------------------------------
# commands


EVAL_DEFAULTS = {
    "iou_thresholds": list(DEFAULT_IOU_THRESHOLDS),
    "max_detections": 100,
    "recall_max_detections": None,
    "threads": 1,
}


def cmd_eval(args) -> int:
    cfg = resolve_config(EVAL_DEFAULTS, args.config, {"threads": args.threads})
    if args.print_config:
        return _print_config(cfg)
    started = time.perf_counter()

    ann = load_annotations(args.gt)
    gts = ground_truths_from(ann)
    dets = load_results(args.dets)
    report = evaluate(
        dets,
        gts,
        EvalConfig(
            iou_thresholds=tuple(cfg["iou_thresholds"]),
            max_detections=cfg["max_detections"],
            recall_max_detections=cfg["recall_max_detections"],
        ),
        image_ids=[im.id for im in ann.images],
        class_ids=[c.id for c in ann.categories],
        threads=cfg["threads"],
    )

    out = Path(args.out)
    out.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    table = report.format_table()
    out.with_suffix(".txt").write_text(table)
    sys.stdout.write(table)
    _emit_manifest("eval", cfg, {"gt": args.gt, "dets": args.dets}, started, out)
    return 0


def cmd_validate(args) -> int:
    if args.fix and not args.out:
        raise ValueError("--fix requires --out for the cleaned annotation file")
    cfg = resolve_config({}, args.config, {})
    if args.print_config:
        return _print_config(cfg)
    started = time.perf_counter()

    ann = load_annotations(args.ann)
    report = validate(ann)
    sys.stdout.write(report.to_json())
    if args.fix:
        cleaned = clean(ann, report)
        save_annotations(cleaned, args.out)
        _emit_manifest("validate", cfg, {"ann": args.ann}, started, args.out)
        return 0
    _emit_manifest("validate", cfg, {"ann": args.ann}, started)
    return 0 if report.is_clean else 3


GRADCHECK_DEFAULTS = {"trials": 1000, "seed": 0, "perturb": 0.0}


def cmd_gradcheck(args) -> int:
    cfg = resolve_config(
        GRADCHECK_DEFAULTS,
        args.config,
        {"trials": args.trials, "seed": args.seed, "perturb": args.perturb},
    )
    if args.print_config:
        return _print_config({"loss": args.loss, **cfg})
    started = time.perf_counter()

    result = run_check(args.loss, cfg["trials"], cfg["seed"], perturb=cfg["perturb"])
    print(
        f"loss={result.loss} trials={result.trials} "
        f"max_rel_err={result.max_rel_err:.3e} tolerance={result.tolerance:.1e} "
        f"{'OK' if result.passed else 'FAILED'}"
    )
    _emit_manifest("gradcheck", {"loss": args.loss, **cfg}, {}, started)
    return 0 if result.passed else 4


PYRAMID_DEFAULTS = {
    "mode": "fpn",
    "seed": 0,
    "size": 64,
    "in_channels": 4,
    "out_channels": 4,
    "severed": False,
    "threads": 1,
}


def cmd_pyramid(args) -> int:
    cfg = resolve_config(
        PYRAMID_DEFAULTS,
        args.config,
        {
            "mode": args.mode,
            "seed": args.seed,
            "size": args.size,
            "severed": True if args.severed else None,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(cfg)
    started = time.perf_counter()

    # a single pipeline evaluates level by level; thread count cannot
    # change the result, the flag exists for interface uniformity
    if cfg["threads"] < 1:
        raise ValueError(f"threads must be >= 1, got {cfg['threads']}")
    weights = PyramidWeights.generate(cfg["seed"], cfg["in_channels"], cfg["out_channels"])
    if cfg["severed"]:
        weights = severed_weights(weights)
    inputs = make_input_pyramid(cfg["seed"], cfg["size"], cfg["in_channels"])
    levels = pyramid_pipeline(inputs, weights, mode=cfg["mode"])

    for l in sorted(levels):
        print(f"level {l}: shape {levels[l].data.shape}")
    write_tensor_dump(args.dump, levels)
    _emit_manifest("pyramid", cfg, {}, started, args.dump)
    return 0


SCHEDULE_DEFAULTS = {
    "base_lr": 0.001,
    "total_iters": 20000,
    "warmup_iters": 3000,
    "min_lr": 0.0,
    "base_batch": 1,
    "actual_batch": None,
    "stride": 100,
}


def cmd_schedule(args) -> int:
    cfg = resolve_config(
        SCHEDULE_DEFAULTS,
        args.config,
        {
            "base_lr": args.base_lr,
            "total_iters": args.total_iters,
            "warmup_iters": args.warmup_iters,
            "min_lr": args.min_lr,
            "base_batch": args.base_batch,
            "actual_batch": args.actual_batch,
            "stride": args.stride,
        },
    )
    if args.print_config:
        return _print_config(cfg)
    started = time.perf_counter()

    sched = ScheduleConfig(
        base_lr=cfg["base_lr"],
        total_iters=cfg["total_iters"],
        warmup_iters=cfg["warmup_iters"],
        min_lr=cfg["min_lr"],
        base_batch=cfg["base_batch"],
        actual_batch=cfg["actual_batch"],
    )
    rows = schedule_dump(sched, cfg["stride"])
    buffer = io.StringIO()
    write_schedule_csv(rows, buffer)
    Path(args.out).write_text(buffer.getvalue())
    _emit_manifest("schedule", cfg, {}, started, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detkit",
        description="Detection-math toolkit: evaluation, validation, losses, pyramid, schedule.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="COCO-protocol evaluation of detections against ground truth")
    p.add_argument("--gt", required=True, help="annotation JSON (COCO schema)")
    p.add_argument("--dets", required=True, help="detection-result JSON (flat array)")
    p.add_argument("--config", help="config JSON overriding embedded defaults")
    p.add_argument("--out", required=True, help="metrics JSON path (table goes to .txt sibling)")
    p.add_argument("--threads", type=int, help="worker threads for per-image matching")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="report annotation defects, optionally write a cleaned file")
    p.add_argument("--ann", required=True, help="annotation JSON to check")
    p.add_argument("--fix", action="store_true", help="write a cleaned copy to --out")
    p.add_argument("--out", help="destination for the cleaned annotation file")
    p.add_argument("--config", help="config JSON (reserved; no tunables yet)")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic loss gradients")
    p.add_argument("--loss", required=True, choices=LOSS_NAMES)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--perturb", type=float, help="harness self-test: bias added to analytic gradients")
    p.add_argument("--config", help="config JSON overriding embedded defaults")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("pyramid", help="run the toy feature-pyramid pipeline and dump its levels")
    p.add_argument("--mode", choices=("fpn", "pafpn"))
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, help="base image size (multiple of 32)")
    p.add_argument("--severed", action="store_true",
                   help="zero the bottom-up path and use identity smoothing")
    p.add_argument("--dump", required=True, help="tensor dump path")
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="config JSON overriding embedded defaults")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_pyramid)

    p = sub.add_parser("schedule", help="write the warmup+cosine learning-rate curve as CSV")
    p.add_argument("--config", help="config JSON overriding embedded defaults")
    p.add_argument("--stride", type=int)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--base-lr", type=float, dest="base_lr")
    p.add_argument("--total-iters", type=int, dest="total_iters")
    p.add_argument("--warmup-iters", type=int, dest="warmup_iters")
    p.add_argument("--min-lr", type=float, dest="min_lr")
    p.add_argument("--base-batch", type=int, dest="base_batch")
    p.add_argument("--actual-batch", type=int, dest="actual_batch")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_schedule)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MalformedFileError, IdSpaceMismatchError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {e!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
