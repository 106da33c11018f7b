"""Command-line pipeline: train-teacher -> significance -> distill -> evaluate -> report.

Configuration is a flat JSON object (``--config``); individual flags and
``--set key=value`` override it.  Each command writes the resolved config
into its output directory and refuses to overwrite existing outputs unless
``--overwrite`` is given.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure, 5 output-directory problem.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import architectures
from .checkpoint import load_checkpoint, save_checkpoint
from .data import class_partition, load_cifar10, load_idx, synthetic_blobs
from .distill import MODES, DistillConfig, distill, train_teacher
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    InvalidParameterError,
    NumericError,
    SchemaError,
)
from .metrics import aggregate, evaluate, table_to_csv
from .optim import Adam
from .regulation import ParticipationLedger
from .significance import SignificanceTable, compute_significance, histogram, histograms_to_csv

log = logging.getLogger("selfreg_kd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OUTPUT = 0, 2, 3, 4, 5
DATA_ENV = "SELFREG_KD_DATA"

DEFAULTS = {
    "dataset": "synthetic",
    "data_dir": None,
    "classes": 3,
    "per_class": 200,
    "test_per_class": 200,
    "dim": 10,
    "separation": 6.0,
    "data_seed": 0,
    "teacher_arch": "mlp-big",
    "student_arch": "mlp-small",
    "alpha": None,
    "mode": None,
    "tau": 20.0,
    "lam": 0.3,
    "epochs": 200,
    "batch_size": 512,
    "lr": None,
    "seed": 0,
    "tau_squared": False,
    "cache_teacher": False,
    "output_dir": None,
}
TEACHER_LR, STUDENT_LR = 0.001, 0.01


class OutputError(Exception):
    pass


def _parse_alpha(value):
    if value is None:
        return None
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        value = float(value)
    return float(value)


def resolve_config(args, command: str) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep or key not in DEFAULTS:
            raise ConfigError(f"bad --set {item!r}")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    if cfg["data_dir"] is None and os.environ.get(DATA_ENV):
        cfg["data_dir"] = os.environ[DATA_ENV]
    if cfg["output_dir"] is None and command != "evaluate":
        raise ConfigError("output_dir is required (--output)")
    cfg["alpha"] = _parse_alpha(cfg["alpha"])

    if command == "train-teacher":
        cfg["mode"] = cfg["mode"] or "regulated"
        if cfg["mode"] not in ("regulated", "conventional"):
            raise ConfigError(f"teacher mode must be regulated or conventional, got {cfg['mode']!r}")
        if cfg["mode"] == "regulated" and cfg["alpha"] is None:
            raise ConfigError("mode 'regulated' needs alpha")
        cfg["lr"] = cfg["lr"] if cfg["lr"] is not None else TEACHER_LR
    elif command == "distill":
        if cfg["mode"] not in MODES:
            raise ConfigError(f"distill mode must be one of {MODES}, got {cfg['mode']!r}")
        if cfg["mode"] in ("regulated", "hybrid") and cfg["alpha"] is None:
            raise ConfigError(f"mode {cfg['mode']!r} needs alpha")
        cfg["lr"] = cfg["lr"] if cfg["lr"] is not None else STUDENT_LR
    return cfg


def _config_for_json(cfg: dict) -> dict:
    out = dict(cfg)
    if out.get("alpha") is not None and math.isinf(out["alpha"]):
        out["alpha"] = "inf"
    return out


def _find(directory: Path, *names):
    for name in names:
        for candidate in (directory / name, directory / (name + ".gz")):
            if candidate.exists():
                return candidate
    raise DataFormatError(f"none of {names} found in {directory}")


def load_datasets(cfg: dict):
    """``(train, test)`` for the configured dataset."""
    name = cfg["dataset"]
    if name == "synthetic":
        c, dim, sep = cfg["classes"], cfg["dim"], cfg["separation"]
        train = synthetic_blobs(c, cfg["per_class"], dim, sep, seed=cfg["data_seed"], name="synthetic")
        test = synthetic_blobs(c, cfg["test_per_class"], dim, sep,
                               seed=cfg["data_seed"] + 1, name="synthetic-test")
        return train, test
    if cfg["data_dir"] is None:
        raise ConfigError(f"dataset {name!r} needs data_dir (or ${DATA_ENV})")
    d = Path(cfg["data_dir"])
    if name in ("mnist", "fashion-mnist"):
        train = load_idx(_find(d, "train-images-idx3-ubyte", "train-images.idx3-ubyte"),
                         _find(d, "train-labels-idx1-ubyte", "train-labels.idx1-ubyte"), name=name)
        test = load_idx(_find(d, "t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
                        _find(d, "t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"), name=name + "-test")
        return train, test
    if name == "cifar10":
        if (d / "cifar-10-batches-bin").is_dir():
            d = d / "cifar-10-batches-bin"
        train = load_cifar10([_find(d, f"data_batch_{i}.bin") for i in range(1, 6)], name=name)
        test = load_cifar10([_find(d, "test_batch.bin")], name=name + "-test")
        return train, test
    raise ConfigError(f"unknown dataset {name!r}")


def _prepare_output(cfg: dict, files, overwrite: bool) -> Path:
    out = Path(cfg["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise OutputError(f"{out} is not writable")
    existing = [f for f in files if (out / f).exists()]
    if existing and not overwrite:
        raise OutputError(f"{out} already holds {existing}; pass --overwrite to replace")
    return out


def _write_config(out: Path, cfg: dict, command: str) -> None:
    (out / f"config.{command}.json").write_text(
        json.dumps(_config_for_json(cfg), indent=2, sort_keys=True) + "\n"
    )


def cmd_train_teacher(args) -> int:
    cfg = resolve_config(args, "train-teacher")
    files = ["teacher.ckpt.json", "ledger.csv", "report.json", "config.train-teacher.json"]
    out = _prepare_output(cfg, files, args.overwrite)
    train, test = load_datasets(cfg)
    model = architectures.build(cfg["teacher_arch"], train.sample_shape, train.num_classes, seed=cfg["seed"])
    alpha = math.inf if cfg["mode"] == "conventional" else cfg["alpha"]
    optimizer = Adam(model.parameters(), lr=cfg["lr"])
    model, ledger, report = train_teacher(
        model, train, alpha, cfg["epochs"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], test=test, optimizer=optimizer,
    )
    report.config["arch"] = cfg["teacher_arch"]
    _write_config(out, cfg, "train-teacher")
    save_checkpoint(out / "teacher.ckpt.json", model, optimizer,
                    rng={"seed": cfg["seed"], "counter": cfg["epochs"]},
                    meta={"arch": cfg["teacher_arch"], "role": "teacher"})
    ledger.to_csv(out / "ledger.csv", train.labels)
    (out / "report.json").write_text(report.to_json())
    print(f"teacher test accuracy {report.test_accuracy:.4f}, participation {report.efficiency}")
    return EXIT_OK


def cmd_significance(args) -> int:
    cfg = resolve_config(args, "significance")
    files = ["significance.csv", "histogram.csv"]
    out = _prepare_output(cfg, files, args.overwrite)
    ledger_path = Path(args.ledger) if args.ledger else out / "ledger.csv"
    ledger, labels = ParticipationLedger.from_csv(ledger_path)
    train, _ = load_datasets(cfg)
    if len(ledger) != len(train):
        raise DimensionError(f"ledger has {len(ledger)} entries, dataset has {len(train)} samples")
    if not np.array_equal(labels, train.labels):
        raise DataFormatError(f"{ledger_path}: labels do not match the dataset")
    partition = class_partition(train)
    table = compute_significance(ledger, partition, dataset=train.name)
    table.to_csv(out / "significance.csv")
    histograms_to_csv(out / "histogram.csv", histogram(table, partition, args.bins))
    if table.degenerate_classes:
        print(f"classes with constant participation (significance 1): {table.degenerate_classes}")
    print(f"wrote {out / 'significance.csv'} and {out / 'histogram.csv'}")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = resolve_config(args, "distill")
    files = ["student.ckpt.json", "student_ledger.csv", "report.json", "config.distill.json"]
    out = _prepare_output(cfg, files, args.overwrite)
    table = None
    if cfg["mode"] in ("significance", "hybrid"):
        if not args.significance:
            raise ConfigError(f"mode {cfg['mode']!r} needs --significance")
        table = SignificanceTable.from_csv(args.significance)
    elif args.significance:
        raise ConfigError(f"mode {cfg['mode']!r} does not use --significance")
    train, test = load_datasets(cfg)
    teacher, _, _, _ = load_checkpoint(args.teacher)
    student = architectures.build(cfg["student_arch"], train.sample_shape, train.num_classes, seed=cfg["seed"])
    dcfg = DistillConfig(
        mode=cfg["mode"], tau=cfg["tau"], lam=cfg["lam"], alpha=cfg["alpha"],
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"],
        tau_squared=cfg["tau_squared"], cache_teacher=cfg["cache_teacher"],
    )
    optimizer = Adam(student.parameters(), lr=dcfg.lr, beta1=dcfg.beta1, beta2=dcfg.beta2, eps=dcfg.eps)
    student, ledger, report = distill(teacher, student, train, dcfg, table=table, test=test,
                                      optimizer=optimizer)
    report.config["arch"] = cfg["student_arch"]
    _write_config(out, cfg, "distill")
    save_checkpoint(out / "student.ckpt.json", student, optimizer,
                    rng={"seed": cfg["seed"], "counter": cfg["epochs"]},
                    meta={"arch": cfg["student_arch"], "role": "student", "mode": cfg["mode"]})
    ledger.to_csv(out / "student_ledger.csv", train.labels)
    (out / "report.json").write_text(report.to_json())
    print(f"{cfg['mode']} student test accuracy {report.test_accuracy:.4f}, "
          f"participation {report.efficiency}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args, "evaluate")
    _, test = load_datasets(cfg)
    model, _, _, _ = load_checkpoint(args.checkpoint)
    print(json.dumps({"checkpoint": str(args.checkpoint), "test_accuracy": evaluate(model, test)}))
    return EXIT_OK


def cmd_report(args) -> int:
    text = table_to_csv(aggregate(args.runs))
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.overwrite:
            raise OutputError(f"{out} exists; pass --overwrite to replace")
        out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--output", dest="output_dir")
    p.add_argument("--dataset", choices=["synthetic", "mnist", "fashion-mnist", "cifar10"])
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--teacher-arch", dest="teacher_arch")
    p.add_argument("--student-arch", dest="student_arch")
    p.add_argument("--mode")
    p.add_argument("--alpha")
    p.add_argument("--tau", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--overwrite", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfreg-kd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a teacher with self-regulation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("significance", help="turn a participation ledger into significances")
    _add_config_flags(p)
    p.add_argument("--ledger", help="ledger CSV (default: <output>/ledger.csv)")
    p.add_argument("--bins", type=int, default=4)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("distill", help="distill a student from a trained teacher")
    _add_config_flags(p)
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--significance", help="significance CSV (significance/hybrid modes)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("evaluate", help="test accuracy of a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate run reports into a CSV table")
    p.add_argument("runs", nargs="+", help="run directories or report.json files")
    p.add_argument("--out")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, DimensionError, SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
