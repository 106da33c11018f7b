"""Accuracy, sample efficiency and aggregation of run reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DuplicateRunError, InvalidParameterError, SchemaError

REPORT_SCHEMA_VERSION = 1


def predict(model, images, batch_size: int = 512) -> np.ndarray:
    images = np.asarray(images)
    out = [
        model.forward(images[i : i + batch_size], keep=False).argmax(axis=1)
        for i in range(0, images.shape[0], batch_size)
    ]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate(model, dataset, batch_size: int = 512) -> float:
    """Fraction of samples whose arg-max logit equals the label.

    The arg-max of the logits is the arg-max of the temperature-1 softmax.
    """
    if len(dataset) == 0:
        raise InvalidParameterError("cannot evaluate on an empty dataset")
    pred = predict(model, dataset.images, batch_size)
    return float(np.mean(pred == dataset.labels))


@dataclass(frozen=True)
class EfficiencyRecord:
    participations: int
    epochs: int
    samples: int

    @property
    def available(self) -> int:
        return self.epochs * self.samples

    @property
    def zeta(self) -> Fraction:
        return Fraction(self.participations, self.available)

    @property
    def value(self) -> float:
        return float(self.zeta)

    @property
    def percent(self) -> str:
        return f"{float(round(self.zeta * 100, 3)):.3f}%"

    def __str__(self) -> str:
        return f"{self.participations}/{self.available} (~{self.percent})"


def efficiency(ledger_or_total, epochs: int, samples: int) -> EfficiencyRecord:
    """Total participations over ``epochs * samples``, kept as an exact fraction."""
    total = ledger_or_total if isinstance(ledger_or_total, (int, np.integer)) else ledger_or_total.total
    if epochs * samples <= 0:
        raise InvalidParameterError("epochs * samples must be positive")
    if not 0 <= total <= epochs * samples:
        raise InvalidParameterError(f"{total} participations exceed {epochs}x{samples}")
    return EfficiencyRecord(int(total), int(epochs), int(samples))


AGGREGATE_COLUMNS = [
    "dataset", "mode", "role", "seed", "test_accuracy",
    "participations", "available", "zeta", "zeta_percent", "source",
]

MISSING = "NA"


def _load_report(path):
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        rep = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable report ({exc})") from None
    if rep.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {rep.get('schema_version')!r}, expected {REPORT_SCHEMA_VERSION}"
        )
    for key in ("config", "final"):
        if key not in rep:
            raise SchemaError(f"{path}: missing {key!r}")
    return path, rep


def _cell(value):
    return MISSING if value is None else value


def aggregate(paths) -> list[dict]:
    """Collect report files (or run directories) into sorted table rows."""
    rows = {}
    for p in paths:
        path, rep = _load_report(p)
        cfg, final = rep["config"], rep["final"]
        key = (cfg.get("dataset", ""), cfg.get("mode", ""), rep.get("role", ""), cfg.get("seed"))
        if key in rows:
            raise DuplicateRunError(
                f"{path}: duplicate run {key} (already read from {rows[key]['source']})"
            )
        acc = final.get("test_accuracy")
        rows[key] = {
            "dataset": key[0],
            "mode": key[1],
            "role": key[2],
            "seed": _cell(key[3]),
            "test_accuracy": MISSING if acc is None else f"{acc:.4f}",
            "participations": _cell(final.get("participations")),
            "available": _cell(final.get("available")),
            "zeta": _cell(final.get("zeta")),
            "zeta_percent": _cell(final.get("zeta_percent")),
            "source": path.parent.name if path.name == "report.json" else path.name,
        }
    order = sorted(rows, key=lambda k: (k[0], k[1], k[2], -1 if k[3] is None else k[3]))
    return [rows[k] for k in order]


def table_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
