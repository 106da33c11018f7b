"""Self-regulation gate and participation bookkeeping.

A sample takes part in an update when the model misclassifies it, or when
its margin (top probability minus runner-up) is still below the epoch
threshold ``eta(n) = 1 - exp(-alpha * n)``.  Passing ``alpha = math.inf``
selects the forced-open gate, i.e. conventional training where every
sample participates in every epoch.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DimensionError, InvalidParameterError

FORCED_OPEN = math.inf


def is_forced_open(alpha) -> bool:
    return alpha is not None and math.isinf(alpha) and alpha > 0


def threshold(alpha: float, epoch: int) -> float:
    """Inclusion threshold ``1 - exp(-alpha * epoch)`` for a 0-based epoch."""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    if epoch < 0:
        raise InvalidParameterError(f"epoch must be non-negative, got {epoch!r}")
    if math.isinf(alpha):
        return 1.0 if epoch > 0 else 0.0
    return -math.expm1(-alpha * epoch)


def threshold_gap(alpha: float, epoch: int) -> float:
    """``1 - threshold(alpha, epoch)`` = ``exp(-alpha * epoch)``, without cancellation.

    In float64 the threshold itself rounds to exactly 1.0 once
    ``alpha * epoch`` exceeds about 37; the gap stays strictly positive and
    strictly decreasing until ``exp`` underflows (``alpha * epoch`` > ~745).
    The rounding never changes a gate decision, since a margin is a float
    in [0, 1] and ``margin < 1.0`` agrees with ``margin < 1 - gap`` there.
    """
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    if epoch < 0:
        raise InvalidParameterError(f"epoch must be non-negative, got {epoch!r}")
    return math.exp(-alpha * epoch)


def margin(probabilities) -> np.ndarray | float:
    """Largest minus second-largest probability, along the last axis.

    Tied maxima give 0.  Accepts a single vector or a ``[B, C]`` batch.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape[-1] < 2:
        raise DimensionError(f"margin needs at least 2 classes, got {p.shape[-1]}")
    top2 = np.sort(p, axis=-1)[..., -2:]
    d = top2[..., 1] - top2[..., 0]
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class GateDecision:
    included: bool
    predicted_label: int
    margin: float
    threshold: float


def gate(probabilities, true_label: int, eta: float) -> GateDecision:
    p = np.asarray(probabilities, dtype=np.float64)
    y_hat = int(np.argmax(p))
    d = margin(p)
    return GateDecision(bool(y_hat != true_label or d < eta), y_hat, d, float(eta))


def gate_batch(probabilities, labels, eta: float):
    """Vectorised :func:`gate`: returns ``(included, predicted, margins)`` arrays."""
    p = np.asarray(probabilities, dtype=np.float64)
    predicted = p.argmax(axis=-1)
    d = margin(p)
    included = (predicted != np.asarray(labels)) | (d < eta)
    return included, predicted, d


class ParticipationLedger:
    """Per-sample count of epochs in which the sample contributed to an update."""

    def __init__(self, num_samples: int, alpha: float | None = None, epochs: int = 0):
        self.counts = np.zeros(int(num_samples), dtype=np.int64)
        self.alpha = alpha
        self.epochs = int(epochs)

    def __len__(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def record(self, index: int) -> None:
        if not 0 <= index < len(self):
            raise IndexError(f"sample index {index} outside [0, {len(self) - 1}]")
        self.counts[index] += 1

    def record_many(self, indices) -> None:
        """Record a set of distinct indices, as one batch's included samples."""
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        if idx.size == 0:
            return
        if idx[0] < 0 or idx[-1] >= len(self):
            raise IndexError(f"sample index outside [0, {len(self) - 1}]")
        if np.any(idx[1:] == idx[:-1]):
            raise ValueError("indices within one update must be distinct")
        self.counts[idx] += 1

    def to_csv(self, path, labels) -> None:
        labels = np.asarray(labels)
        if labels.shape[0] != len(self):
            raise DimensionError(f"{labels.shape[0]} labels for a ledger of {len(self)}")
        alpha = "inf" if is_forced_open(self.alpha) else repr(self.alpha)
        with open(path, "w", newline="") as f:
            f.write(f"# epochs={self.epochs}\n# alpha={alpha}\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["index", "label", "count"])
            for i, (lab, c) in enumerate(zip(labels.tolist(), self.counts.tolist())):
                w.writerow([i, lab, c])

    @classmethod
    def from_csv(cls, path) -> tuple["ParticipationLedger", np.ndarray]:
        """Read a ledger file; returns ``(ledger, labels)``."""
        meta = {}
        rows = []
        with open(path, newline="") as f:
            for line in f:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                rows.append(line)
        reader = csv.DictReader(rows)
        if reader.fieldnames is None or reader.fieldnames[:3] != ["index", "label", "count"]:
            raise DataFormatError(f"{path}: expected columns index,label,count")
        data = [(int(r["index"]), int(r["label"]), int(r["count"])) for r in reader]
        arr = np.array(data, dtype=np.int64).reshape(-1, 3)
        if not np.array_equal(arr[:, 0], np.arange(arr.shape[0])):
            raise DataFormatError(f"{path}: indices must be 0..t-1 in order")
        alpha = meta.get("alpha", "None")
        alpha = None if alpha == "None" else float(alpha)
        ledger = cls(arr.shape[0], alpha=alpha, epochs=int(meta.get("epochs", 0)))
        ledger.counts[:] = arr[:, 2]
        return ledger, arr[:, 1]
