"""Sample significance: class-wise min-max normalised participation counts."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DimensionError, InvalidParameterError


@dataclass
class SignificanceTable:
    values: np.ndarray
    labels: np.ndarray
    counts: np.ndarray
    alpha: float | None = None
    epochs: int = 0
    dataset: str = ""
    # classes whose counts were all equal; their members get significance 1
    degenerate_classes: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(f"# dataset={self.dataset}\n# epochs={self.epochs}\n# alpha={self.alpha!r}\n")
            f.write("# degenerate_classes=" + " ".join(map(str, self.degenerate_classes)) + "\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["index", "label", "count", "significance"])
            for i in range(len(self)):
                w.writerow([i, int(self.labels[i]), int(self.counts[i]), repr(float(self.values[i]))])

    @classmethod
    def from_csv(cls, path) -> "SignificanceTable":
        meta, rows = {}, []
        with open(path, newline="") as f:
            for line in f:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                else:
                    rows.append(line)
        reader = csv.DictReader(rows)
        if reader.fieldnames != ["index", "label", "count", "significance"]:
            raise DataFormatError(f"{path}: expected columns index,label,count,significance")
        recs = list(reader)
        if [int(r["index"]) for r in recs] != list(range(len(recs))):
            raise DataFormatError(f"{path}: indices must be 0..t-1 in order")
        alpha = meta.get("alpha", "None")
        return cls(
            values=np.array([float(r["significance"]) for r in recs]),
            labels=np.array([int(r["label"]) for r in recs], dtype=np.int64),
            counts=np.array([int(r["count"]) for r in recs], dtype=np.int64),
            alpha=None if alpha == "None" else float(alpha),
            epochs=int(meta.get("epochs", 0)),
            dataset=meta.get("dataset", ""),
            degenerate_classes=[int(c) for c in meta.get("degenerate_classes", "").split()],
        )


def normalize_counts(counts, partition) -> tuple[np.ndarray, list]:
    """Min-max normalise ``counts`` within each index set of ``partition``.

    Returns ``(values, degenerate)``; a class whose counts are all equal is
    listed in ``degenerate`` and all of its members get 1.0.
    """
    counts = np.asarray(counts)
    values = np.full(counts.shape[0], np.nan)
    degenerate = []
    for c, members in enumerate(partition):
        if len(members) == 0:
            raise InvalidParameterError(f"class {c} has no samples")
        n = counts[members]
        lo, hi = n.min(), n.max()
        if hi == lo:
            values[members] = 1.0
            degenerate.append(c)
        else:
            values[members] = (n - lo) / (hi - lo)
    if np.isnan(values).any():
        raise InvalidParameterError("partition does not cover every sample")
    return values, degenerate


def compute_significance(ledger, partition, dataset: str = "") -> SignificanceTable:
    counts = ledger.counts
    covered = sum(len(m) for m in partition)
    if covered != counts.shape[0]:
        raise DimensionError(
            f"partition covers {covered} samples but the ledger has {counts.shape[0]}"
        )
    values, degenerate = normalize_counts(counts, partition)
    labels = np.empty(counts.shape[0], dtype=np.int64)
    for c, members in enumerate(partition):
        labels[members] = c
    return SignificanceTable(
        values, labels, counts.copy(), ledger.alpha, ledger.epochs, dataset, degenerate
    )


@dataclass(frozen=True)
class SignificanceHistogram:
    class_id: int
    edges: np.ndarray
    counts: np.ndarray


def histogram(table, partition, bins: int = 4) -> list[SignificanceHistogram]:
    """Per-class histograms over ``bins`` uniform bins on [0, 1] (last bin closed)."""
    if bins < 1:
        raise InvalidParameterError("bins must be >= 1")
    values = table.values if isinstance(table, SignificanceTable) else np.asarray(table)
    out = []
    for c, members in enumerate(partition):
        counts, edges = np.histogram(values[members], bins=bins, range=(0.0, 1.0))
        out.append(SignificanceHistogram(c, edges, counts))
    return out


def histograms_to_csv(path, hists) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class", "bin_lo", "bin_hi", "count"])
        for h in hists:
            for lo, hi, n in zip(h.edges[:-1], h.edges[1:], h.counts):
                w.writerow([h.class_id, repr(float(lo)), repr(float(hi)), int(n)])
