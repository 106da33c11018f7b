"""Datasets: IDX and CIFAR-10 binary readers/writers, synthetic blobs,
class partitions and shuffled batch plans.

Sample indices are assigned by file order at load time and never change;
they are the key shared by participation ledgers and significance tables.
Pixels are scaled by 1/255 and nothing else (no standardisation, no
augmentation).
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    DataFormatError,
    InvalidParameterError,
    TruncatedDataError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32


class SampleRecord(NamedTuple):
    index: int
    image: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """An immutable labelled dataset.

    ``images`` has shape ``[t, *sample_shape]`` (CHW for images, flat for
    vector data) and ``labels`` has shape ``[t]``.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise CountMismatchError(
                f"{images.shape[0]} images but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataFormatError(f"labels must lie in [0, {self.num_classes - 1}]")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def t(self) -> int:
        return len(self)

    @property
    def sample_shape(self) -> tuple:
        return self.images.shape[1:]

    def __getitem__(self, i: int) -> SampleRecord:
        return SampleRecord(int(i), self.images[i], int(self.labels[i]))

    def records(self) -> Iterator[SampleRecord]:
        for i in range(len(self)):
            yield self[i]


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> tuple[np.ndarray, int]:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedDataError(f"{path}: file shorter than the IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) < size:
        raise TruncatedDataError(f"{path}: expected {size} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims), dims[0]


def load_idx(images_path, labels_path, num_classes: int = 10, name: str = "") -> Dataset:
    """Load an MNIST-style IDX image/label pair (gzip or raw)."""
    images, n_img = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    labels, n_lab = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    if n_img != n_lab:
        raise CountMismatchError(
            f"{images_path} holds {n_img} images but {labels_path} holds {n_lab} labels"
        )
    return Dataset(images[:, None, :, :] / 255.0, labels, num_classes, name or Path(images_path).name)


def write_idx(images_path, labels_path, pixels: np.ndarray, labels, compress: bool = False) -> None:
    """Write uint8 pixels ``[n, rows, cols]`` and labels in IDX format."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, *pixels.shape) + pixels.tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    opener = gzip.compress if compress else (lambda b: b)
    Path(images_path).write_bytes(opener(img))
    Path(labels_path).write_bytes(opener(lab))


def load_cifar10(paths, name: str = "cifar10") -> Dataset:
    """Load one or more CIFAR-10 binary batch files, in the given order."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    chunks = []
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        chunks.append(np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES))
    records = np.concatenate(chunks)
    labels = records[:, 0]
    if labels.max() > 9:
        raise DataFormatError("CIFAR-10 label byte outside 0..9")
    images = records[:, 1:].reshape(-1, 3, 32, 32) / 255.0
    return Dataset(images, labels, 10, name)


def write_cifar10(path, pixels: np.ndarray, labels) -> None:
    """Write uint8 pixels ``[n, 3, 32, 32]`` and labels as one CIFAR-10 batch."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    Path(path).write_bytes(np.hstack([labels, pixels]).tobytes())


def synthetic_blobs(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int = 0,
    name: str = "blobs",
) -> Dataset:
    """Unit-variance Gaussian clusters whose centres are pairwise ``separation`` apart.

    Centres sit at ``separation / sqrt(2)`` along the first ``num_classes``
    coordinate axes, so ``dim`` must be at least ``num_classes``.  Samples
    are stored class by class.
    """
    if separation < 0:
        raise InvalidParameterError("separation must be non-negative")
    if dim < num_classes:
        raise InvalidParameterError(f"dim ({dim}) must be >= num_classes ({num_classes})")
    if num_classes < 2 or per_class < 1:
        raise InvalidParameterError("need at least 2 classes and 1 sample per class")
    rng = np.random.default_rng(seed)
    centres = np.zeros((num_classes, dim))
    centres[np.arange(num_classes), np.arange(num_classes)] = separation / np.sqrt(2.0)
    labels = np.repeat(np.arange(num_classes), per_class)
    x = centres[labels] + rng.standard_normal((labels.size, dim))
    return Dataset(x, labels, num_classes, name)


def class_partition(dataset_or_labels, num_classes: int | None = None) -> list[np.ndarray]:
    """Index arrays ``S_0 .. S_{C-1}``, one per class, each sorted ascending."""
    if isinstance(dataset_or_labels, Dataset):
        labels = dataset_or_labels.labels
        num_classes = dataset_or_labels.num_classes
    else:
        labels = np.asarray(dataset_or_labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
    return [np.flatnonzero(labels == c) for c in range(num_classes)]


class BatchPlan:
    """Seeded, per-epoch shuffling of a fixed index set into batches.

    The order for a given ``(seed, epoch)`` is reproducible and independent
    of which epochs were requested before it.
    """

    def __init__(self, num_samples: int, batch_size: int, seed: int = 0):
        if batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        self.num_samples = int(num_samples)
        self.batch_size = int(batch_size)
        self.seed = int(seed)

    def order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, int(epoch)])
        return rng.permutation(self.num_samples)

    def batches(self, epoch: int) -> list[np.ndarray]:
        order = self.order(epoch)
        return [order[i : i + self.batch_size] for i in range(0, self.num_samples, self.batch_size)]
