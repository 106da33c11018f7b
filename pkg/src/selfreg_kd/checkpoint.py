"""JSON checkpoint container.

Arrays are stored as base64 of their little-endian float64 (or int64)
bytes in row-major order, next to their shape, so files are exact and
byte-stable across runs.  The same container holds synthetic datasets.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import SchemaError
from .nn import SequentialModel
from .optim import Adam

FORMAT = "selfreg-kd-checkpoint"
VERSION = 1


def encode_array(a) -> dict:
    a = np.asarray(a)
    dtype = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    data = np.ascontiguousarray(a, dtype=dtype).tobytes()
    return {"dtype": dtype, "shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    if d.get("dtype") not in ("<f8", "<i8"):
        raise SchemaError(f"unsupported array dtype {d.get('dtype')!r}")
    raw = base64.b64decode(d["data"])
    native = np.float64 if d["dtype"] == "<f8" else np.int64
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).astype(native)


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load(path, kind: str) -> dict:
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != FORMAT or obj.get("kind") != kind:
        raise SchemaError(f"{path}: not a {kind} checkpoint")
    if obj.get("version") != VERSION:
        raise SchemaError(f"{path}: unsupported version {obj.get('version')!r}")
    return obj


def save_checkpoint(path, model: SequentialModel, optimizer: Adam | None = None,
                    rng: dict | None = None, meta: dict | None = None) -> None:
    obj = {
        "format": FORMAT,
        "version": VERSION,
        "kind": "model",
        "endianness": "little",
        "input_shape": list(model.input_shape),
        "layers": [s.to_dict() for s in model.specs],
        "params": [encode_array(p) for p in model.parameters()],
        "rng": rng or {"seed": model.seed, "counter": 0},
        "meta": meta or {},
    }
    if optimizer is not None:
        st = optimizer.state_dict()
        obj["optimizer"] = {
            "kind": "adam",
            **{k: st[k] for k in ("lr", "beta1", "beta2", "eps", "step")},
            "m": [encode_array(a) for a in st["m"]],
            "v": [encode_array(a) for a in st["v"]],
        }
    _dump(obj, path)


def load_checkpoint(path):
    """Returns ``(model, optimizer_or_None, rng, meta)``."""
    obj = _load(path, "model")
    model = SequentialModel(obj["layers"], obj["input_shape"], seed=obj["rng"].get("seed", 0))
    model.set_parameters([decode_array(p) for p in obj["params"]])
    optimizer = None
    if "optimizer" in obj:
        o = obj["optimizer"]
        optimizer = Adam(model.parameters(), lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"])
        optimizer.load_state_dict({
            **{k: o[k] for k in ("lr", "beta1", "beta2", "eps", "step")},
            "m": [decode_array(a) for a in o["m"]],
            "v": [decode_array(a) for a in o["v"]],
        })
    return model, optimizer, obj["rng"], obj.get("meta", {})


def save_dataset(path, dataset: Dataset, meta: dict | None = None) -> None:
    _dump({
        "format": FORMAT,
        "version": VERSION,
        "kind": "dataset",
        "endianness": "little",
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "images": encode_array(dataset.images),
        "labels": encode_array(dataset.labels),
        "meta": meta or {},
    }, path)


def load_dataset(path) -> Dataset:
    obj = _load(path, "dataset")
    return Dataset(decode_array(obj["images"]), decode_array(obj["labels"]),
                   obj["num_classes"], obj["name"])
