"""Sequential models built from a small fixed set of layers.

Supported layer kinds are ``dense``, ``conv2d``, ``maxpool2x2``, ``relu`` and
``flatten``.  Every layer implements its own forward and backward pass in
numpy (float64), so gradients never go through a general autodiff graph.
Models output raw logits; no softmax is applied inside the network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, StateError

LAYER_KINDS = ("dense", "conv2d", "maxpool2x2", "relu", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.dims}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        return cls(d.pop("kind"), d)


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("dense", {"in": int(in_features), "out": int(out_features)})


def conv2d(in_channels, out_channels, kernel, stride=1, padding=0) -> LayerSpec:
    return LayerSpec(
        "conv2d",
        {
            "in_channels": int(in_channels),
            "out_channels": int(out_channels),
            "kernel": int(kernel),
            "stride": int(stride),
            "padding": int(padding),
        },
    )


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool2x2() -> LayerSpec:
    return LayerSpec("maxpool2x2")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


class Layer:
    params: list

    def __init__(self, spec: LayerSpec | None = None):
        self.params = []
        self._cache = None

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def init(self, rng: np.random.Generator) -> None:
        pass

    def clear(self) -> None:
        self._cache = None


class Dense(Layer):
    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        self.n_in = spec.dims["in"]
        self.n_out = spec.dims["out"]
        self.params = [np.zeros((self.n_out, self.n_in)), np.zeros(self.n_out)]

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ValueError(f"expected input ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def init(self, rng):
        bound = math.sqrt(1.0 / self.n_in)
        for p in self.params:
            p[...] = rng.uniform(-bound, bound, size=p.shape)

    def forward(self, x, keep=True):
        w, b = self.params
        if keep:
            self._cache = x
        return x @ w.T + b

    def backward(self, g):
        x = self._cache
        w, _ = self.params
        return g @ w, [g.T @ x, g.sum(axis=0)]


class Conv2d(Layer):
    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        d = spec.dims
        self.c_in = d["in_channels"]
        self.c_out = d["out_channels"]
        self.k = d["kernel"]
        self.stride = d.get("stride", 1)
        self.pad = d.get("padding", 0)
        self.params = [
            np.zeros((self.c_out, self.c_in, self.k, self.k)),
            np.zeros(self.c_out),
        ]

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.c_in:
            raise ValueError(f"expected input ({self.c_in}, H, W), got {in_shape}")
        _, h, w = in_shape
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"kernel {self.k} does not fit input {in_shape}")
        return (self.c_out, ho, wo)

    def init(self, rng):
        bound = math.sqrt(1.0 / (self.c_in * self.k * self.k))
        for p in self.params:
            p[...] = rng.uniform(-bound, bound, size=p.shape)

    def _columns(self, x):
        p, s, k = self.pad, self.stride, self.k
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return cols, x.shape, ho, wo

    def forward(self, x, keep=True):
        w, b = self.params
        cols, padded_shape, ho, wo = self._columns(x)
        out = cols @ w.reshape(self.c_out, -1).T + b
        if keep:
            self._cache = (cols, padded_shape, ho, wo)
        return out.reshape(x.shape[0], ho, wo, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, g):
        cols, padded_shape, ho, wo = self._cache
        w, _ = self.params
        k, s, p = self.k, self.stride, self.pad
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        dw = (g2.T @ cols).reshape(w.shape)
        db = g2.sum(axis=0)
        dcols = (g2 @ w.reshape(self.c_out, -1)).reshape(
            g.shape[0], ho, wo, self.c_in, k, k
        )
        dx = np.zeros(padded_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[
                    ..., i, j
                ].transpose(0, 3, 1, 2)
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx, [dw, db]


class ReLU(Layer):
    def forward(self, x, keep=True):
        if keep:
            self._cache = x > 0
        # np.maximum propagates NaN, so divergence is not silently zeroed
        return np.maximum(x, 0.0)

    def backward(self, g):
        return np.where(self._cache, g, 0.0), []


class MaxPool2x2(Layer):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] < 2 or in_shape[2] < 2:
            raise ValueError(f"expected input (C, H>=2, W>=2), got {in_shape}")
        c, h, w = in_shape
        return (c, h // 2, w // 2)

    def forward(self, x, keep=True):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        blocks = (
            x[:, :, : 2 * h2, : 2 * w2]
            .reshape(n, c, h2, 2, w2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2, w2, 4)
        )
        idx = blocks.argmax(axis=-1)
        if keep:
            self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, g):
        shape, idx = self._cache
        n, c, h, w = shape
        h2, w2 = h // 2, w // 2
        mask = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(mask, idx[..., None], g[..., None], axis=-1)
        dx = np.zeros(shape)
        dx[:, :, : 2 * h2, : 2 * w2] = (
            mask.reshape(n, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, 2 * h2, 2 * w2)
        )
        return dx, []


class Flatten(Layer):
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, keep=True):
        if keep:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._cache), []


_LAYER_CLASSES = {
    "dense": Dense,
    "conv2d": Conv2d,
    "relu": ReLU,
    "maxpool2x2": MaxPool2x2,
    "flatten": Flatten,
}


class SequentialModel:
    """A stack of layers applied in order.

    Parameters
    ----------
    specs:
        Layer specifications, first to last.
    input_shape:
        Shape of a single input sample, e.g. ``(1, 28, 28)`` or ``(20,)``.
    seed:
        Seed for the uniform fan-in initialisation.

    Layer compatibility is checked at construction; an incompatible stack
    raises :class:`DimensionError` naming the offending layer.
    """

    def __init__(self, specs, input_shape, seed: int = 0):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = seed
        self.layers = [_LAYER_CLASSES[s.kind](s) for s in self.specs]
        shape = self.input_shape
        self.shapes = [shape]
        for i, (spec, layer) in enumerate(zip(self.specs, self.layers)):
            try:
                shape = layer.out_shape(shape)
            except ValueError as exc:
                raise DimensionError(f"layer {i} ({spec.kind}): {exc}", layer=i) from None
            self.shapes.append(shape)
        if len(shape) != 1:
            raise DimensionError(
                f"model output must be a vector of logits, got shape {shape}",
                layer=len(self.layers) - 1,
            )
        self.num_classes = shape[0]
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(rng)
        self._ready = False

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def set_parameters(self, values) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise DimensionError(f"expected {len(params)} parameter arrays, got {len(values)}")
        for p, v in zip(params, values):
            v = np.asarray(v, dtype=np.float64)
            if v.shape != p.shape:
                raise DimensionError(f"parameter shape {v.shape} does not match {p.shape}")
            p[...] = v

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"layer 0 ({self.specs[0].kind if self.specs else 'input'}): "
                f"expected batch of {self.input_shape}, got {x.shape}",
                layer=0,
            )
        return x

    def forward(self, x, keep: bool = True) -> np.ndarray:
        """Logits of shape ``[B, C]``.

        With ``keep=False`` nothing is cached, which is what evaluation and
        frozen teachers use; a following :meth:`backward` then refers to the
        last cached forward, if any.
        """
        x = self._check_input(x)
        for layer in self.layers:
            x = layer.forward(x, keep)
        if keep:
            self._ready = True
        return x

    __call__ = forward

    def trace(self, x) -> list:
        """Every intermediate activation, input first and logits last."""
        x = self._check_input(x)
        out = [x]
        for layer in self.layers:
            x = layer.forward(x, keep=False)
            out.append(x)
        return out

    def backward(self, grad_logits) -> list:
        """Gradients of the loss w.r.t. every parameter, ordered as :meth:`parameters`.

        ``grad_logits`` is the derivative of the (already batch-reduced)
        loss with respect to the logits of the last kept forward pass.
        """
        if not self._ready:
            raise StateError("backward called before a forward pass")
        g = np.asarray(grad_logits, dtype=np.float64)
        per_layer = []
        for layer in reversed(self.layers):
            g, grads = layer.backward(g)
            per_layer.append(grads)
        return [g for grads in reversed(per_layer) for g in grads]

    def clear(self) -> None:
        for layer in self.layers:
            layer.clear()
        self._ready = False


def mlp(in_features: int, hidden, num_classes: int) -> list:
    """Layer specs for a ReLU multilayer perceptron."""
    specs = []
    prev = in_features
    for h in hidden:
        specs += [dense(prev, h), relu()]
        prev = h
    specs.append(dense(prev, num_classes))
    return specs
