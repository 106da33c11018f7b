"""Named layer stacks.

``lenet5`` and ``alexnet`` follow the usual small-image variants.  The
``*-half`` students halve every channel and hidden-unit count of their
teacher; this is a convention of this package.
"""
from __future__ import annotations

from .errors import ConfigError
from .nn import SequentialModel, conv2d, dense, flatten, maxpool2x2, mlp, relu


def _lenet5(width: float, in_channels: int, num_classes: int) -> list:
    c1, c2 = int(6 * width), int(16 * width)
    f1, f2 = int(120 * width), int(84 * width)
    return [
        conv2d(in_channels, c1, 5, padding=2), relu(), maxpool2x2(),
        conv2d(c1, c2, 5), relu(), maxpool2x2(),
        flatten(),
        dense(c2 * 5 * 5, f1), relu(),
        dense(f1, f2), relu(),
        dense(f2, num_classes),
    ]


def _alexnet(width: float, in_channels: int, num_classes: int) -> list:
    # CIFAR-sized AlexNet: three 2x2 pools take 32x32 down to 4x4
    c = [int(n * width) for n in (64, 192, 384, 256, 256)]
    f = int(1024 * width)
    return [
        conv2d(in_channels, c[0], 5, padding=2), relu(), maxpool2x2(),
        conv2d(c[0], c[1], 5, padding=2), relu(), maxpool2x2(),
        conv2d(c[1], c[2], 3, padding=1), relu(),
        conv2d(c[2], c[3], 3, padding=1), relu(),
        conv2d(c[3], c[4], 3, padding=1), relu(), maxpool2x2(),
        flatten(),
        dense(c[4] * 4 * 4, f), relu(),
        dense(f, f), relu(),
        dense(f, num_classes),
    ]


def layer_specs(name: str, input_shape, num_classes: int) -> list:
    """Resolve an architecture name to layer specs.

    Besides the named presets, ``"mlp:64,32"`` builds an MLP with the given
    hidden widths (``"mlp:"`` alone is logistic regression).
    """
    input_shape = tuple(input_shape)
    if name.startswith("mlp:"):
        widths = name[4:]
        try:
            hidden = [int(w) for w in widths.split(",")] if widths else []
        except ValueError:
            raise ConfigError(f"bad MLP widths in {name!r}") from None
        if any(w <= 0 for w in hidden):
            raise ConfigError(f"MLP widths must be positive in {name!r}")
        n_in = 1
        for d in input_shape:
            n_in *= d
        specs = mlp(n_in, hidden, num_classes)
        return ([flatten()] if len(input_shape) > 1 else []) + specs
    presets = {
        "mlp-big": "mlp:64,64",
        "mlp-small": "mlp:8",
    }
    if name in presets:
        return layer_specs(presets[name], input_shape, num_classes)
    if name in ("lenet5", "lenet5-half"):
        if input_shape[1:] != (28, 28):
            raise ConfigError(f"{name} expects 28x28 inputs, got {input_shape}")
        return _lenet5(0.5 if name.endswith("half") else 1.0, input_shape[0], num_classes)
    if name in ("alexnet", "alexnet-half"):
        if input_shape[1:] != (32, 32):
            raise ConfigError(f"{name} expects 32x32 inputs, got {input_shape}")
        return _alexnet(0.5 if name.endswith("half") else 1.0, input_shape[0], num_classes)
    raise ConfigError(f"unknown architecture {name!r}")


def build(name: str, input_shape, num_classes: int, seed: int = 0) -> SequentialModel:
    return SequentialModel(layer_specs(name, input_shape, num_classes), input_shape, seed=seed)
