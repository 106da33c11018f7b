from __future__ import annotations

import numpy as np

from .errors import DimensionError, InvalidParameterError


class Adam:
    """Adam with bias correction, updating parameter arrays in place.

    The moment accumulators are allocated from the shapes of ``params`` and
    keep exactly those shapes for the optimizer's lifetime.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise InvalidParameterError(f"learning rate must be positive, got {lr!r}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise InvalidParameterError("betas must lie in [0, 1)")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in params]

    def step(self, params, grads) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise DimensionError(
                f"optimizer tracks {len(self.m)} arrays, got {len(params)} params "
                f"and {len(grads)} gradients"
            )
        for p, g, m in zip(params, grads, self.m):
            if p.shape != m.shape or np.shape(g) != m.shape:
                raise DimensionError(
                    f"shape mismatch: param {p.shape}, grad {np.shape(g)}, state {m.shape}"
                )
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step_count,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        if len(state["m"]) != len(self.m):
            raise DimensionError("optimizer state does not match parameter count")
        for dst, src in zip(self.m + self.v, list(state["m"]) + list(state["v"])):
            if dst.shape != np.shape(src):
                raise DimensionError(f"state shape {np.shape(src)} does not match {dst.shape}")
            dst[...] = src
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.step_count = int(state["step"])
