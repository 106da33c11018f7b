"""Softmax with temperature and cross-entropy, with gradients w.r.t. logits."""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, InvalidParameterError

# floor applied to predicted probabilities before taking the log
LOG_FLOOR = 1e-12


def softmax_with_temperature(logits, tau: float = 1.0) -> np.ndarray:
    """Row-wise ``softmax(logits / tau)``, stabilised by max subtraction."""
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be positive, got {tau!r}")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_pair(target, predicted):
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    predicted = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    if target.shape != predicted.shape:
        raise DimensionError(
            f"target shape {target.shape} does not match predicted shape {predicted.shape}"
        )
    return target, predicted


def cross_entropy_per_sample(target, predicted) -> np.ndarray:
    """``-sum(target * log(predicted))`` for each row, log floored at ``LOG_FLOOR``."""
    target, predicted = _check_pair(target, predicted)
    return -(target * np.log(np.maximum(predicted, LOG_FLOOR))).sum(axis=-1)


def cross_entropy(target, predicted) -> float:
    """Batch-mean cross-entropy between target and predicted distributions.

    ``target`` may be one-hot (hard labels) or a soft distribution.
    """
    return float(cross_entropy_per_sample(target, predicted).mean())


def cross_entropy_with_logits(target, logits, tau: float = 1.0):
    """Per-sample cross-entropy of ``softmax(logits / tau)`` against ``target``.

    Returns ``(losses, grad)`` where ``losses`` has shape ``[B]`` and
    ``grad[b]`` is the derivative of ``losses[b]`` with respect to
    ``logits[b]``.  No batch reduction is applied.
    """
    p = softmax_with_temperature(logits, tau)
    target, p = _check_pair(target, p)
    clamped = p > LOG_FLOOR
    losses = -(target * np.log(np.where(clamped, p, LOG_FLOOR))).sum(axis=-1)
    # dL/dp is zero where the floor is active
    g = np.where(clamped, -target / np.where(clamped, p, 1.0), 0.0)
    grad = p * (g - (p * g).sum(axis=-1, keepdims=True)) / tau
    return losses, grad
