"""Self-regulated teacher training and data-efficient distillation.

Both trainers share one loop.  Each batch is forwarded once with the
current (pre-update) parameters; the gate decides per sample whether it
participates, excluded samples are masked out of the batch loss (the mean
runs over included samples only), and a single Adam step is taken.  A
batch with no included sample takes no step.

Distillation modes:

``conventional``
    every sample, soft-target loss plus weighted hard-label loss.
``significance``
    every sample, both loss terms scaled by the teacher-derived significance.
``regulated``
    the student gates itself on its temperature-softened outputs; plain loss.
``hybrid``
    student gate and significance-scaled loss together.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .data import BatchPlan
from .errors import ConfigError, DimensionError, InvalidParameterError, NumericError
from .functional import cross_entropy_with_logits, one_hot, softmax_with_temperature
from .metrics import REPORT_SCHEMA_VERSION, efficiency, evaluate
from .optim import Adam
from .regulation import ParticipationLedger, gate_batch, is_forced_open, threshold

log = logging.getLogger(__name__)

MODES = ("conventional", "significance", "regulated", "hybrid")
GATED_MODES = ("regulated", "hybrid")
WEIGHTED_MODES = ("significance", "hybrid")


def _alpha_for_json(alpha):
    if alpha is None:
        return None
    return "inf" if is_forced_open(alpha) else alpha


@dataclass
class DistillConfig:
    mode: str = "conventional"
    tau: float = 20.0
    lam: float = 0.3
    alpha: float | None = None
    epochs: int = 200
    batch_size: int = 512
    lr: float = 0.01
    seed: int = 0
    # multiply the soft-target term by tau**2 (off: the loss is used as written)
    tau_squared: bool = False
    # precompute teacher logits once instead of per batch
    cache_teacher: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self, table=None) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau!r}")
        if self.lam < 0:
            raise InvalidParameterError(f"lam must be non-negative, got {self.lam!r}")
        if self.mode in GATED_MODES and (self.alpha is None or not self.alpha > 0):
            raise ConfigError(f"mode {self.mode!r} needs a positive alpha")
        if self.mode in WEIGHTED_MODES and table is None:
            raise ConfigError(f"mode {self.mode!r} needs a significance table")
        if self.mode not in WEIGHTED_MODES and table is not None:
            raise ConfigError(f"mode {self.mode!r} does not use a significance table")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = _alpha_for_json(self.alpha)
        return d


@dataclass
class EpochStats:
    epoch: int
    included: int
    batches: int
    steps: int
    mean_loss: float | None
    train_accuracy: float


@dataclass
class TrainReport:
    role: str
    config: dict
    samples: int
    epochs: list = field(default_factory=list)
    participations: int = 0
    test_accuracy: float | None = None

    @property
    def efficiency(self):
        return efficiency(self.participations, len(self.epochs), self.samples)

    @property
    def zeta(self) -> Fraction:
        return self.efficiency.zeta

    def to_dict(self) -> dict:
        eff = self.efficiency
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "role": self.role,
            "config": self.config,
            "epochs": [asdict(e) for e in self.epochs],
            "final": {
                "test_accuracy": self.test_accuracy,
                "participations": eff.participations,
                "available": eff.available,
                "zeta": f"{eff.zeta.numerator}/{eff.zeta.denominator}",
                "zeta_value": eff.value,
                "zeta_percent": eff.percent,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(
            role=d["role"],
            config=d["config"],
            samples=d["final"]["available"] // max(len(d["epochs"]), 1),
            epochs=[EpochStats(**e) for e in d["epochs"]],
            participations=d["final"]["participations"],
            test_accuracy=d["final"]["test_accuracy"],
        )

    def csv_row(self) -> dict:
        eff = self.efficiency
        return {
            "dataset": self.config.get("dataset", ""),
            "mode": self.config.get("mode", ""),
            "role": self.role,
            "seed": self.config.get("seed"),
            "test_accuracy": self.test_accuracy,
            "participations": eff.participations,
            "available": eff.available,
            "zeta_percent": eff.percent,
        }


def _reduce(losses, grads, weights, count):
    loss = float((weights * losses).sum() / count)
    return loss, grads * (weights / count)[:, None]


def distill_loss(
    teacher_logits,
    student_logits,
    labels,
    tau: float,
    lam: float,
    significance=None,
    mask=None,
    tau_squared: bool = False,
):
    """Soft-target cross-entropy at ``tau`` plus ``lam`` times hard-label CE at 1.

    The soft term uses the teacher's softened distribution as the target.
    With ``significance`` given, both terms of each sample are scaled by
    its value.  The batch reduction is the mean over samples selected by
    ``mask`` (all samples when ``mask`` is None).

    Returns ``(loss, grad)`` where ``grad`` is d(loss)/d(student_logits).
    """
    if not tau > 0:
        raise InvalidParameterError(f"tau must be positive, got {tau!r}")
    if lam < 0:
        raise InvalidParameterError(f"lam must be non-negative, got {lam!r}")
    zt = np.asarray(teacher_logits, dtype=np.float64)
    zs = np.asarray(student_logits, dtype=np.float64)
    if zt.shape != zs.shape:
        raise DimensionError(f"teacher logits {zt.shape} vs student logits {zs.shape}")
    n, c = zs.shape
    soft, g_soft = cross_entropy_with_logits(softmax_with_temperature(zt, tau), zs, tau)
    hard, g_hard = cross_entropy_with_logits(one_hot(labels, c), zs, 1.0)
    if tau_squared:
        soft, g_soft = soft * tau * tau, g_soft * tau * tau
    weights = np.ones(n) if significance is None else np.asarray(significance, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        weights = weights * mask
        count = int(mask.sum())
    else:
        count = n
    if count == 0:
        return 0.0, np.zeros_like(zs)
    return _reduce(soft + lam * hard, g_soft + lam * g_hard, weights, count)


def _hard_loss(logits, labels, mask):
    losses, grads = cross_entropy_with_logits(one_hot(labels, logits.shape[1]), logits, 1.0)
    return _reduce(losses, grads, mask.astype(np.float64), int(mask.sum()))


def _train(model, dataset, *, epochs, batch_size, seed, optimizer, alpha, gate_tau,
           loss_fn, on_batch=None):
    t = len(dataset)
    forced = alpha is None or is_forced_open(alpha)
    ledger = ParticipationLedger(t, alpha=math.inf if forced else alpha, epochs=epochs)
    plan = BatchPlan(t, batch_size, seed)
    history = []
    for n in range(epochs):
        eta = None if forced else threshold(alpha, n)
        included_total = steps = correct = 0
        batches = plan.batches(n)
        losses = []
        for b, idx in enumerate(batches):
            x = dataset.images[idx]
            y = dataset.labels[idx]
            logits = model.forward(x)
            if forced:
                included = np.ones(idx.shape[0], dtype=bool)
                predicted = logits.argmax(axis=1)
            else:
                probs = softmax_with_temperature(logits, gate_tau)
                included, predicted, _ = gate_batch(probs, y, eta)
            correct += int((predicted == y).sum())
            if on_batch is not None:
                on_batch(n, idx, included)
            k = int(included.sum())
            if k == 0:
                continue
            loss, grad = loss_fn(idx, logits, y, included)
            # the log floor can mask diverged logits, so check them too
            if not (math.isfinite(loss) and np.isfinite(grad).all() and np.isfinite(logits).all()):
                raise NumericError(
                    f"non-finite loss {loss!r} at epoch {n}, batch {b}",
                    epoch=n, batch=b, loss=loss,
                )
            optimizer.step(model.parameters(), model.backward(grad))
            ledger.record_many(idx[included])
            included_total += k
            steps += 1
            losses.append(loss)
        history.append(
            EpochStats(
                epoch=n,
                included=included_total,
                batches=len(batches),
                steps=steps,
                mean_loss=float(np.mean(losses)) if losses else None,
                train_accuracy=correct / t,
            )
        )
        log.debug("epoch %d: %d/%d included, loss %s", n, included_total, t, history[-1].mean_loss)
    model.clear()
    return ledger, history


def train_teacher(
    model,
    dataset,
    alpha: float,
    epochs: int,
    lr: float = 1e-3,
    batch_size: int = 512,
    seed: int = 0,
    test=None,
    on_batch=None,
    optimizer=None,
):
    """Train ``model`` in place with the self-regulation gate at temperature 1.

    ``alpha = math.inf`` trains conventionally (every sample, every epoch).
    Pass an ``Adam`` as ``optimizer`` to keep its state (``lr`` is then
    ignored).  Returns ``(model, ledger, report)``.
    """
    if model.num_classes != dataset.num_classes:
        raise DimensionError(
            f"model outputs {model.num_classes} logits for {dataset.num_classes} classes"
        )
    if alpha is None or not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive (math.inf for conventional), got {alpha!r}")
    if optimizer is None:
        optimizer = Adam(model.parameters(), lr=lr)
    lr = optimizer.lr
    ledger, history = _train(
        model, dataset, epochs=epochs, batch_size=batch_size, seed=seed,
        optimizer=optimizer, alpha=alpha, gate_tau=1.0,
        loss_fn=lambda idx, z, y, mask: _hard_loss(z, y, mask),
        on_batch=on_batch,
    )
    config = {
        "dataset": dataset.name,
        "mode": "conventional" if is_forced_open(alpha) else "regulated",
        "alpha": _alpha_for_json(alpha),
        "epochs": epochs,
        "batch_size": batch_size,
        "lr": lr,
        "seed": seed,
    }
    report = TrainReport(
        role="teacher",
        config=config,
        samples=len(dataset),
        epochs=history,
        participations=ledger.total,
        test_accuracy=None if test is None else evaluate(model, test),
    )
    return model, ledger, report


def teacher_logits(teacher, images, batch_size: int = 512) -> np.ndarray:
    return np.concatenate(
        [teacher.forward(images[i : i + batch_size], keep=False)
         for i in range(0, images.shape[0], batch_size)]
    )


def distill(teacher, student, dataset, config: DistillConfig, table=None, test=None,
            on_batch=None, optimizer=None):
    """Train ``student`` in place from the frozen ``teacher``.

    ``table`` is the significance table from the teacher's run, required by
    the ``significance`` and ``hybrid`` modes.  Returns
    ``(student, ledger, report)``; for ungated modes every sample is
    recorded in every epoch.  An ``optimizer`` passed in is used as is and
    keeps its state afterwards.
    """
    config.validate(table)
    if student.num_classes != dataset.num_classes or teacher.num_classes != dataset.num_classes:
        raise DimensionError("teacher, student and dataset disagree on the class count")
    weights = None
    if config.mode in WEIGHTED_MODES:
        weights = np.asarray(table.values, dtype=np.float64)
        if weights.shape[0] != len(dataset):
            raise DimensionError(
                f"significance table has {weights.shape[0]} entries for {len(dataset)} samples"
            )
    cached = teacher_logits(teacher, dataset.images, config.batch_size) if config.cache_teacher else None

    def loss_fn(idx, z_s, y, mask):
        z_t = cached[idx] if cached is not None else teacher.forward(dataset.images[idx], keep=False)
        return distill_loss(
            z_t, z_s, y, config.tau, config.lam,
            significance=None if weights is None else weights[idx],
            mask=mask, tau_squared=config.tau_squared,
        )

    alpha = config.alpha if config.mode in GATED_MODES else math.inf
    if optimizer is None:
        optimizer = Adam(student.parameters(), lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
    ledger, history = _train(
        student, dataset, epochs=config.epochs, batch_size=config.batch_size,
        seed=config.seed, optimizer=optimizer, alpha=alpha, gate_tau=config.tau,
        loss_fn=loss_fn, on_batch=on_batch,
    )
    report = TrainReport(
        role="student",
        config={"dataset": dataset.name, **config.to_dict()},
        samples=len(dataset),
        epochs=history,
        participations=ledger.total,
        test_accuracy=None if test is None else evaluate(student, test),
    )
    return student, ledger, report
