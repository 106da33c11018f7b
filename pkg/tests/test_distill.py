import json
import math
from fractions import Fraction

import numpy as np
import pytest

from selfreg_kd.architectures import build
from selfreg_kd.data import Dataset, class_partition, synthetic_blobs
from selfreg_kd.distill import DistillConfig, TrainReport, distill, distill_loss, train_teacher
from selfreg_kd.errors import ConfigError, InvalidParameterError, NumericError
from selfreg_kd.functional import cross_entropy_with_logits, softmax_with_temperature
from selfreg_kd.regulation import ParticipationLedger, gate_batch
from selfreg_kd.significance import compute_significance


@pytest.fixture(scope="module")
def small():
    return synthetic_blobs(3, 40, 6, 3.0, seed=2)


@pytest.fixture(scope="module")
def teacher_run(small):
    model = build("mlp:16", (6,), 3, seed=0)
    model, ledger, report = train_teacher(model, small, 0.05, 8, lr=0.01, batch_size=32, seed=0)
    table = compute_significance(ledger, class_partition(small))
    return model, ledger, report, table


def _params(model):
    return [p.copy() for p in model.parameters()]


# -- loss --------------------------------------------------------------------

def test_all_one_significance_equals_unweighted(rng):
    zt, zs = rng.normal(size=(2, 5, 4))
    y = rng.integers(0, 4, 5)
    a = distill_loss(zt, zs, y, 20.0, 0.3)
    b = distill_loss(zt, zs, y, 20.0, 0.3, significance=np.ones(5))
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_zero_significance_sample_contributes_nothing(rng):
    zt, zs = rng.normal(size=(2, 4, 3))
    y = rng.integers(0, 3, 4)
    w = np.array([0.0, 0.7, 1.0, 0.2])
    loss, grad = distill_loss(zt, zs, y, 5.0, 0.3, significance=w)
    assert not grad[0].any()
    # changing the zero-weight sample leaves the loss unchanged
    zs2 = zs.copy()
    zs2[0] += 10.0
    assert distill_loss(zt, zs2, y, 5.0, 0.3, significance=w)[0] == loss


def test_soft_term_equals_self_entropy_when_logits_agree():
    z = np.array([[2.0, -1.0, 0.5, 3.0]])
    p = softmax_with_temperature(z, 20.0)[0]
    entropy = -sum(q * math.log(q) for q in p)
    hard = -math.log(softmax_with_temperature(z, 1.0)[0, 3])
    assert distill_loss(z, z, [3], 20.0, 0.0)[0] == pytest.approx(entropy, rel=1e-12)
    assert distill_loss(z, z, [3], 20.0, 0.3)[0] == pytest.approx(entropy + 0.3 * hard, rel=1e-12)


def test_lambda_zero_is_soft_term_only(rng):
    zt, zs = rng.normal(size=(2, 6, 3))
    y = rng.integers(0, 3, 6)
    mask = np.array([1, 1, 0, 1, 0, 1], bool)
    loss, grad = distill_loss(zt, zs, y, 4.0, 0.0, mask=mask)
    soft, g = cross_entropy_with_logits(softmax_with_temperature(zt, 4.0), zs, 4.0)
    assert loss == pytest.approx(soft[mask].mean(), rel=1e-14)
    assert np.array_equal(grad, g * (mask / 4.0)[:, None])


def test_tau_squared_flag_scales_soft_term(rng):
    zt, zs = rng.normal(size=(2, 3, 3))
    y = [0, 1, 2]
    plain = distill_loss(zt, zs, y, 4.0, 0.0)[0]
    assert distill_loss(zt, zs, y, 4.0, 0.0, tau_squared=True)[0] == pytest.approx(16 * plain)


def test_mask_mean_over_included_only(rng):
    zt, zs = rng.normal(size=(2, 4, 3))
    y = rng.integers(0, 3, 4)
    mask = np.array([True, False, True, False])
    full = distill_loss(zt[mask], zs[mask], y[mask], 2.0, 0.3)[0]
    assert distill_loss(zt, zs, y, 2.0, 0.3, mask=mask)[0] == pytest.approx(full, rel=1e-14)


@pytest.mark.parametrize("tau,lam", [(0.0, 0.3), (-2.0, 0.3), (20.0, -0.1)])
def test_loss_parameter_validation(tau, lam):
    with pytest.raises(InvalidParameterError):
        distill_loss(np.zeros((1, 2)), np.zeros((1, 2)), [0], tau, lam)


# -- config -------------------------------------------------------------------

def test_weighted_modes_need_table(teacher_run, small):
    teacher = teacher_run[0]
    for mode in ("significance", "hybrid"):
        with pytest.raises(ConfigError):
            distill(teacher, build("mlp:4", (6,), 3), small, DistillConfig(mode=mode, alpha=0.02, epochs=1))


def test_unweighted_modes_refuse_table(teacher_run, small):
    with pytest.raises(ConfigError):
        distill(teacher_run[0], build("mlp:4", (6,), 3), small,
                DistillConfig(mode="conventional", epochs=1), table=teacher_run[3])


def test_gated_modes_need_alpha():
    with pytest.raises(ConfigError):
        DistillConfig(mode="regulated").validate()
    with pytest.raises(ConfigError):
        DistillConfig(mode="bogus").validate()


# -- teacher ------------------------------------------------------------------

def test_forced_open_teacher_ledger_is_full(small):
    _, ledger, report = train_teacher(build("mlp:8", (6,), 3), small, math.inf, 5, lr=0.01, batch_size=16)
    assert np.all(ledger.counts == 5)
    assert report.zeta == 1
    assert all(e.included == len(small) for e in report.epochs)


def test_teacher_ledger_matches_event_log(small):
    events = []
    _, ledger, report = train_teacher(
        build("mlp:8", (6,), 3), small, 0.1, 10, lr=0.02, batch_size=16,
        on_batch=lambda n, idx, inc: events.append((n, idx[inc].copy())),
    )
    replay = np.zeros(len(small), dtype=np.int64)
    for _, idx in events:
        np.add.at(replay, idx, 1)
    assert np.array_equal(replay, ledger.counts)
    assert ledger.total == sum(len(i) for _, i in events) == sum(e.included for e in report.epochs)
    assert ledger.total < 10 * len(small)
    assert np.all(ledger.counts <= 10)


def test_epoch_zero_admits_only_misclassified(small):
    first = {}

    def hook(n, idx, inc):
        if n == 0:
            first.setdefault("rows", []).append((idx.copy(), inc.copy()))

    model = build("mlp:8", (6,), 3, seed=4)
    snapshot = build("mlp:8", (6,), 3, seed=4)
    train_teacher(model, small, 0.1, 1, lr=1e-9, batch_size=len(small), on_batch=hook)
    (idx, inc), = first["rows"]
    pred = snapshot.forward(small.images[idx], keep=False).argmax(axis=1)
    assert np.array_equal(inc, pred != small.labels[idx])


def test_non_finite_loss_aborts_with_diagnostics():
    x = np.ones((4, 2))
    x[2, 1] = np.nan
    bad = Dataset(x, [0, 1, 0, 1], 2, "corrupt")
    model = build("mlp:4", (2,), 2)
    with pytest.raises(NumericError) as info:
        train_teacher(model, bad, math.inf, 2, batch_size=4)
    assert info.value.epoch == 0 and info.value.batch == 0
    assert all(np.isfinite(p).all() for p in model.parameters())  # no step was taken


# -- distillation -------------------------------------------------------------

def test_teacher_is_frozen(teacher_run, small):
    teacher, _, _, table = teacher_run
    before = _params(teacher)
    for mode in ("conventional", "significance", "regulated", "hybrid"):
        cfg = DistillConfig(mode=mode, alpha=0.05, epochs=2, batch_size=32, lr=0.01)
        distill(teacher, build("mlp:4", (6,), 3), small, cfg,
                table=table if mode in ("significance", "hybrid") else None)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(before, teacher.parameters()))


def test_regulated_gate_uses_softened_student_outputs(teacher_run, small):
    teacher = teacher_run[0]
    student = build("mlp:4", (6,), 3, seed=5)
    checks = []

    def hook(n, idx, inc):
        # called before the update: recompute the decision from current parameters
        z = student.forward(small.images[idx], keep=False)
        y_soft = softmax_with_temperature(z, 20.0)
        assert np.array_equal(y_soft.argmax(axis=1), z.argmax(axis=1))
        eta = 1 - math.exp(-0.05 * n)
        expected, _, _ = gate_batch(y_soft, small.labels[idx], eta)
        checks.append(np.array_equal(expected, inc))

    distill(teacher, student, small, DistillConfig(mode="regulated", alpha=0.05, epochs=6,
                                                   batch_size=32, lr=0.01), on_batch=hook)
    assert checks and all(checks)


def test_ungated_modes_record_full_ledger(teacher_run, small):
    teacher, _, _, table = teacher_run
    for mode, tab in (("conventional", None), ("significance", table)):
        _, ledger, report = distill(teacher, build("mlp:4", (6,), 3), small,
                                    DistillConfig(mode=mode, epochs=3, batch_size=32), table=tab)
        assert np.all(ledger.counts == 3) and report.zeta == 1


def _trajectory(teacher, data, mode, alpha=None, table=None, seed=3, **kw):
    student = build("mlp:4", (6,), 3, seed=seed)
    cfg = DistillConfig(mode=mode, alpha=alpha, epochs=5, batch_size=16, lr=0.02, seed=seed, **kw)
    snaps = []
    distill(teacher, student, data, cfg, table=table,
            on_batch=lambda n, idx, inc: snaps.append(b"".join(p.tobytes() for p in student.parameters())))
    return snaps + [b"".join(p.tobytes() for p in student.parameters())]


def test_mode_collapse_identities(teacher_run, small):
    teacher, _, _, table = teacher_run
    ones = compute_significance(_full_ledger(len(small), 5), class_partition(small))
    assert np.all(ones.values == 1)
    assert _trajectory(teacher, small, "hybrid", math.inf, table) == _trajectory(teacher, small, "significance", None, table)
    assert _trajectory(teacher, small, "regulated", math.inf) == _trajectory(teacher, small, "conventional")
    assert _trajectory(teacher, small, "significance", None, ones) == _trajectory(teacher, small, "conventional")
    # and a real gate does change the trajectory
    assert _trajectory(teacher, small, "regulated", 0.05) != _trajectory(teacher, small, "conventional")


def _full_ledger(t, n):
    ledger = ParticipationLedger(t, alpha=math.inf, epochs=n)
    ledger.counts[:] = n
    return ledger


def test_cached_teacher_outputs_are_bit_identical(teacher_run, small):
    teacher, _, _, table = teacher_run
    assert _trajectory(teacher, small, "hybrid", 0.05, table) == \
        _trajectory(teacher, small, "hybrid", 0.05, table, cache_teacher=True)


def test_same_seed_same_run(teacher_run, small):
    teacher, _, _, table = teacher_run
    assert _trajectory(teacher, small, "regulated", 0.05) == _trajectory(teacher, small, "regulated", 0.05)


# -- reports ------------------------------------------------------------------

def test_report_zeta_matches_serialised_ledger(teacher_run, small, tmp_path):
    teacher = teacher_run[0]
    _, ledger, report = distill(teacher, build("mlp:4", (6,), 3), small,
                                DistillConfig(mode="regulated", alpha=0.05, epochs=6, batch_size=32))
    ledger.to_csv(tmp_path / "l.csv", small.labels)
    back, _ = ParticipationLedger.from_csv(tmp_path / "l.csv")
    assert report.zeta == Fraction(int(back.counts.sum()), 6 * len(small))
    data = json.loads(report.to_json())
    assert Fraction(data["final"]["zeta"]) == report.zeta
    assert TrainReport.from_dict(data).to_json() == report.to_json()


def test_report_json_has_config_echo(teacher_run):
    _, _, report, _ = teacher_run
    d = report.to_dict()
    assert d["role"] == "teacher" and d["config"]["alpha"] == 0.05
    assert d["config"]["mode"] == "regulated" and len(d["epochs"]) == 8
    assert set(report.csv_row()) >= {"dataset", "mode", "zeta_percent"}
