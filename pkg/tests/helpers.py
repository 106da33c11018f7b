import numpy as np
from scipy.special import log_softmax

from selfreg_kd.nn import SequentialModel, conv2d, dense, flatten, maxpool2x2, relu

FD_STEP = 1e-5
FD_RTOL = 1e-4


def oracle_hard_ce(logits, labels, mask):
    lp = log_softmax(logits, axis=1)
    per = -lp[np.arange(len(labels)), labels]
    return float((per * mask).sum() / mask.sum())


def oracle_distill(zt, zs, labels, tau, lam, weights, mask):
    target = np.exp(log_softmax(zt / tau, axis=1))
    soft = -(target * log_softmax(zs / tau, axis=1)).sum(axis=1)
    hard = -log_softmax(zs, axis=1)[np.arange(len(labels)), labels]
    w = weights * mask
    return float((w * (soft + lam * hard)).sum() / mask.sum())


def finite_difference(f, params, h=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric):
    """Largest ``|a - n| / max(|a|, |n|)`` over all coordinates; 0/0 counts as 0."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a), np.abs(n))
        err = np.divide(np.abs(a - n), denom, out=np.zeros_like(denom), where=denom > 0)
        worst = max(worst, float(err.max()))
    return worst


# small stacks covering every layer kind, stride/padding variants and odd pooling crops
ARCHITECTURES = {
    "mlp": ((5,), lambda c: [dense(5, 4), relu(), dense(4, c)]),
    "conv-pool": ((2, 6, 6), lambda c: [
        conv2d(2, 3, 3, stride=1, padding=1), relu(), maxpool2x2(), flatten(), dense(27, c)]),
    "strided": ((2, 7, 7), lambda c: [
        conv2d(2, 2, 3, stride=2), relu(), conv2d(2, 3, 2), flatten(), dense(12, c)]),
    "odd-pool": ((2, 5, 5), lambda c: [maxpool2x2(), flatten(), dense(8, 3), relu(), dense(3, c)]),
}


def make_model(name, num_classes=3, seed=0):
    shape, specs = ARCHITECTURES[name]
    return SequentialModel(specs(num_classes), shape, seed=seed)


def is_smooth(model, x, margin=1e-3):
    """False if a ReLU input or a live max-pool window is within ``margin`` of a kink."""
    acts = model.trace(x)
    for spec, inp in zip(model.specs, acts[:-1]):
        if spec.kind == "relu" and np.min(np.abs(inp)) < margin:
            return False
        if spec.kind == "maxpool2x2":
            n, c, h, w = inp.shape
            b = (inp[:, :, : h // 2 * 2, : w // 2 * 2]
                 .reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
                 .reshape(n, c, h // 2, w // 2, 4))
            top = np.sort(b, axis=-1)
            # ties between exact zeros come from dead ReLUs and cannot reorder
            close = (top[..., -1] - top[..., -2] < margin) & (top[..., -1] != 0)
            if close.any():
                return False
    return True


def gradient_case(arch, loss, seed, batch=3, num_classes=3):
    """Draw a random smooth instance and compare backprop with finite differences.

    Returns the worst relative error, or None when the drawn instance sits
    too close to a ReLU/max-pool kink to be differentiable at step ``h``.
    """
    from selfreg_kd.distill import _hard_loss, distill_loss

    rng = np.random.default_rng(seed)
    model = make_model(arch, num_classes, seed=seed)
    x = rng.normal(size=(batch, *model.input_shape))
    labels = rng.integers(0, num_classes, size=batch)
    mask = rng.random(batch) < 0.7
    mask[0] = True
    if not is_smooth(model, x):
        return None
    if loss == "hard":
        oracle = lambda: oracle_hard_ce(model.forward(x, keep=False), labels, mask)
        logits = model.forward(x)
        _, g = _hard_loss(logits, labels, mask)
    else:
        zt = rng.normal(scale=3.0, size=(batch, num_classes))
        tau = float(rng.uniform(1.0, 20.0))
        lam = float(rng.uniform(0.0, 1.0))
        weights = rng.random(batch)
        oracle = lambda: oracle_distill(zt, model.forward(x, keep=False), labels, tau, lam, weights, mask)
        logits = model.forward(x)
        _, g = distill_loss(zt, logits, labels, tau, lam, significance=weights, mask=mask)
    analytic = model.backward(g)
    numeric = finite_difference(oracle, model.parameters())
    return max_relative_error(analytic, numeric)
