# # Training a teacher with self-regulation
#
# A self-regulated model decides for itself which samples it still needs.
# Before each update it looks at every sample in the batch and keeps it only
# if the prediction is wrong, or if the gap between the top two class
# probabilities is below an epoch-dependent threshold
#
#     eta(n) = 1 - exp(-alpha * n)
#
# Early on eta is small, so confidently classified samples drop out quickly.
# As n grows eta creeps towards 1 and easy samples are pulled back in now and
# then.  The number of epochs each sample took part in is kept in a
# participation ledger.
#
# Run with `python3 demos/01_self_regulated_teacher.py`.

# %%
import math

import numpy as np

from selfreg_kd import build, synthetic_blobs, threshold, train_teacher

train = synthetic_blobs(num_classes=3, per_class=200, dim=10, separation=6.0, seed=0)
test = synthetic_blobs(num_classes=3, per_class=200, dim=10, separation=6.0, seed=1)
print(f"{len(train)} training samples, {len(test)} test samples")

# ## The threshold schedule
#
# With alpha = 0.02 the threshold reaches 0.5 after about 35 epochs.

# %%
for n in (0, 1, 10, 35, 49):
    print(f"epoch {n:3d}: eta = {threshold(0.02, n):.4f}")

# ## Conventional against self-regulated training
#
# `alpha = math.inf` opens the gate for every sample in every epoch, which is
# plain training.  Both runs start from the same weights and see the same
# batch order.

# %%
EPOCHS = 50
runs = {}
for label, alpha in (("conventional", math.inf), ("self-regulated", 0.02)):
    model = build("mlp-big", train.sample_shape, train.num_classes, seed=0)
    model, ledger, report = train_teacher(model, train, alpha, EPOCHS, lr=1e-3, test=test)
    runs[label] = (ledger, report)
    print(f"{label:>15}: test accuracy {report.test_accuracy:.4f}, "
          f"participation {report.efficiency}")

# ## Who took part, and when
#
# The per-epoch counts show the gate closing on easy samples as soon as the
# model is confident about them.

# %%
_, report = runs["self-regulated"]
for stats in report.epochs[::7]:
    print(f"epoch {stats.epoch:3d}: {stats.included:4d} samples included, "
          f"{stats.steps} optimiser steps, train accuracy {stats.train_accuracy:.3f}")

ledger, _ = runs["self-regulated"]
print("\nparticipation counts per sample (quantiles):",
      np.quantile(ledger.counts, [0, 0.25, 0.5, 0.75, 1]).astype(int).tolist())
hardest = np.argsort(ledger.counts)[-5:][::-1]
print("most frequently used samples:", hardest.tolist(), "counts", ledger.counts[hardest].tolist())
