# # Sample efficiency
#
# Sample efficiency is the fraction of all available sample visits that were
# actually used:
#
#     zeta = (sum of participation counts) / (epochs * samples)
#
# It is kept as an exact fraction, so a report read back from disk gives the
# same number as the ledger it came from.
#
# Run with `python3 demos/04_sample_efficiency.py`.

# %%
from fractions import Fraction

from selfreg_kd import DistillConfig, build, distill, efficiency, synthetic_blobs, train_teacher

# A worked example: 85528 visits over 200 epochs of 60000 samples.
record = efficiency(85528, epochs=200, samples=60000)
print(record, "exact:", record.zeta)
assert record.zeta == Fraction(85528, 12_000_000)

# ## How the gate behaves in a student
#
# The student gates on its own outputs at the distillation temperature.  A
# high temperature squeezes the top-two probability gap, so the student
# rarely looks confident enough to skip a sample.  The temperature does not
# change which class is predicted, only the size of the margin.

# %%
train = synthetic_blobs(num_classes=3, per_class=200, dim=10, separation=6.0, seed=0)
test = synthetic_blobs(num_classes=3, per_class=200, dim=10, separation=6.0, seed=1)
teacher = build("mlp-big", train.sample_shape, train.num_classes, seed=0)
teacher, _, _ = train_teacher(teacher, train, alpha=0.02, epochs=50)

print(f"{'tau':>5} {'alpha':>6}  accuracy  zeta")
for tau in (20.0, 4.0, 1.0):
    for alpha in (0.02, 0.1, 0.5):
        config = DistillConfig(mode="regulated", alpha=alpha, tau=tau, epochs=50)
        student = build("mlp-small", train.sample_shape, train.num_classes, seed=0)
        _, ledger, rep = distill(teacher, student, train, config, test=test)
        print(f"{tau:5.0f} {alpha:6.2f}  {rep.test_accuracy:.4f}    {rep.efficiency.percent}")

# Smaller alpha keeps the threshold low for longer, so more samples are
# skipped.  At tau = 1 and alpha = 0.02 the student uses about an eighth of
# the visits a conventional run would, for the same test accuracy on this
# easy problem.
