# # Sample significance from a participation ledger
#
# A sample that the teacher kept coming back to is one it found hard.  The
# ledger count is turned into a significance in [0, 1] by a min-max
# normalisation inside each class, so every class spans the full range no
# matter how easy the class is overall.  A class where every sample took part
# equally often carries no information and is given significance 1.
#
# The histograms are written as CSV, ready for any plotting tool.
#
# Run with `python3 demos/02_significance_histograms.py`.

# %%
from pathlib import Path

import numpy as np

from selfreg_kd import build, class_partition, compute_significance, histogram, synthetic_blobs, train_teacher
from selfreg_kd.significance import histograms_to_csv

OUT = Path("demo_output")
OUT.mkdir(exist_ok=True)

# Overlapping blobs make some samples genuinely harder than others.
train = synthetic_blobs(num_classes=3, per_class=300, dim=10, separation=3.0, seed=0)
teacher = build("mlp-big", train.sample_shape, train.num_classes, seed=0)
teacher, ledger, report = train_teacher(teacher, train, alpha=0.02, epochs=60)
print(f"teacher participation {report.efficiency}")

# %%
partition = class_partition(train)
table = compute_significance(ledger, partition, dataset=train.name)
print("degenerate classes:", table.degenerate_classes or "none")

# ## A text rendering of the histograms
#
# Four bins, 0.0-0.25 up to 0.75-1.0.  The lowest bin is the most crowded:
# those samples were learned early and rarely revisited.  The top bin fills
# up with samples lying on the wrong side of the class boundary, which the
# teacher misclassifies and therefore keeps using in every epoch.

# %%
hists = histogram(table, partition, bins=4)
for h in hists:
    print(f"class {h.class_id}")
    for lo, hi, count in zip(h.edges[:-1], h.edges[1:], h.counts):
        print(f"  {lo:.2f}-{hi:.2f} {count:4d} {'#' * int(60 * count / h.counts.sum())}")

histograms_to_csv(OUT / "histogram.csv", hists)
table.to_csv(OUT / "significance.csv")
print(f"\nwrote {OUT / 'histogram.csv'} and {OUT / 'significance.csv'}")

# ## Where do the significant samples live?
#
# A sample close to another class is hard.  Measure how much nearer it is to
# its own class centre than to the closest other centre.

# %%
from selfreg_kd.metrics import predict

centres = np.array([train.images[m].mean(axis=0) for m in partition])
dist = np.linalg.norm(train.images[:, None] - centres[None], axis=2)
rows = np.arange(len(train))
own = dist[rows, train.labels].copy()
dist[rows, train.labels] = np.inf
room = dist.min(axis=1) - own
print(f"correlation between room to the boundary and significance: {np.corrcoef(room, table.values)[0, 1]:.2f}")

wrong = predict(teacher, train.images) != train.labels
print(f"mean significance of the {wrong.sum()} samples the teacher still gets wrong: "
      f"{table.values[wrong].mean():.2f}, of the rest: {table.values[~wrong].mean():.2f}")
