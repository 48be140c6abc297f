"""
Confidence intervals from the bootstrap
=======================================

Resampling the evaluation set shows how much a metric would move on a
different draw of test data. When samples come in correlated clusters (one
speaker, one patient) the clusters have to be resampled whole.
"""

# %%
import numpy as np

from evalkit import TrialSet
from evalkit.bootstrap import (
    BootstrapConfig, bootstrap_ci, bootstrap_difference, pool_distributions, verdict,
)
from evalkit.metrics import get_metric

rng = np.random.default_rng(1)
n_groups, per_group = 20, 50
groups = np.repeat([f"spk{g}" for g in range(n_groups)], per_group)
labels = rng.integers(0, 2, groups.size)

# each speaker is easy or hard as a whole
speaker_acc = np.clip(rng.normal(0.8, 0.15, n_groups), 0.05, 0.99)
correct = rng.random(groups.size) < np.repeat(speaker_acc, per_group)
ids = [f"s{i}" for i in range(groups.size)]
system_a = TrialSet.build(ids, labels, num_classes=2, groups=groups,
                          decisions=np.where(correct, labels, 1 - labels))

acc = get_metric("accuracy")
_, flat = bootstrap_ci(system_a, acc, BootstrapConfig(n_replicates=1000, seed=0))
_, grouped = bootstrap_ci(system_a, acc, BootstrapConfig(n_replicates=1000, seed=0, group_by=True))
print(f"accuracy {flat.point_estimate:.3f}")
print(f"  sample-level CI  [{flat.low:.3f}, {flat.high:.3f}]  width {flat.width:.3f}")
print(f"  speaker-level CI [{grouped.low:.3f}, {grouped.high:.3f}]  width {grouped.width:.3f}")

# %%
# Comparing two systems: resample once and score both on the same draw. The
# interval of the difference is much tighter than the two separate intervals
# suggest, because the speaker effect cancels.
better = correct | (rng.random(groups.size) < 0.15)
improved = TrialSet.build(ids, labels, num_classes=2, groups=groups,
                          decisions=np.where(better, labels, 1 - labels))
_, diff = bootstrap_difference(improved, system_a, acc,
                               BootstrapConfig(n_replicates=1000, seed=0, group_by=True))
# 'A' in the verdict is the first system passed
print(f"improved - baseline: {diff.point_estimate:+.3f} [{diff.low:+.3f}, {diff.high:+.3f}], "
      f"{verdict(diff, acc.higher_is_better)}")

# %%
# Training randomness: retrain with several seeds, bootstrap each run and pool
# the replicates so the interval reflects both sources of variation.
dists = []
for seed in range(5):
    flip = rng.random(groups.size) < 0.05
    run = TrialSet.build(ids, labels, num_classes=2, groups=groups,
                         decisions=np.where(correct ^ flip, labels, 1 - labels))
    dist, _ = bootstrap_ci(run, acc, BootstrapConfig(n_replicates=500, seed=seed, group_by=True))
    dists.append(dist)
pooled = pool_distributions(dists)
print(f"pooled over 5 seeds: {pooled.point_estimate:.3f} [{pooled.low:.3f}, {pooled.high:.3f}]")
