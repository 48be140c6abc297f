"""
Cross-validation without leaking speakers
=========================================

If the same speaker appears in training and evaluation, the evaluation score
says little about new speakers. Folds are therefore built from whole groups,
and any split can be audited for leaks.
"""

# %%
import numpy as np

from evalkit import SampleCatalog, TrialSet
from evalkit.metrics import accuracy
from evalkit.splits import audit, audit_plan, make_folds, make_nested_folds, pooled_outputs

rng = np.random.default_rng(3)
ids, groups = [], []
for g in range(12):
    for j in range(int(rng.integers(3, 15))):
        ids.append(f"spk{g}_{j}")
        groups.append(f"spk{g}")
catalog = SampleCatalog.build(ids, groups)

plan = make_folds(catalog, k=4, seed=0)
print("fold sizes", plan.sizes())
print("self-audit:", audit_plan(plan, catalog).table())

# %%
# A random split ignores speakers and leaks them into evaluation.
perm = rng.permutation(len(ids))
train = [ids[i] for i in perm[:60]]
held = [ids[i] for i in perm[60:]]
report = audit(train, [], held, catalog)
print(report.summary())
print(report.table().splitlines()[1])

# %%
# Nested folds: the inner loop only ever sees the outer training part.
nested = make_nested_folds(catalog, k_outer=3, k_inner=2, seed=0)
print("outer sizes", nested.sizes(), "inner sizes", [p.sizes() for p in nested.nested])
print("nested audit clean:", audit_plan(nested, catalog).ok)

# %%
# Each fold's held-out outputs are stacked into one set and scored once.
labels = dict(zip(ids, rng.integers(0, 2, len(ids))))
outputs = []
for f in range(plan.k):
    held = plan.fold(f)
    y = np.array([labels[s] for s in held])
    guess = np.where(rng.random(len(y)) < 0.8, y, 1 - y)
    outputs.append(TrialSet.build(held, y, num_classes=2, decisions=guess))
print(f"pooled cross-validation accuracy {accuracy(pooled_outputs(outputs, plan)).value:.3f}")
