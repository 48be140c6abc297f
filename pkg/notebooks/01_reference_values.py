"""
Why a metric needs a reference value
====================================

An accuracy of 0.9 sounds good until you learn that always guessing the
majority class gives 0.95. This walk-through builds that situation and shows
how the normalized metrics make it obvious.
"""

# %%
import numpy as np

from evalkit import CostMatrix, TrialSet
from evalkit.metrics import (
    accuracy, bayes_decisions, expected_cost, normalized_expected_cost,
    normalized_psr, normalized_total_error,
)

# 950 negatives, 50 positives; the system misses every positive and also
# raises 50 false alarms.
labels = np.r_[np.zeros(950, int), np.ones(50, int)]
decisions = np.r_[np.zeros(900, int), np.ones(50, int), np.zeros(50, int)]
trials = TrialSet.build([f"s{i}" for i in range(1000)], labels, num_classes=2,
                        decisions=decisions)

acc = accuracy(trials)
print(f"accuracy {acc.value:.3f}, majority-class guess {acc.components['naive_accuracy']:.3f}")

# %%
# The normalized total error divides the error rate by the error of the best
# constant guess. Anything at or above 1 is no better than guessing.
nte = normalized_total_error(trials)
print(f"NTE {nte.value:.3f} (naive error {nte.components['naive_cost']:.3f})")

# %%
# With asymmetric costs (a miss costs ten times a false alarm) the best naive
# decision flips to always answering "positive".
cost = CostMatrix([[0, 1], [10, 0]])
ec = expected_cost(trials, cost)
nec = normalized_expected_cost(trials, cost)
print(f"EC {ec.value:.3f}, NEC {nec.value:.3f}, naive decision {nec.components['naive_decision']}")

# %%
# A system that outputs posteriors can be scored directly, and its decisions
# can be made optimally for any cost matrix after the fact. Here the scores
# are Gaussian per class and the posteriors are calibrated to the 5% prior.
rng = np.random.default_rng(0)
score = np.where(labels == 1, 1.5, -1.5) + rng.normal(0, 1.2, labels.size)
log_odds = 2 * 1.5 * score / 1.2**2 + np.log(50 / 950)
p1 = 1 / (1 + np.exp(-log_odds))
scored = TrialSet.build(trials.sample_ids, labels, num_classes=2,
                        posteriors=np.c_[1 - p1, p1])
print(f"normalized cross-entropy {normalized_psr(scored, 'cross_entropy').value:.3f}")

for c in (CostMatrix.zero_one(2), cost):
    bayes = scored.replace_decisions(bayes_decisions(scored.posteriors, c))
    print(f"costs {c.costs.tolist()}: {int(bayes.decisions.sum())} positive decisions, "
          f"NEC {normalized_expected_cost(bayes, c).value:.3f}")
