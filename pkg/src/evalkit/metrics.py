"""Performance metrics for decisions, posteriors, sequences and regressors.

Classification metrics are built on the expected cost: a prior-weighted sum
of decision costs over within-class decision rates. Every metric that has a
naive, input-blind reference system reports that reference alongside its
value so results can be read against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import CostMatrix, Priors, SequenceTrialSet, TrialSet, empirical_priors

LOG_FLOOR = 1e-300


class MetricError(ValueError):
    """The metric is undefined on the given data."""


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    components: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise MetricError(f"{self.name} is not finite ({self.value!r})")

    def __float__(self) -> float:
        return float(self.value)


def confusion(labels: Sequence[int], decisions: Sequence[int], num_classes: int) -> np.ndarray:
    """K x K counts; entry ``[i, j]`` counts true class ``i`` decided as ``j``."""
    lab = np.asarray(labels, dtype=np.int64)
    dec = np.asarray(decisions, dtype=np.int64)
    if lab.shape != dec.shape or lab.ndim != 1:
        raise MetricError(f"labels and decisions differ in length ({lab.size} vs {dec.size})")
    k = int(num_classes)
    for name, arr in (("label", lab), ("decision", dec)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise MetricError(f"{name} index out of range for K={k}")
    return np.bincount(lab * k + dec, minlength=k * k).reshape(k, k)


def _resolve(trials: TrialSet, cost: CostMatrix | None, priors: Priors | None):
    k = trials.num_classes
    if cost is None:
        cost = CostMatrix.zero_one(k)
    if cost.num_classes != k:
        raise MetricError(f"cost matrix is {cost.num_classes}x{cost.num_classes} but K={k}")
    if priors is None:
        priors = empirical_priors(trials)
    if len(priors) != k:
        raise MetricError(f"priors have {len(priors)} entries but K={k}")
    return cost, priors


def _require(trials: TrialSet, attr: str) -> np.ndarray:
    value = getattr(trials, attr)
    if value is None:
        raise MetricError(f"trials carry no {attr}")
    return value


def _decision_rates(trials: TrialSet, priors: Priors) -> np.ndarray:
    counts = confusion(trials.labels, _require(trials, "decisions"), trials.num_classes)
    totals = counts.sum(axis=1)
    missing = np.flatnonzero((totals == 0) & (priors.p > 0))
    if missing.size:
        raise MetricError(
            f"class {int(missing[0])} has prior {priors.p[missing[0]]:g} but no test samples"
        )
    rates = np.zeros(counts.shape, dtype=float)
    seen = totals > 0
    rates[seen] = counts[seen] / totals[seen, None]
    return rates


def expected_cost(
    trials: TrialSet, cost: CostMatrix | None = None, priors: Priors | None = None
) -> MetricResult:
    """Prior-weighted cost of the decisions in ``trials``.

    Defaults are 0/1 costs and empirical priors, which give the total error
    rate. Classes with zero prior and no samples contribute nothing.
    """
    cost, priors = _resolve(trials, cost, priors)
    rates = _decision_rates(trials, priors)
    per_class = (cost.costs * rates).sum(axis=1)
    value = float(priors.p @ per_class)
    return MetricResult("expected_cost", value, {"rates": rates.tolist(), "priors": priors.p.tolist()})


def naive_expected_cost(cost: CostMatrix, priors: Priors) -> tuple[float, int]:
    """Cost of the best input-blind system, and the fixed decision it makes."""
    per_decision = priors.p @ cost.costs
    best = int(np.argmin(per_decision))
    return float(per_decision[best]), best


def normalized_expected_cost(
    trials: TrialSet, cost: CostMatrix | None = None, priors: Priors | None = None
) -> MetricResult:
    cost, priors = _resolve(trials, cost, priors)
    ec = expected_cost(trials, cost, priors)
    naive, fixed = naive_expected_cost(cost, priors)
    if naive <= 0:
        raise MetricError("naive reference cost is zero; normalized cost undefined")
    return MetricResult(
        "normalized_expected_cost",
        ec.value / naive,
        {"expected_cost": ec.value, "naive_cost": naive, "naive_decision": fixed,
         "priors": priors.p.tolist()},
    )


def normalized_total_error(trials: TrialSet, priors: Priors | None = None) -> MetricResult:
    """Error rate divided by that of always choosing the most likely class."""
    cost, priors = _resolve(trials, None, priors)
    if priors.p.max() >= 1.0:
        raise MetricError("one class has prior 1; naive error is zero")
    res = normalized_expected_cost(trials, cost, priors)
    return MetricResult("normalized_total_error", res.value, dict(res.components))


def accuracy(trials: TrialSet) -> MetricResult:
    """Fraction of correct decisions, with the majority-class reference."""
    dec = _require(trials, "decisions")
    acc = float(np.mean(dec == trials.labels))
    majority = float(empirical_priors(trials).p.max())
    return MetricResult("accuracy", acc, {"naive_accuracy": majority})


def balanced_error_rate(trials: TrialSet) -> MetricResult:
    k = trials.num_classes
    counts = confusion(trials.labels, _require(trials, "decisions"), k)
    totals = counts.sum(axis=1)
    if np.any(totals == 0):
        raise MetricError(f"class {int(np.flatnonzero(totals == 0)[0])} absent from labels")
    recalls = np.diag(counts) / totals
    return MetricResult(
        "balanced_error_rate", float(np.mean(1.0 - recalls)), {"recalls": recalls.tolist()}
    )


def bayes_decisions(posteriors: Any, cost: CostMatrix | Any) -> np.ndarray:
    """Minimum-risk decision per row; ties go to the lowest class index."""
    post = np.asarray(posteriors, dtype=float)
    c = cost.costs if isinstance(cost, CostMatrix) else CostMatrix(cost).costs
    if post.ndim != 2 or post.shape[1] != c.shape[0]:
        raise MetricError(f"posteriors of shape {post.shape} do not match a {c.shape[0]}-class cost")
    risks = post @ c
    return np.argmin(risks, axis=1)


def _log_loss(post: np.ndarray, labels: np.ndarray) -> tuple[float, int]:
    p_true = post[np.arange(len(labels)), labels]
    n_clamped = int(np.count_nonzero(p_true < LOG_FLOOR))
    return float(-np.mean(np.log(np.maximum(p_true, LOG_FLOOR)))), n_clamped


def _brier(post: np.ndarray, labels: np.ndarray) -> float:
    onehot = np.zeros_like(post)
    onehot[np.arange(len(labels)), labels] = 1.0
    return float(np.mean(np.sum((post - onehot) ** 2, axis=1)))


def cross_entropy(trials: TrialSet) -> MetricResult:
    """Mean negative log posterior of the true class, in nats."""
    value, n_clamped = _log_loss(_require(trials, "posteriors"), trials.labels)
    comps: dict[str, Any] = {}
    if n_clamped:
        comps = {"clamp_floor": LOG_FLOOR, "n_clamped": n_clamped}
    return MetricResult("cross_entropy", value, comps)


def brier_score(trials: TrialSet) -> MetricResult:
    return MetricResult("brier_score", _brier(_require(trials, "posteriors"), trials.labels))


def normalized_psr(
    trials: TrialSet, psr: str = "cross_entropy", priors: Priors | None = None
) -> MetricResult:
    """Proper scoring rule relative to a system that always outputs the priors.

    The reference is evaluated on the same labels, so with empirical priors
    the cross-entropy reference equals the entropy of the priors.
    """
    post = _require(trials, "posteriors")
    _, priors = _resolve(trials, None, priors)
    naive_post = np.broadcast_to(priors.p, post.shape)
    if psr == "cross_entropy":
        system = cross_entropy(trials)
        naive, _ = _log_loss(naive_post, trials.labels)
        name = "normalized_cross_entropy"
    elif psr == "brier":
        system = brier_score(trials)
        naive = _brier(np.array(naive_post), trials.labels)
        name = "normalized_brier_score"
    else:
        raise ValueError(f"unknown scoring rule {psr!r}")
    if naive <= 0:
        raise MetricError("naive reference score is zero; normalized score undefined")
    comps = {psr: system.value, "naive_score": naive, **system.components}
    return MetricResult(name, system.value / naive, comps)


# --------------------------------------------------------------------------
# sequences

@dataclass(frozen=True)
class Alignment:
    """Minimum edit alignment. ``pairs`` holds (ref, hyp) tokens, ``None`` for gaps."""

    insertions: int
    deletions: int
    substitutions: int
    hits: int
    pairs: tuple[tuple[str | None, str | None], ...]

    @property
    def distance(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def accuracy(self) -> float:
        """Share of reference units recovered; blind to insertions."""
        n_ref = self.hits + self.substitutions + self.deletions
        return self.hits / n_ref if n_ref else float("nan")


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Levenshtein alignment with unit costs.

    Backtrace prefers match/substitution, then deletion, then insertion, so
    the (I, D, S) split is reproducible when several optimal paths exist.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    dist = [list(range(m + 1))]
    for i in range(1, n + 1):
        r, prev = ref[i - 1], dist[i - 1]
        row = [i] + [0] * m
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
        dist.append(row)

    pairs = []
    ins = dele = sub = hits = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                hits += 1
            else:
                sub += 1
            pairs.append((ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dele += 1
            pairs.append((ref[i - 1], None))
            i -= 1
        else:
            ins += 1
            pairs.append((None, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    return Alignment(ins, dele, sub, hits, tuple(pairs))


def error_rate_sequences(trials: SequenceTrialSet) -> MetricResult:
    """Pooled (I + D + S) / reference units, in percent (WER, CER, PER)."""
    ins = dele = sub = hits = n_ref = 0
    for ref, hyp in zip(trials.references, trials.hypotheses):
        a = align(ref, hyp)
        ins += a.insertions
        dele += a.deletions
        sub += a.substitutions
        hits += a.hits
        n_ref += len(ref)
    if n_ref == 0:
        raise MetricError("references contain no units; error rate undefined")
    return MetricResult(
        "error_rate",
        100.0 * (ins + dele + sub) / n_ref,
        {"insertions": ins, "deletions": dele, "substitutions": sub,
         "hits": hits, "reference_units": n_ref},
    )


# --------------------------------------------------------------------------
# regression

def regression_metrics(
    trials: TrialSet, targets: Sequence[float] | None = None, kind: str = "mae"
) -> MetricResult:
    """MAE or MSE of ``trials.predictions``.

    ``targets`` defaults to the targets stored on the trial set. The naive
    reference is the best constant predictor: the median for MAE, the mean
    for MSE.
    """
    pred = _require(trials, "predictions")
    targ = trials.targets if targets is None else np.asarray(targets, dtype=float)
    if targ is None:
        raise MetricError("no regression targets")
    if targ.shape != pred.shape:
        raise MetricError(f"{pred.size} predictions vs {targ.size} targets")
    err = pred - targ
    if kind == "mae":
        value = float(np.mean(np.abs(err)))
        naive = float(np.mean(np.abs(targ - np.median(targ))))
    elif kind == "mse":
        value = float(np.mean(err ** 2))
        naive = float(np.mean((targ - targ.mean()) ** 2))
    else:
        raise ValueError(f"unknown regression metric {kind!r}")
    return MetricResult(kind, value, {"naive_error": naive})


# --------------------------------------------------------------------------
# named metrics for resampling and reporting

@dataclass(frozen=True, eq=False)
class Metric:
    """A metric bound to its parameters: ``metric(trials) -> MetricResult``.

    ``priors=None`` means empirical priors of whatever set is evaluated,
    which is what a bootstrap replicate should see.
    """

    name: str
    fn: Callable[..., MetricResult]
    params: dict[str, Any] = field(default_factory=dict)
    higher_is_better: bool = False
    normalized: str | None = None

    def __call__(self, trials) -> MetricResult:
        return self.fn(trials)

    def value(self, trials) -> float:
        return self.fn(trials).value


def _priors_param(priors: Priors | None):
    return "empirical" if priors is None else priors.p.tolist()


def get_metric(
    name: str,
    *,
    cost: CostMatrix | None = None,
    priors: Priors | None = None,
    psr: str = "cross_entropy",
) -> Metric:
    """Look up a metric by name and bind its parameters.

    Names: accuracy, error_rate, expected_cost, nec, nte, balanced_error_rate,
    cross_entropy, brier, nce, normalized_brier, mae, mse, wer. ``normalized``
    on the returned object names the normalized companion, if any.
    """
    if priors is not None and priors.source != "user-specified":
        priors = None
    pp = {"priors": _priors_param(priors)}
    costp = {"costs": None if cost is None else cost.costs.tolist()}

    if name == "accuracy":
        return Metric(name, accuracy, {}, higher_is_better=True, normalized="nte")
    if name == "error_rate":
        return Metric(name, lambda t: _renamed(expected_cost(t), name), {}, normalized="nte")
    if name == "expected_cost":
        return Metric(name, lambda t: expected_cost(t, cost, priors), {**costp, **pp}, normalized="nec")
    if name == "nec":
        return Metric(name, lambda t: normalized_expected_cost(t, cost, priors), {**costp, **pp})
    if name == "nte":
        return Metric(name, lambda t: normalized_total_error(t, priors), pp)
    if name == "balanced_error_rate":
        return Metric(name, balanced_error_rate, {})
    if name == "cross_entropy":
        return Metric(name, cross_entropy, {}, normalized="nce")
    if name == "brier":
        return Metric(name, brier_score, {}, normalized="normalized_brier")
    if name == "nce":
        return Metric(name, lambda t: normalized_psr(t, "cross_entropy", priors), pp)
    if name == "normalized_brier":
        return Metric(name, lambda t: normalized_psr(t, "brier", priors), pp)
    if name == "bayes_expected_cost":
        # decisions derived from posteriors, then scored
        def run(t):
            c = cost or CostMatrix.zero_one(t.num_classes)
            return _renamed(expected_cost(t.replace_decisions(bayes_decisions(t.posteriors, c)), c, priors), name)
        return Metric(name, run, {**costp, **pp}, normalized="bayes_nec")
    if name == "bayes_nec":
        def run_n(t):
            c = cost or CostMatrix.zero_one(t.num_classes)
            return _renamed(normalized_expected_cost(
                t.replace_decisions(bayes_decisions(t.posteriors, c)), c, priors), name)
        return Metric(name, run_n, {**costp, **pp})
    if name in ("mae", "mse"):
        return Metric(name, lambda t: regression_metrics(t, kind=name), {})
    if name in ("wer", "cer", "per"):
        return Metric(name, lambda t: _renamed(error_rate_sequences(t), name), {})
    raise ValueError(f"unknown metric {name!r}")


def _renamed(res: MetricResult, name: str) -> MetricResult:
    return MetricResult(name, res.value, res.components)


METRIC_NAMES = (
    "accuracy", "error_rate", "expected_cost", "nec", "nte", "balanced_error_rate",
    "bayes_expected_cost", "bayes_nec", "cross_entropy", "brier", "nce",
    "normalized_brier", "mae", "mse", "wer", "cer", "per",
)
SEQUENCE_METRICS = ("wer", "cer", "per")
