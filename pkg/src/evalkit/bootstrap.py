"""Percentile bootstrap for evaluation metrics.

Replicate ``r`` draws its indices from a Philox stream keyed by the master
seed with ``r`` in the counter, so every replicate is reproducible on its own
and the result does not depend on how replicates are scheduled across
workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .metrics import Metric, MetricError

MAX_FAILED_FRACTION = 0.01
_SEED_MAX = 2**64 - 1


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 1000
    level: float = 0.95
    seed: int = 0
    group_by: bool = False

    def __post_init__(self):
        if int(self.n_replicates) != self.n_replicates or self.n_replicates < 2:
            raise ValueError(f"n_replicates must be an integer >= 2, got {self.n_replicates!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed <= _SEED_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float
    point_estimate: float
    n_replicates: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"interval bounds out of order: {self.low} > {self.high}")

    @property
    def width(self) -> float:
        return self.high - self.low

    def excludes(self, value: float = 0.0) -> bool:
        return value < self.low or value > self.high


@dataclass(frozen=True, eq=False)
class BootstrapDistribution:
    """Replicate values of one metric plus the settings that produced them.

    ``values`` holds the successful replicates in replicate order; failed
    replicates (metric undefined on that resample) are counted in
    ``n_failed``. ``sample_counts`` is the size of every successful replicate,
    which varies under group resampling.
    """

    metric: str
    values: np.ndarray
    point_estimate: float
    config: BootstrapConfig
    n_failed: int = 0
    sample_counts: np.ndarray | None = None
    metric_params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("a bootstrap distribution needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("bootstrap values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def level(self) -> float:
        return self.config.level

    def interval(self, level: float | None = None) -> ConfidenceInterval:
        return _interval(self.values, self.level if level is None else level,
                         self.point_estimate)

    def summary(self) -> dict[str, float]:
        v = self.values
        out = {"n": int(v.size), "n_failed": self.n_failed, "mean": float(v.mean()),
               "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
               "min": float(v.min()), "max": float(v.max())}
        if self.sample_counts is not None:
            out["replicate_size_min"] = int(self.sample_counts.min())
            out["replicate_size_max"] = int(self.sample_counts.max())
        return out


def percentile(values: Sequence[float], q: float) -> float:
    """Linearly interpolated ``q``-quantile, ``q`` in [0, 1].

    Position ``h = q * (n - 1)`` in the ascending values; result interpolates
    between the neighbours of ``h``. ``values`` need not be pre-sorted.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    h = q * (v.size - 1)
    lo = math.floor(h)
    if lo + 1 >= v.size:
        return float(v[-1])
    return float(v[lo] + (h - lo) * (v[lo + 1] - v[lo]))


def _interval(values: np.ndarray, level: float, point: float) -> ConfidenceInterval:
    tail = (1.0 - level) / 2.0
    return ConfidenceInterval(
        low=percentile(values, tail),
        high=percentile(values, 1.0 - tail),
        level=level,
        point_estimate=point,
        n_replicates=int(np.size(values)),
    )


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for one replicate (counter-based)."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, replicate]))


def group_members(groups: Sequence[str]) -> list[np.ndarray]:
    """Sample indices of each distinct group, in order of first appearance."""
    order: dict[str, list[int]] = {}
    for i, g in enumerate(groups):
        order.setdefault(str(g), []).append(i)
    return [np.asarray(ix, dtype=np.intp) for ix in order.values()]


def resample_indices(
    n: int,
    rng: np.random.Generator,
    groups: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Indices of one bootstrap replicate.

    Without ``groups``, ``n`` i.i.d. uniform draws from ``range(n)``. With
    ``groups`` (a list of member-index arrays, see :func:`group_members`),
    draws as many groups as there are, with replacement, and returns all
    members of each drawn group in draw order.
    """
    if n < 1:
        raise ValueError("cannot resample an empty set")
    if groups is None:
        return rng.integers(0, n, size=n)
    if len(groups) < 2:
        raise BootstrapError("group resampling needs at least two distinct groups")
    picks = rng.integers(0, len(groups), size=len(groups))
    return np.concatenate([groups[g] for g in picks])


def _as_metric(metric) -> Metric:
    if isinstance(metric, Metric):
        return metric
    if callable(metric):
        return Metric(getattr(metric, "__name__", "metric"), metric)
    raise TypeError(f"not a metric: {metric!r}")


def _run_replicates(
    n: int,
    groups,
    config: BootstrapConfig,
    evaluate: Callable[[np.ndarray], float],
    workers: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    if config.group_by and groups is None:
        raise BootstrapError("group_by requested but trials carry no groups")
    members = group_members(groups) if config.group_by else None
    if members is not None and len(members) < 2:
        raise BootstrapError("group resampling needs at least two distinct groups")

    def one(r: int):
        idx = resample_indices(n, replicate_rng(config.seed, r), members)
        try:
            return evaluate(idx), idx.size, None
        except MetricError as exc:
            return None, idx.size, exc

    reps = range(config.n_replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, reps, chunksize=max(1, config.n_replicates // (4 * workers))))
    else:
        results = [one(r) for r in reps]

    failed = [(r, exc) for r, (_, _, exc) in enumerate(results) if exc is not None]
    if len(failed) > MAX_FAILED_FRACTION * config.n_replicates:
        r, exc = failed[0]
        raise BootstrapError(
            f"metric failed on {len(failed)} of {config.n_replicates} replicates "
            f"(first: replicate {r}: {exc})"
        )
    ok = [(v, s) for v, s, exc in results if exc is None]
    values = np.array([v for v, _ in ok], dtype=float)
    sizes = np.array([s for _, s in ok], dtype=np.int64)
    return values, sizes, len(failed)


def bootstrap_ci(
    trials,
    metric,
    config: BootstrapConfig | None = None,
    *,
    workers: int = 1,
) -> tuple[BootstrapDistribution, ConfidenceInterval]:
    """Bootstrap distribution and percentile interval of ``metric`` on ``trials``.

    ``trials`` is any trial container with ``take`` and ``groups``
    (:class:`TrialSet` or :class:`SequenceTrialSet`). Replicates whose metric
    is undefined are dropped; more than 1% failures raise
    :class:`BootstrapError`.
    """
    config = config or BootstrapConfig()
    metric = _as_metric(metric)
    point = metric.value(trials)
    values, sizes, n_failed = _run_replicates(
        len(trials), trials.groups, config,
        lambda idx: metric.value(trials.take(idx)), workers,
    )
    dist = BootstrapDistribution(metric.name, values, point, config, n_failed, sizes,
                                 dict(metric.params))
    return dist, dist.interval()


def bootstrap_difference(
    trials_a,
    trials_b,
    metric,
    config: BootstrapConfig | None = None,
    *,
    workers: int = 1,
) -> tuple[BootstrapDistribution, ConfidenceInterval]:
    """Paired bootstrap of ``metric(a) - metric(b)``.

    Both systems must be scored on the same samples in the same order; each
    replicate applies one index draw to both. Groups come from ``trials_a``.
    """
    config = config or BootstrapConfig()
    metric = _as_metric(metric)
    if len(trials_a) != len(trials_b) or not np.array_equal(trials_a.sample_ids, trials_b.sample_ids):
        raise BootstrapError("systems A and B must cover identical sample_ids in identical order")
    if (trials_a.groups is not None and trials_b.groups is not None
            and not np.array_equal(trials_a.groups, trials_b.groups)):
        raise BootstrapError("systems A and B disagree on sample groups")
    groups = trials_a.groups if trials_a.groups is not None else trials_b.groups

    def diff(t_a, t_b):
        return metric.value(t_a) - metric.value(t_b)

    point = diff(trials_a, trials_b)
    values, sizes, n_failed = _run_replicates(
        len(trials_a), groups, config,
        lambda idx: diff(trials_a.take(idx), trials_b.take(idx)), workers,
    )
    dist = BootstrapDistribution(f"{metric.name}_difference", values, point, config,
                                 n_failed, sizes, dict(metric.params))
    return dist, dist.interval()


def verdict(ci: ConfidenceInterval, higher_is_better: bool) -> str:
    """'A better', 'B better' or 'not significant' for a difference interval (A - B)."""
    if ci.low > 0:
        return "A better" if higher_is_better else "B better"
    if ci.high < 0:
        return "B better" if higher_is_better else "A better"
    return "not significant"


def pool_distributions(distributions: Sequence[BootstrapDistribution]) -> ConfidenceInterval:
    """One interval from the replicates of several runs (e.g. training seeds).

    The point estimate is the mean of the member point estimates.
    """
    if not distributions:
        raise ValueError("nothing to pool")
    names = {d.metric for d in distributions}
    levels = {d.level for d in distributions}
    if len(names) > 1:
        raise ValueError(f"cannot pool different metrics: {sorted(names)}")
    if len(levels) > 1:
        raise ValueError(f"cannot pool different levels: {sorted(levels)}")
    values = np.concatenate([d.values for d in distributions])
    point = float(np.mean([d.point_estimate for d in distributions]))
    return _interval(values, levels.pop(), point)


# --------------------------------------------------------------------------
# persistence

def distribution_to_dict(dist: BootstrapDistribution) -> dict[str, Any]:
    return {
        "metric": dist.metric,
        "level": dist.level,
        "point": dist.point_estimate,
        "values": [float(v) for v in dist.values],
        "config": {**dist.config.to_dict(), "metric_params": dist.metric_params,
                   "n_failed": dist.n_failed},
    }


def distribution_from_dict(obj: dict[str, Any]) -> BootstrapDistribution:
    try:
        cfg = dict(obj.get("config", {}))
        params = cfg.pop("metric_params", {})
        n_failed = int(cfg.pop("n_failed", 0))
        values = obj["values"]
        cfg.setdefault("n_replicates", max(2, len(values) + n_failed))
        cfg["level"] = float(obj["level"])
        config = BootstrapConfig(**cfg)
        return BootstrapDistribution(str(obj["metric"]), values, float(obj["point"]),
                                     config, n_failed, None, params)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed distribution record: {exc}") from None


def save_distribution(dist: BootstrapDistribution, path: str | Path) -> None:
    text = json.dumps(distribution_to_dict(dist), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_distribution(path: str | Path) -> BootstrapDistribution:
    with open(path, encoding="utf-8") as fh:
        return distribution_from_dict(json.load(fh))
