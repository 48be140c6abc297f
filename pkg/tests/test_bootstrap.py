import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evalkit import (
    BootstrapConfig,
    BootstrapError,
    MetricError,
    Priors,
    SequenceTrialSet,
    TrialSet,
    bootstrap_ci,
    bootstrap_difference,
    percentile,
    pool_distributions,
    resample_indices,
)
from evalkit.bootstrap import (
    BootstrapDistribution,
    group_members,
    load_distribution,
    replicate_rng,
    save_distribution,
    verdict,
)
from evalkit.metrics import get_metric

from oracles import percentile_by_definition


def correctness_trials(correct, groups=None):
    """Binary trials whose decision is right exactly where ``correct`` is true."""
    correct = np.asarray(correct, dtype=bool)
    labels = np.arange(correct.size) % 2
    decisions = np.where(correct, labels, 1 - labels)
    return TrialSet.build([f"s{i}" for i in range(correct.size)], labels, num_classes=2,
                          decisions=decisions, groups=groups)


class TestPercentile:
    def test_midpoint(self):
        assert percentile([1, 2, 3, 4], 0.5) == 2.5

    def test_extremes(self):
        vals = [3.0, -1.0, 7.5, 2.0]
        assert percentile(vals, 0.0) == -1.0
        assert percentile(vals, 1.0) == 7.5

    def test_interpolation(self):
        assert percentile([10, 20], 0.25) == 12.5

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            percentile([], 0.5)

    @settings(max_examples=200)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0, 1))
    def test_matches_definition_and_numpy(self, values, q):
        got = percentile(values, q)
        assert got == pytest.approx(percentile_by_definition(values, q), rel=1e-12, abs=1e-9)
        assert got == pytest.approx(np.percentile(values, 100 * q), rel=1e-9, abs=1e-6)


class TestResample:
    def test_single_sample(self):
        assert resample_indices(1, replicate_rng(0, 0)).tolist() == [0]

    def test_group_draw_expands_members(self):
        class Fixed:
            def integers(self, low, high, size):
                return np.array([0, 0])

        members = group_members(["a", "a", "b"])
        assert resample_indices(3, Fixed(), members).tolist() == [0, 1, 0, 1]

    def test_deterministic(self):
        a = resample_indices(50, replicate_rng(123, 7))
        b = resample_indices(50, replicate_rng(123, 7))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, resample_indices(50, replicate_rng(123, 8)))

    def test_single_group_rejected(self):
        with pytest.raises(BootstrapError, match="two distinct groups"):
            resample_indices(3, replicate_rng(0, 0), group_members(["a", "a", "a"]))

    def test_grouped_size_is_group_count_draws(self):
        members = group_members(["a", "b", "b", "c", "c", "c"])
        for r in range(20):
            idx = resample_indices(6, replicate_rng(5, r), members)
            assert set(idx.tolist()) <= set(range(6))
            # every drawn group contributes all of its members
            for m in members:
                hits = np.isin(idx, m).sum()
                assert hits % len(m) == 0


class TestBootstrapCI:
    def test_constant_metric_zero_width(self):
        t = correctness_trials([True] * 30)
        dist, ci = bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(200, seed=1))
        assert (ci.low, ci.high, ci.point_estimate) == (1.0, 1.0, 1.0)
        assert dist.values.size == 200

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(0)
        t = correctness_trials(rng.random(100) < 0.8)
        cfg = BootstrapConfig(300, seed=99)
        d1, _ = bootstrap_ci(t, get_metric("accuracy"), cfg)
        d2, _ = bootstrap_ci(t, get_metric("accuracy"), cfg)
        d3, _ = bootstrap_ci(t, get_metric("accuracy"), cfg, workers=4)
        assert d1.values.tobytes() == d2.values.tobytes() == d3.values.tobytes()
        d4, _ = bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(300, seed=100))
        assert d4.values.tobytes() != d1.values.tobytes()

    def test_level_monotone(self):
        t = correctness_trials(np.random.default_rng(2).random(80) < 0.7)
        dist, _ = bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(500, seed=3))
        prev = None
        for level in (0.5, 0.8, 0.9, 0.95, 0.99):
            ci = dist.interval(level)
            if prev is not None:
                assert ci.low <= prev.low and ci.high >= prev.high
            prev = ci

    def test_rare_failures_dropped(self):
        # class 1 appears once in 60 samples: with fixed priors it vanishes from
        # about 37% of resamples, far beyond the 1% budget
        labels = [0] * 59 + [1]
        t = TrialSet.build([str(i) for i in range(60)], labels, decisions=labels)
        metric = get_metric("expected_cost", priors=Priors([0.5, 0.5]))
        with pytest.raises(BootstrapError, match=r"replicate \d+"):
            bootstrap_ci(t, metric, BootstrapConfig(200, seed=0))

    def test_failures_under_budget_are_counted(self):
        calls = {"n": 0}

        def flaky(trials):
            calls["n"] += 1
            if calls["n"] == 5:
                raise MetricError("undefined here")
            return get_metric("accuracy")(trials)

        t = correctness_trials([True, False] * 10)
        dist, ci = bootstrap_ci(t, flaky, BootstrapConfig(200, seed=0))
        assert dist.n_failed == 1 and dist.values.size == 199
        assert ci.n_replicates == 199

    def test_grouped_requires_groups(self):
        t = correctness_trials([True, False] * 5)
        with pytest.raises(BootstrapError, match="no groups"):
            bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(10, group_by=True))

    def test_grouped_reports_replicate_sizes(self):
        groups = ["a"] * 10 + ["b"] * 2 + ["c"] * 5
        t = correctness_trials(np.arange(17) % 3 > 0, groups=groups)
        dist, _ = bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(100, seed=4, group_by=True))
        assert dist.sample_counts.min() >= 6 and dist.sample_counts.max() <= 30
        assert len(set(dist.sample_counts.tolist())) > 1

    def test_sequences(self):
        seqs = SequenceTrialSet.build(["1", "2", "3"], [["a", "b"], ["c"], ["d", "e", "f"]],
                                      [["a", "b"], ["x"], ["d", "f"]])
        dist, ci = bootstrap_ci(seqs, get_metric("wer"), BootstrapConfig(200, seed=0))
        assert ci.point_estimate == pytest.approx(100 * 2 / 6)
        assert 0.0 <= ci.low <= ci.high <= 100.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BootstrapConfig(n_replicates=1)
        with pytest.raises(ValueError):
            BootstrapConfig(level=1.0)
        with pytest.raises(ValueError):
            BootstrapConfig(seed=-1)
        with pytest.raises(ValueError):
            BootstrapConfig(seed=2**64)


class TestDifference:
    def test_identical_systems(self):
        t = correctness_trials(np.random.default_rng(0).random(50) < 0.6)
        dist, ci = bootstrap_difference(t, t, get_metric("accuracy"), BootstrapConfig(200, seed=1))
        assert np.all(dist.values == 0.0)
        assert (ci.low, ci.high) == (0.0, 0.0)
        assert verdict(ci, True) == "not significant"

    def test_separated_systems(self):
        a = correctness_trials([True] * 40)
        b = correctness_trials([False] * 40)
        dist, ci = bootstrap_difference(a, b, get_metric("accuracy"), BootstrapConfig(200, seed=1))
        assert np.all(dist.values == 1.0)
        assert verdict(ci, True) == "A better"
        _, ci_err = bootstrap_difference(a, b, get_metric("error_rate"), BootstrapConfig(200, seed=1))
        assert ci_err.high < 0 and verdict(ci_err, False) == "A better"

    def test_swapping_negates(self):
        rng = np.random.default_rng(5)
        a = correctness_trials(rng.random(60) < 0.7)
        b = correctness_trials(rng.random(60) < 0.6)
        cfg = BootstrapConfig(300, seed=8)
        dab, ciab = bootstrap_difference(a, b, get_metric("accuracy"), cfg)
        dba, ciba = bootstrap_difference(b, a, get_metric("accuracy"), cfg)
        assert np.array_equal(dab.values, -dba.values)
        # interpolation positions q(n-1) and (1-q)(n-1) agree up to rounding
        assert ciab.low == pytest.approx(-ciba.high, abs=1e-12)
        assert ciab.high == pytest.approx(-ciba.low, abs=1e-12)

    def test_disjoint_halves_not_significant(self):
        # A errs on one random half's 10%, B on the other's: symmetric systems
        rng = np.random.default_rng(11)
        hits = 0
        for rep in range(20):
            n = 200
            perm = rng.permutation(n)
            a_wrong = np.zeros(n, bool)
            b_wrong = np.zeros(n, bool)
            a_wrong[perm[:20]] = True
            b_wrong[perm[100:120]] = True
            a, b = correctness_trials(~a_wrong), correctness_trials(~b_wrong)
            _, ci = bootstrap_difference(a, b, get_metric("accuracy"), BootstrapConfig(500, seed=rep))
            hits += ci.low <= 0.0 <= ci.high
        assert hits == 20

    def test_id_mismatch(self):
        a = correctness_trials([True, False])
        b = TrialSet.build(["x", "y"], [0, 1], decisions=[0, 1])
        with pytest.raises(BootstrapError, match="identical sample_ids"):
            bootstrap_difference(a, b, get_metric("accuracy"))


class TestPool:
    def dist(self, values, point=0.0, metric="accuracy", level=0.95):
        return BootstrapDistribution(metric, values, point, BootstrapConfig(len(values), level))

    def test_self_pooling_is_idempotent(self):
        # with 1000 replicates at 95% the interpolation positions of the doubled
        # list land on the same neighbours with the same weights
        d = self.dist(np.random.default_rng(0).random(1000), point=0.4)
        ci, pooled = d.interval(), pool_distributions([d, d])
        assert (pooled.low, pooled.high) == pytest.approx((ci.low, ci.high), abs=1e-12)
        assert pooled.point_estimate == 0.4

    def test_self_pooling_other_sizes_stays_between_neighbours(self):
        v = np.random.default_rng(1).random(101)
        d = self.dist(v)
        ci, pooled = d.interval(), pool_distributions([d, d])
        s = np.sort(v)
        gap = np.max(np.diff(s))
        assert abs(pooled.low - ci.low) <= gap and abs(pooled.high - ci.high) <= gap

    def test_disjoint_support(self):
        ci = pool_distributions([self.dist([0.1] * 1000, 0.1), self.dist([0.3] * 1000, 0.3)])
        assert (ci.low, ci.high) == (0.1, 0.3)
        assert ci.point_estimate == pytest.approx(0.2)

    def test_single_matches_bootstrap_ci(self):
        t = correctness_trials(np.random.default_rng(3).random(70) < 0.8)
        dist, ci = bootstrap_ci(t, get_metric("accuracy"), BootstrapConfig(400, seed=2))
        pooled = pool_distributions([dist])
        assert (pooled.low, pooled.high, pooled.point_estimate) == (ci.low, ci.high, ci.point_estimate)

    def test_mismatch(self):
        with pytest.raises(ValueError, match="metrics"):
            pool_distributions([self.dist([1, 2]), self.dist([1, 2], metric="nte")])
        with pytest.raises(ValueError, match="levels"):
            pool_distributions([self.dist([1, 2]), self.dist([1, 2], level=0.9)])


def test_distribution_file_roundtrip(tmp_path):
    t = correctness_trials(np.random.default_rng(9).random(40) < 0.75)
    dist, _ = bootstrap_ci(t, get_metric("nte"), BootstrapConfig(50, 0.9, seed=2**63 + 5))
    path = tmp_path / "d.json"
    save_distribution(dist, path)
    again = load_distribution(path)
    assert np.array_equal(again.values, dist.values)
    assert again.config == dist.config and again.metric == "nte"
    assert again.point_estimate == dist.point_estimate
    assert again.metric_params == {"priors": "empirical"}
