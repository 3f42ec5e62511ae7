"""Between-stage independence diagnostic.

The Pearson kernel is checked against textbook formulas computed inline
and against scipy. The across-replicates runs use the calibrated desk
configurations also exercised by the acceptance suite; the heavy
100-seed coverage meta-run lives there.
"""

import numpy as np
import pytest
from scipy import stats

from twostage import (
    IndexHasInteractionError,
    InsufficientPairsError,
    RidgeConfig,
    ScenarioConfig,
    TrialDataset,
    UsageError,
    independence_across_biomarkers,
    independence_across_replicates,
    pearson_test,
)

DIAG_RIDGE = RidgeConfig(n_lambdas=15, tol=1e-7)


def textbook_pearson(x, y):
    n = len(x)
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    r = np.sum(xc * yc) / np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    t = r * np.sqrt((n - 2) / (1 - r**2))
    p = 2 * stats.t.sf(abs(t), n - 2)
    half = stats.norm.ppf(0.975) / np.sqrt(n - 3)
    lo, hi = np.tanh(np.arctanh(r) - half), np.tanh(np.arctanh(r) + half)
    return r, p, lo, hi


class TestPearsonKernel:
    def test_matches_textbook_formulas(self, rng):
        x = rng.standard_normal(40)
        y = 0.3 * x + rng.standard_normal(40)
        r, p, lo, hi = pearson_test(x, y)
        er, ep, elo, ehi = textbook_pearson(x, y)
        assert r == pytest.approx(er, abs=1e-10)
        assert p == pytest.approx(ep, abs=1e-10)
        assert (lo, hi) == pytest.approx((elo, ehi), abs=1e-10)

    def test_matches_scipy(self, rng):
        x = rng.standard_normal(60)
        y = rng.standard_normal(60)
        r, p, lo, hi = pearson_test(x, y)
        res = stats.pearsonr(x, y)
        assert r == pytest.approx(res.statistic, abs=1e-12)
        assert p == pytest.approx(res.pvalue, abs=1e-10)
        ci = res.confidence_interval()
        assert (lo, hi) == pytest.approx((ci.low, ci.high), abs=1e-9)

    def test_self_correlation_is_one(self, rng):
        v = rng.standard_normal(25)
        r, p, lo, hi = pearson_test(v, v.copy())
        assert r == 1.0
        assert p < 1e-10
        assert lo <= 1.0 <= hi + 1e-12

    def test_three_pairs_give_degenerate_interval(self):
        r, p, lo, hi = pearson_test(
            np.array([0.0, 1.0, 3.0]), np.array([1.0, 0.5, 2.0])
        )
        assert lo == pytest.approx(-1.0) and hi == pytest.approx(1.0)
        assert lo <= r <= hi

    def test_rejects_degenerate_input(self):
        with pytest.raises(InsufficientPairsError):
            pearson_test(np.array([1.0, 2.0]), np.array([0.5, 0.1]))
        with pytest.raises(UsageError):
            pearson_test(np.ones(10), np.arange(10.0))


class TestAcrossBiomarkers:
    def test_minimal_panel(self):
        rng = np.random.default_rng(77)
        x = rng.standard_normal((60, 3))
        t = (rng.random(60) < 0.5).astype(float)
        y = 0.4 * t + rng.standard_normal(60)
        report = independence_across_biomarkers(
            TrialDataset(y, t, x), DIAG_RIDGE
        )
        assert report.mode == "across_biomarkers"
        assert report.n_pairs == 3
        assert report.ci_low <= report.estimate <= report.ci_high

    def test_needs_three_biomarkers(self):
        rng = np.random.default_rng(78)
        x = rng.standard_normal((40, 2))
        t = (rng.random(40) < 0.5).astype(float)
        with pytest.raises(InsufficientPairsError):
            independence_across_biomarkers(
                TrialDataset(rng.standard_normal(40), t, x), DIAG_RIDGE
            )

    def test_null_interval_usually_covers_zero(self):
        # Trial-shaped null data: moderate panel, randomized arms. A 95%
        # interval should cover zero in most of 40 draws.
        covered = 0
        for s in range(40):
            rng = np.random.default_rng(5000 + s)
            x = rng.standard_normal((150, 30))
            t = (rng.random(150) < 0.5).astype(float)
            y = 0.5 * t + x[:, 4] + rng.standard_normal(150)
            report = independence_across_biomarkers(
                TrialDataset(y, t, x), DIAG_RIDGE
            )
            covered += report.ci_low <= 0.0 <= report.ci_high
        assert covered >= 33

    def test_trial_shaped_panel_coverage(self):
        # 684 participants, 75 weakly dependent covariates, no interaction
        # anywhere: the interval should cover zero in at least 90 of 100
        # draws.
        covered = 0
        for s in range(100):
            rng = np.random.default_rng(9000 + s)
            x = rng.standard_normal((684, 75))
            t = (rng.random(684) < 0.5).astype(float)
            y = 0.5 * t + x[:, :5] @ np.array([0.8, -0.6, 0.5, -0.4, 0.3]) \
                + 2.0 * rng.standard_normal(684)
            report = independence_across_biomarkers(
                TrialDataset(y, t, x), DIAG_RIDGE
            )
            covered += report.ci_low <= 0.0 <= report.ci_high
        assert covered >= 90

    def test_deterministic(self):
        rng = np.random.default_rng(79)
        x = rng.standard_normal((80, 10))
        t = (rng.random(80) < 0.5).astype(float)
        data = TrialDataset(rng.standard_normal(80), t, x)
        a = independence_across_biomarkers(data, DIAG_RIDGE)
        b = independence_across_biomarkers(data, DIAG_RIDGE)
        assert a == b


POSITIVE = ScenarioConfig(n=400, m=10, cluster_size=5, rho=0.6,
                          effects=((0, 0.5, 1.0),), noise_sd=2.0, seed=0)


class TestAcrossReplicates:
    def test_null_biomarker_next_to_interacting_one(self):
        report = independence_across_replicates(POSITIVE, 1, 300, DIAG_RIDGE)
        assert report.n_pairs == 300
        # 3/sqrt(reps) bound on the null correlation, then the interval
        assert abs(report.estimate) < 3 / np.sqrt(300)
        assert report.ci_low <= 0.0 <= report.ci_high

    def test_interacting_index_is_refused(self):
        with pytest.raises(IndexHasInteractionError):
            independence_across_replicates(POSITIVE, 0, 10, DIAG_RIDGE)

    def test_index_bounds_checked(self):
        with pytest.raises(UsageError):
            independence_across_replicates(POSITIVE, 99, 10, DIAG_RIDGE)

    def test_dependent_treatment_breaks_independence(self):
        config = ScenarioConfig(
            n=400, m=10, cluster_size=5, rho=0.6,
            effects=((0, 0.5, 1.0),), noise_sd=0.5, seed=0,
            dependent_treatment_index=1, dependent_treatment_scale=1.5,
        )
        report = independence_across_replicates(config, 1, 300, DIAG_RIDGE)
        assert not (report.ci_low <= 0.0 <= report.ci_high)
        assert report.estimate > 0.15

    def test_deterministic(self):
        a = independence_across_replicates(POSITIVE, 1, 30, DIAG_RIDGE)
        b = independence_across_replicates(POSITIVE, 1, 30, DIAG_RIDGE)
        assert a == b
