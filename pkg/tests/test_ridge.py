"""Penalized screening fit against its closed-form oracle.

For the linear family the stated objective has the exact solution
``(X'X/n + 2*lambda*D)^{-1} X'(y - ybar)/n`` on a centered design, which
is the oracle used throughout. Optimality is certified by comparing
objective values, not just coefficients.
"""

import numpy as np
import pytest

from twostage import (
    RidgeConfig,
    RidgeFit,
    TrialDataset,
    UsageError,
    cross_validate,
    fit_linear,
    fit_logistic,
    lambda_grid,
    rank_biomarkers,
    ridge_objective,
    ridge_solve,
    standardize,
)
from conftest import make_dataset


def closed_form_ridge(design, response, lam, penalized=None):
    n, p = design.shape
    d = np.ones(p) if penalized is None else np.asarray(penalized, float)
    gram = design.T @ design / n + 2.0 * lam * np.diag(d)
    target = design.T @ (response - response.mean()) / n
    return np.linalg.solve(gram, target)


class TestStandardize:
    def test_basic_column(self):
        out, scaling = standardize(np.array([[1.0], [2.0], [3.0]]))
        assert out.mean() == pytest.approx(0.0, abs=1e-15)
        assert out.std() == pytest.approx(1.0, abs=1e-15)
        assert not scaling.constant[0]

    def test_constant_column_zeroed_and_flagged(self):
        out, scaling = standardize(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
        assert np.all(out[:, 0] == 0.0)
        assert scaling.constant[0] and not scaling.constant[1]

    def test_idempotent_on_standardized_input(self, rng):
        first, _ = standardize(rng.standard_normal((40, 3)))
        second, _ = standardize(first)
        assert second == pytest.approx(first, abs=1e-12)

    def test_apply_reproduces_training_transform(self, rng):
        raw = rng.standard_normal((30, 4))
        out, scaling = standardize(raw)
        assert scaling.apply(raw) == pytest.approx(out, abs=1e-14)


class TestRidgeSolve:
    def test_zero_lambda_matches_least_squares(self, rng):
        design, _ = standardize(rng.standard_normal((60, 4)))
        response = rng.standard_normal(60)
        sol = ridge_solve(design, response, 0.0)
        ols = fit_linear(np.column_stack([np.ones(60), design]), response)
        assert sol.coefs == pytest.approx(ols.estimates[1:], abs=1e-6)

    def test_matches_closed_form_small_instance(self):
        design, _ = standardize(np.array([[1.0, 2.0], [2.0, 0.5], [3.0, 1.0]]))
        response = np.array([1.0, -0.5, 2.0])
        sol = ridge_solve(design, response, 0.5)
        assert sol.converged
        assert sol.coefs == pytest.approx(
            closed_form_ridge(design, response, 0.5), abs=1e-8
        )

    def test_huge_lambda_crushes_coefficients(self, rng):
        design, _ = standardize(rng.standard_normal((50, 6)))
        response = rng.standard_normal(50) * 3
        sol = ridge_solve(design, response, 1e6)
        assert np.all(np.abs(sol.coefs) < 1e-4)

    def test_unpenalized_column_respected(self, rng):
        design, _ = standardize(rng.standard_normal((80, 5)))
        response = rng.standard_normal(80)
        mask = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
        sol = ridge_solve(design, response, 2.0, penalized=mask)
        assert sol.coefs == pytest.approx(
            closed_form_ridge(design, response, 2.0, mask), abs=1e-8
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_objective_certifies_optimality(self, seed):
        rng = np.random.default_rng(seed)
        design, _ = standardize(rng.standard_normal((40, 6)))
        response = rng.standard_normal(40)
        lam = 10.0 ** rng.uniform(-3, 1)
        sol = ridge_solve(design, response, lam,
                          config=RidgeConfig(tol=1e-12, max_iter=5000))
        ours = ridge_objective(design, response, sol.coefs, lam)
        oracle = ridge_objective(
            design, response, closed_form_ridge(design, response, lam), lam
        )
        assert ours <= oracle + 1e-10

    @pytest.mark.parametrize("seed", range(4))
    def test_monotone_shrinkage(self, seed):
        rng = np.random.default_rng(100 + seed)
        design, _ = standardize(rng.standard_normal((50, 8)))
        response = rng.standard_normal(50)
        lams = np.sort(10.0 ** rng.uniform(-3, 2, size=6))
        norms = [
            np.linalg.norm(ridge_solve(design, response, lam).coefs)
            for lam in lams
        ]
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 1e-8

    def test_warm_start_changes_nothing_at_convergence(self, rng):
        design, _ = standardize(rng.standard_normal((40, 5)))
        response = rng.standard_normal(40)
        cold = ridge_solve(design, response, 0.3)
        warm = ridge_solve(design, response, 0.3, warm_start=cold.coefs)
        assert warm.coefs == pytest.approx(cold.coefs, abs=1e-9)
        assert warm.n_sweeps <= cold.n_sweeps

    def test_not_converged_flag(self, rng):
        design, _ = standardize(rng.standard_normal((40, 5)))
        response = rng.standard_normal(40)
        sol = ridge_solve(design, response, 1e-3,
                          config=RidgeConfig(max_iter=2, tol=1e-14))
        assert not sol.converged


class TestLambdaGrid:
    def test_two_point_grid_hits_endpoints(self, rng):
        design, _ = standardize(rng.standard_normal((30, 3)))
        response = rng.standard_normal(30)
        cfg = RidgeConfig(n_lambdas=2, lambda_min_ratio=0.01)
        grid = lambda_grid(design, response, cfg)
        lam_max = np.max(np.abs(design.T @ (response - response.mean()))) / 30
        assert grid == pytest.approx([lam_max, 0.01 * lam_max])

    def test_strictly_descending(self, rng):
        design, _ = standardize(rng.standard_normal((30, 3)))
        grid = lambda_grid(design, rng.standard_normal(30), RidgeConfig())
        assert np.all(np.diff(grid) < 0)
        assert np.all(grid > 0)

    def test_scales_linearly_with_response(self, rng):
        design, _ = standardize(rng.standard_normal((30, 3)))
        response = rng.standard_normal(30)
        g1 = lambda_grid(design, response, RidgeConfig())
        g2 = lambda_grid(design, 3.5 * response, RidgeConfig())
        assert g2 == pytest.approx(3.5 * g1, rel=1e-12)


class TestCrossValidate:
    def test_deterministic_given_seed(self):
        data = make_dataset(n=80, m=6, seed=31, main=0.8)
        cfg = RidgeConfig(n_lambdas=25, cv_seed=7)
        a = cross_validate(data, cfg)
        b = cross_validate(data, cfg)
        assert np.array_equal(a.biomarker_coefs, b.biomarker_coefs)
        assert np.array_equal(a.cv_mean, b.cv_mean)
        assert np.array_equal(a.lambda_grid, b.lambda_grid)
        assert a.lambda_opt == b.lambda_opt
        assert a.intercept == b.intercept

    def test_lambda_opt_in_grid_and_fields_consistent(self):
        data = make_dataset(n=100, m=5, seed=32, main=0.8)
        fit = cross_validate(data, RidgeConfig(n_lambdas=30))
        assert fit.lambda_opt in fit.lambda_grid
        assert fit.cv_mean.shape == fit.lambda_grid.shape
        assert fit.cv_se.shape == fit.lambda_grid.shape
        assert fit.biomarker_coefs.shape == (5,)
        assert np.all(np.diff(fit.lambda_grid) < 0)

    def test_interior_optimum_in_most_seeds(self):
        # Informative signal with noise: the CV curve should usually dip
        # strictly inside the path rather than at an endpoint.
        interior = 0
        seeds = 100
        for s in range(seeds):
            r = np.random.default_rng(40_000 + s)
            x = r.standard_normal((500, 50))
            beta = np.zeros(50)
            beta[:5] = [0.4, -0.4, 0.3, -0.3, 0.2]
            y = x @ beta + r.standard_normal(500)
            t = (r.random(500) < 0.5).astype(float)
            data = TrialDataset(y, t, x)
            fit = cross_validate(data, RidgeConfig(n_lambdas=40, cv_seed=s))
            pos = int(np.flatnonzero(fit.lambda_grid == fit.lambda_opt)[0])
            interior += 0 < pos < fit.lambda_grid.size - 1
        assert interior >= 80

    def test_fold_counts_both_supported(self):
        data = make_dataset(n=60, m=4, seed=33, main=0.5)
        for k in (2, 5):
            fit = cross_validate(data, RidgeConfig(n_lambdas=15, cv_folds=k))
            assert isinstance(fit, RidgeFit)
            assert np.isfinite(fit.cv_mean).all()

    def test_needs_enough_rows(self):
        data = make_dataset(n=8, m=3, seed=34)
        with pytest.raises(UsageError):
            cross_validate(data, RidgeConfig(cv_folds=5))

    def test_logistic_zero_lambda_matches_irls(self):
        data = make_dataset(n=400, m=3, seed=35, main=1.0, family="logistic")
        raw = np.column_stack([data.treatment, data.biomarkers])
        design, scaling = standardize(raw)
        sol = ridge_solve(design, data.outcome, 0.0,
                          config=RidgeConfig(family="logistic", tol=1e-12))
        oracle = fit_logistic(
            np.column_stack([np.ones(data.n), design]), data.outcome
        )
        assert sol.coefs == pytest.approx(oracle.estimates[1:], abs=1e-5)

    def test_logistic_cv_runs_and_shrinks(self):
        data = make_dataset(n=120, m=10, seed=36, main=1.0, family="logistic")
        fit = cross_validate(data, RidgeConfig(n_lambdas=20))
        assert fit.lambda_opt in fit.lambda_grid
        assert np.all(np.isfinite(fit.biomarker_coefs))


class TestRankBiomarkers:
    def _fit_with(self, coefs):
        m = len(coefs)
        return RidgeFit(
            intercept=0.0, treatment_coef=0.1,
            biomarker_coefs=np.array(coefs, dtype=float),
            lambda_opt=1.0, lambda_grid=np.array([2.0, 1.0]),
            cv_mean=np.array([1.0, 0.9]), cv_se=np.array([0.1, 0.1]),
            scaling=None, converged=True,
        )

    def test_orders_by_absolute_value(self):
        ranking = rank_biomarkers(self._fit_with([0.5, -0.9, 0.1]))
        assert ranking.order.tolist() == [1, 0, 2]
        assert ranking.scores == pytest.approx([0.9, 0.5, 0.1])

    def test_ties_break_by_index(self):
        ranking = rank_biomarkers(self._fit_with([0.3, 0.3]))
        assert ranking.order.tolist() == [0, 1]

    def test_all_zero_gives_index_order(self):
        ranking = rank_biomarkers(self._fit_with([0.0] * 6))
        assert ranking.order.tolist() == list(range(6))
        assert np.all(np.diff(ranking.scores) <= 0)

    @pytest.mark.parametrize("seed", range(3))
    def test_ranking_invariant_to_positive_column_rescaling(self, seed):
        r = np.random.default_rng(200 + seed)
        x = r.standard_normal((150, 8))
        t = (r.random(150) < 0.5).astype(float)
        y = x[:, 2] - 0.5 * x[:, 5] + 0.5 * t + r.standard_normal(150)
        scales = r.uniform(0.1, 10.0, size=8)
        cfg = RidgeConfig(n_lambdas=20, cv_seed=seed)
        base = rank_biomarkers(cross_validate(TrialDataset(y, t, x), cfg))
        scaled = rank_biomarkers(
            cross_validate(TrialDataset(y, t, x * scales), cfg)
        )
        assert base.order.tolist() == scaled.order.tolist()
