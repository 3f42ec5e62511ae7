"""Per-biomarker regression models and Wald tests.

Two models are fitted throughout the package, both one biomarker at a
time. The interaction model regresses the outcome on an intercept, the
biomarker, the treatment arm, and their product; the coefficient on the
product term measures how much the biomarker modifies the treatment
effect. The marginal model regresses the outcome on an intercept and the
biomarker alone and is used as a screening statistic.

Both are available for a linear (identity link, least squares) and a
logistic (logit link, IRLS) outcome family. Wald statistics are referred
to the standard normal; with small n the linear p-values are therefore
mildly anti-conservative compared to a t reference.

``interaction_scan`` and ``marginal_scan`` are vectorized equivalents of
the per-biomarker tests for the linear family. They produce identical
numbers to the scalar routines (the test suite pins this) and exist
because the simulation studies run them millions of times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .data import TrialDataset
from .errors import (
    DataError,
    DegenerateBiomarkerError,
    DimensionMismatchError,
    RankDeficientError,
)

# Relative singular-value cutoff below which a design is treated as rank
# deficient. Shared by the scalar and vectorized paths.
RANK_RTOL = 1e-10

# A biomarker column is degenerate when its values are this close to constant.
CONSTANT_TOL = 1e-12

LOGISTIC_CAVEAT = (
    "family-wise error rate guarantees hold for the linear family only; "
    "logistic interaction estimates can be biased under model "
    "misspecification, which may inflate the error rate"
)


@dataclass(frozen=True)
class CoefficientFit:
    """Estimates and covariance from a single regression fit."""

    estimates: np.ndarray
    covariance: np.ndarray
    coef_names: tuple[str, ...]
    converged: bool
    n_used: int

    def wald(self, index: int) -> "WaldResult":
        """Wald test for one coefficient against zero."""
        est = float(self.estimates[index])
        var = float(self.covariance[index, index])
        se = float(np.sqrt(max(var, 0.0)))
        if se <= 0.0:
            raise DataError(
                f"coefficient {self.coef_names[index]!r} has zero standard error"
            )
        stat = est / se
        return WaldResult(est, se, stat, _two_sided_normal_p(stat))


@dataclass(frozen=True)
class WaldResult:
    """Two-sided Wald test summary for one coefficient."""

    estimate: float
    std_error: float
    statistic: float
    p_value: float


def _two_sided_normal_p(stat) -> float | np.ndarray:
    # ndtr is the standard normal CDF; 2*(1 - Phi(|z|)) without cancellation.
    return 2.0 * ndtr(-np.abs(stat))


def _check_design(design: np.ndarray, response: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2 or response.ndim != 1:
        raise DimensionMismatchError("design must be 2-d and response 1-d")
    if design.shape[0] != response.shape[0]:
        raise DimensionMismatchError(
            f"design has {design.shape[0]} rows, response {response.shape[0]}"
        )
    if design.shape[0] < design.shape[1]:
        raise DimensionMismatchError(
            f"need at least as many rows ({design.shape[0]}) as columns "
            f"({design.shape[1]})"
        )
    return design, response


def fit_linear(design: np.ndarray, response: np.ndarray) -> CoefficientFit:
    """Least-squares fit with classical covariance.

    Solves via QR after a singular-value rank check, and returns the
    covariance ``sigma2 * (X'X)^{-1}`` with ``sigma2 = RSS / (n - p)``.
    A saturated fit (n == p) has zero residual degrees of freedom and is
    returned with a zero covariance matrix.

    Raises
    ------
    RankDeficientError
        If the smallest singular value is below ``RANK_RTOL`` times the
        largest.
    DimensionMismatchError
        If shapes disagree or n < p.
    """
    design, response = _check_design(design, response)
    n, p = design.shape

    singular = np.linalg.svd(design, compute_uv=False)
    if singular[-1] <= RANK_RTOL * singular[0]:
        raise RankDeficientError(
            f"design is rank deficient (condition ~ {singular[0] / max(singular[-1], 1e-300):.2e})"
        )

    q, r = np.linalg.qr(design)
    estimates = np.linalg.solve(r, q.T @ response)
    residuals = response - design @ estimates
    rss = float(residuals @ residuals)
    if n > p:
        sigma2 = rss / (n - p)
        r_inv = np.linalg.solve(r, np.eye(p))
        covariance = sigma2 * (r_inv @ r_inv.T)
    else:
        covariance = np.zeros((p, p))
    names = tuple(f"b{k}" for k in range(p))
    return CoefficientFit(estimates, covariance, names, True, n)


def fit_logistic(
    design: np.ndarray,
    response: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> CoefficientFit:
    """Bernoulli maximum likelihood via iteratively reweighted least squares.

    The covariance block is the inverse observed information at the final
    iterate. ``converged`` is False when the coefficient updates did not
    fall below ``tol`` within ``max_iter`` iterations, or when the
    coefficient norm exceeded 1e3, the working heuristic for separated
    data.
    """
    design, response = _check_design(design, response)
    if not np.all(np.isin(response, (0.0, 1.0))):
        raise DataError("logistic response must be coded 0/1")
    n, p = design.shape

    singular = np.linalg.svd(design, compute_uv=False)
    if singular[-1] <= RANK_RTOL * singular[0]:
        raise RankDeficientError("design is rank deficient")

    beta = np.zeros(p)
    converged = False
    for _ in range(max_iter):
        eta = design @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        # One Newton step expressed as a weighted least-squares solve.
        sw = np.sqrt(w)
        z = eta + (response - mu) / w
        q, r = np.linalg.qr(design * sw[:, None])
        beta_new = np.linalg.solve(r, q.T @ (z * sw))
        step = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if np.linalg.norm(beta) > 1e3:
            converged = False
            break
        if step < tol:
            converged = True
            break

    mu = expit(design @ beta)
    w = np.maximum(mu * (1.0 - mu), 1e-10)
    info = design.T @ (design * w[:, None])
    covariance = np.linalg.inv(info)
    names = tuple(f"b{k}" for k in range(p))
    return CoefficientFit(beta, covariance, names, converged, n)


def _biomarker_column(data: TrialDataset, j: int) -> np.ndarray:
    if not 0 <= j < data.m:
        raise IndexError(f"biomarker index {j} out of range for m={data.m}")
    col = data.biomarkers[:, j]
    if np.ptp(col) <= CONSTANT_TOL:
        raise DegenerateBiomarkerError(
            f"biomarker {data.names[j]!r} is constant"
        )
    return col


def _family_fit(data: TrialDataset, design: np.ndarray) -> CoefficientFit:
    if data.family == "logistic":
        return fit_logistic(design, data.outcome)
    return fit_linear(design, data.outcome)


def interaction_test(data: TrialDataset, j: int) -> WaldResult:
    """Wald test of the biomarker-treatment product term for biomarker j.

    Fits outcome ~ 1 + X_j + T + X_j*T in the dataset's family and tests
    the product coefficient against zero. Indices are 0-based positions
    into the biomarker matrix.
    """
    col = _biomarker_column(data, j)
    if not data.both_arms_present():
        raise DataError("interaction test needs both treatment arms present")
    t = data.treatment
    design = np.column_stack([np.ones(data.n), col, t, col * t])
    return _family_fit(data, design).wald(3)


def marginal_test(data: TrialDataset, j: int) -> WaldResult:
    """Wald test of the biomarker's marginal association with the outcome.

    Fits outcome ~ 1 + X_j, ignoring treatment, and tests the slope.
    """
    col = _biomarker_column(data, j)
    design = np.column_stack([np.ones(data.n), col])
    return _family_fit(data, design).wald(1)


@dataclass(frozen=True)
class ScanResult:
    """Vectorized Wald results for all m biomarkers.

    Degenerate (constant) columns carry NaN statistics and are flagged in
    ``degenerate`` rather than raising, so callers can keep row counts
    stable.
    """

    estimates: np.ndarray
    std_errors: np.ndarray
    statistics: np.ndarray
    p_values: np.ndarray
    degenerate: np.ndarray

    @property
    def m(self) -> int:
        return self.estimates.shape[0]

    def wald(self, j: int) -> WaldResult:
        if self.degenerate[j]:
            raise DegenerateBiomarkerError(f"biomarker index {j} is degenerate")
        return WaldResult(
            float(self.estimates[j]),
            float(self.std_errors[j]),
            float(self.statistics[j]),
            float(self.p_values[j]),
        )


def _empty_scan(m: int) -> dict:
    nan = np.full(m, np.nan)
    return dict(
        estimates=nan.copy(),
        std_errors=nan.copy(),
        statistics=nan.copy(),
        p_values=nan.copy(),
        degenerate=np.zeros(m, dtype=bool),
    )


def _scan_logistic(data: TrialDataset, interaction: bool) -> ScanResult:
    parts = _empty_scan(data.m)
    test = interaction_test if interaction else marginal_test
    for j in range(data.m):
        try:
            res = test(data, j)
        except DegenerateBiomarkerError:
            parts["degenerate"][j] = True
            continue
        parts["estimates"][j] = res.estimate
        parts["std_errors"][j] = res.std_error
        parts["statistics"][j] = res.statistic
        parts["p_values"][j] = res.p_value
    return ScanResult(**parts)


def interaction_scan(data: TrialDataset) -> ScanResult:
    """Interaction Wald tests for every biomarker at once.

    Linear-family scans solve all m four-column least-squares problems as
    one batched operation via per-biomarker SVDs; the logistic family
    falls back to the scalar IRLS fits.
    """
    if data.family == "logistic":
        return _scan_logistic(data, interaction=True)
    if not data.both_arms_present():
        raise DataError("interaction test needs both treatment arms present")

    x = data.biomarkers
    t = data.treatment
    y = data.outcome
    n, m = x.shape
    if n <= 4:
        raise DimensionMismatchError("interaction scan needs n > 4")

    degenerate = np.ptp(x, axis=0) <= CONSTANT_TOL
    parts = _empty_scan(m)
    parts["degenerate"] = degenerate
    active = np.flatnonzero(~degenerate)
    if active.size:
        designs = np.empty((active.size, n, 4))
        designs[:, :, 0] = 1.0
        designs[:, :, 1] = x[:, active].T
        designs[:, :, 2] = t
        designs[:, :, 3] = (x[:, active] * t[:, None]).T

        # Batched thin SVD gives a rank check and a stable solve in one pass.
        u, s, vt = np.linalg.svd(designs, full_matrices=False)
        bad = s[:, -1] <= RANK_RTOL * s[:, 0]
        s_safe = np.where(s > 0, s, 1.0)
        coef = np.einsum("bkp,bk->bp", vt, (u.transpose(0, 2, 1) @ y) / s_safe)
        resid = y[None, :] - np.einsum("bnp,bp->bn", designs, coef)
        sigma2 = np.einsum("bn,bn->b", resid, resid) / (n - 4)
        # (X'X)^{-1} = V S^{-2} V'; only the product-term diagonal is needed.
        var_last = sigma2 * np.einsum("bk,bk->b", vt[:, :, 3], vt[:, :, 3] / s_safe**2)

        est = coef[:, 3]
        se = np.sqrt(np.maximum(var_last, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = est / se
        pval = _two_sided_normal_p(stat)

        est[bad] = np.nan
        se[bad] = np.nan
        stat = np.where(bad, np.nan, stat)
        pval = np.where(bad, np.nan, pval)
        parts["degenerate"][active[bad]] = True

        parts["estimates"][active] = est
        parts["std_errors"][active] = se
        parts["statistics"][active] = stat
        parts["p_values"][active] = pval
    return ScanResult(**parts)


def marginal_scan(data: TrialDataset) -> ScanResult:
    """Marginal-slope Wald tests for every biomarker at once.

    The linear-family slope, its standard error, and the p-value come from
    the closed-form simple-regression expressions applied column-wise.
    """
    if data.family == "logistic":
        return _scan_logistic(data, interaction=False)

    x = data.biomarkers
    y = data.outcome
    n, m = x.shape
    if n <= 2:
        raise DimensionMismatchError("marginal scan needs n > 2")

    degenerate = np.ptp(x, axis=0) <= CONSTANT_TOL
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("nm,nm->m", xc, xc)
    sxy = xc.T @ yc
    syy = float(yc @ yc)

    parts = _empty_scan(m)
    parts["degenerate"] = degenerate
    sxx_safe = np.where(degenerate, 1.0, sxx)
    slope = sxy / sxx_safe
    rss = np.maximum(syy - sxy**2 / sxx_safe, 0.0)
    sigma2 = rss / (n - 2)
    se = np.sqrt(sigma2 / sxx_safe)
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = slope / se
    pval = _two_sided_normal_p(stat)

    parts["estimates"] = np.where(degenerate, np.nan, slope)
    parts["std_errors"] = np.where(degenerate, np.nan, se)
    parts["statistics"] = np.where(degenerate, np.nan, stat)
    parts["p_values"] = np.where(degenerate, np.nan, pval)
    return ScanResult(**parts)
