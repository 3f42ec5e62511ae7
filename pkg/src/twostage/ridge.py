"""L2-penalized joint screening model fitted by pathwise coordinate descent.

The screening model regresses the outcome on the treatment indicator and
all m biomarkers jointly, with a squared-L2 penalty on every coefficient
except the intercept (the treatment coefficient can be exempted via
``penalize_treatment=False``). For the linear family the objective is

    (1 / (2n)) * ||y - b0 - X d||^2  +  lambda * sum_j pen_j * d_j^2

on the standardized design, so lambda grids are comparable across sample
sizes. The logistic analog replaces the first term with (1/n) times the
binomial deviance.

Coordinate descent on this quadratic objective visits coordinates in
order, each time minimizing exactly over one coefficient given the rest.
A full sweep in that order is algebraically a Gauss-Seidel pass over the
normal equations ``(X'X/n + 2*lambda*D) d = X'(y - ybar)/n``, which is
how the sweep is implemented here: one triangular solve per sweep instead
of a Python loop over coordinates. The iterate sequence is identical to
the coordinate-by-coordinate form.

Lambda is chosen by k-fold cross-validation (minimum mean validation
loss, ties resolved toward the larger lambda), and the selected biomarker
coefficients are turned into a screening ranking by absolute size.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .data import TrialDataset
from .errors import RankDeficientError, UsageError
from .models import CONSTANT_TOL


@dataclass(frozen=True)
class RidgeConfig:
    """Settings for the penalized screening fit.

    ``lambda_min_ratio=None`` resolves to 1e-3, or 1e-2 when the design is
    wider than it is tall.
    """

    n_lambdas: int = 100
    lambda_min_ratio: float | None = None
    cv_folds: int = 5
    cv_seed: int = 0
    penalize_treatment: bool = True
    family: str = "linear"
    max_iter: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if self.n_lambdas < 2:
            raise UsageError("n_lambdas must be at least 2")
        if self.lambda_min_ratio is not None and not 0 < self.lambda_min_ratio < 1:
            raise UsageError("lambda_min_ratio must lie in (0, 1)")
        if self.cv_folds < 2:
            raise UsageError("cv_folds must be at least 2")
        if self.family not in ("linear", "logistic"):
            raise UsageError(f"unknown family {self.family!r}")


@dataclass(frozen=True)
class ColumnScaling:
    """Per-column location and scale used to standardize a design."""

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray  # True where the column had no variation

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        out = (np.asarray(matrix, dtype=float) - self.mean) / self.scale
        out[:, self.constant] = 0.0
        return out


@dataclass(frozen=True)
class RidgeSolution:
    """One penalized fit at a fixed lambda."""

    coefs: np.ndarray
    n_sweeps: int
    converged: bool


@dataclass(frozen=True)
class RidgeFit:
    """Cross-validated screening fit on the standardized scale."""

    intercept: float
    treatment_coef: float
    biomarker_coefs: np.ndarray
    lambda_opt: float
    lambda_grid: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    scaling: ColumnScaling
    converged: bool


@dataclass(frozen=True)
class RidgeRanking:
    """Biomarkers ordered by descending absolute screening coefficient."""

    order: np.ndarray
    scores: np.ndarray


def standardize(matrix: np.ndarray) -> tuple[np.ndarray, ColumnScaling]:
    """Center and scale columns to mean 0, SD 1 (population SD).

    Columns with SD at or below 1e-12 are zeroed out and flagged instead
    of dividing by a vanishing scale.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise UsageError("standardize expects a matrix with at least 2 rows")
    mean = matrix.mean(axis=0)
    sd = matrix.std(axis=0)
    constant = sd <= CONSTANT_TOL
    scale = np.where(constant, 1.0, sd)
    out = (matrix - mean) / scale
    out[:, constant] = 0.0
    return out, ColumnScaling(mean, scale, constant)


def _penalty_diag(p: int, penalized: np.ndarray | None) -> np.ndarray:
    if penalized is None:
        return np.ones(p)
    penalized = np.asarray(penalized, dtype=float)
    if penalized.shape != (p,):
        raise UsageError(f"penalized mask must have length {p}")
    return penalized


def _gauss_seidel(
    gram: np.ndarray,
    target: np.ndarray,
    lam: float,
    pen: np.ndarray,
    start: np.ndarray,
    max_iter: int,
    tol: float,
) -> RidgeSolution:
    """Coordinate-descent sweeps on (gram + 2*lam*diag(pen)) d = target."""
    p = gram.shape[0]
    diag = np.diagonal(gram) + 2.0 * lam * pen
    if np.any(diag <= CONSTANT_TOL):
        raise RankDeficientError(
            "zero-variance unpenalized coordinate; cannot run coordinate descent"
        )
    lower = np.tril(gram)
    lower[np.diag_indices(p)] = diag
    upper = np.triu(gram, 1)

    coefs = start.copy()
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        new = solve_triangular(
            lower, target - upper @ coefs, lower=True, check_finite=False
        )
        delta = float(np.max(np.abs(new - coefs)))
        coefs = new
        if delta < tol:
            converged = True
            break
    return RidgeSolution(coefs, sweeps, converged)


def ridge_solve(
    design: np.ndarray,
    response: np.ndarray,
    lam: float,
    warm_start: np.ndarray | None = None,
    config: RidgeConfig | None = None,
    penalized: np.ndarray | None = None,
) -> RidgeSolution:
    """Penalized coefficients at one lambda on a standardized design.

    The intercept stays outside the penalty and outside the returned
    vector; with centered columns it equals the response mean (linear
    family). A fit that exhausts ``max_iter`` is returned with
    ``converged=False`` rather than raising.
    """
    config = config or RidgeConfig()
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    n, p = design.shape
    pen = _penalty_diag(p, penalized)
    start = np.zeros(p) if warm_start is None else np.asarray(warm_start, dtype=float)

    if config.family == "logistic":
        b0, sol = _logistic_ridge(design, response, lam, start, pen, config)
        return sol

    gram = design.T @ design / n
    target = design.T @ (response - response.mean()) / n
    return _gauss_seidel(gram, target, lam, pen, start, config.max_iter, config.tol)


def ridge_objective(
    design: np.ndarray,
    response: np.ndarray,
    coefs: np.ndarray,
    lam: float,
    penalized: np.ndarray | None = None,
) -> float:
    """Value of the linear-family objective at ``coefs`` (intercept = mean)."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    pen = _penalty_diag(design.shape[1], penalized)
    resid = response - response.mean() - design @ coefs
    return float(resid @ resid / (2 * design.shape[0]) + lam * pen @ coefs**2)


def lambda_grid(
    design: np.ndarray,
    response: np.ndarray,
    config: RidgeConfig | None = None,
) -> np.ndarray:
    """Log-spaced descending lambda path for a standardized design.

    The top of the path is max_j |x_j'(y - ybar)| / n, the size of the
    largest unpenalized gradient coordinate at the zero solution; the
    bottom is that value times ``lambda_min_ratio``.
    """
    config = config or RidgeConfig()
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    n, p = design.shape
    ratio = config.lambda_min_ratio
    if ratio is None:
        ratio = 1e-2 if p >= n else 1e-3
    lam_max = float(np.max(np.abs(design.T @ (response - response.mean()))) / n)
    lam_max = max(lam_max, 1e-12)
    return np.geomspace(lam_max, lam_max * ratio, config.n_lambdas)


def _path_solutions(
    gram: np.ndarray,
    target: np.ndarray,
    grid: np.ndarray,
    pen: np.ndarray,
    config: RidgeConfig,
) -> tuple[np.ndarray, bool]:
    """Coordinate-descent solutions at every lambda, largest first.

    Small designs run the sweeps for all lambdas side by side (one vector
    update per coordinate); larger ones walk the grid sequentially, warm
    starting each solve from the previous lambda. Both produce the same
    fixed points at the configured tolerance.
    """
    p = gram.shape[0]
    if p <= 40 and grid.size > 1:
        return _path_solutions_batched(gram, target, grid, pen, config)
    out = np.empty((grid.size, p))
    coefs = np.zeros(p)
    all_converged = True
    for i, lam in enumerate(grid):
        sol = _gauss_seidel(gram, target, float(lam), pen, coefs,
                            config.max_iter, config.tol)
        coefs = sol.coefs
        out[i] = coefs
        all_converged &= sol.converged
    return out, all_converged


def _path_solutions_batched(
    gram: np.ndarray,
    target: np.ndarray,
    grid: np.ndarray,
    pen: np.ndarray,
    config: RidgeConfig,
) -> tuple[np.ndarray, bool]:
    """Gauss-Seidel sweeps for the whole grid at once (one design)."""
    paths, ok = _grouped_paths(gram[None], target[None], grid, pen, config)
    return paths[0], ok


def _grouped_paths(
    grams: np.ndarray,
    targets: np.ndarray,
    grid: np.ndarray,
    pen: np.ndarray,
    config: RidgeConfig,
) -> tuple[np.ndarray, bool]:
    """Coordinate-descent paths for several designs and all lambdas at once.

    ``grams`` is (groups, p, p), ``targets`` (groups, p); the state is a
    (groups, n_lambdas, p) tensor and one sweep updates each coordinate
    for every (group, lambda) pair in a single vector operation. The
    iterate sequence per pair matches scalar coordinate descent from a
    zero start.
    """
    n_groups, p = targets.shape
    diag = np.diagonal(grams, axis1=1, axis2=2)  # (groups, p)
    denom = diag[:, None, :] + 2.0 * grid[None, :, None] * pen[None, None, :]
    if np.any(denom <= CONSTANT_TOL):
        raise RankDeficientError(
            "zero-variance unpenalized coordinate; cannot run coordinate descent"
        )
    state = np.zeros((n_groups, grid.size, p))
    all_ok = False
    for _ in range(config.max_iter):
        max_step = np.zeros((n_groups, grid.size))
        for j in range(p):
            resid = (targets[:, None, j]
                     - np.einsum("glp,gp->gl", state, grams[:, :, j])
                     + state[:, :, j] * diag[:, None, j])
            new = resid / denom[:, :, j]
            np.maximum(max_step, np.abs(new - state[:, :, j]), out=max_step)
            state[:, :, j] = new
        if np.all(max_step < config.tol):
            all_ok = True
            break
    return state, all_ok


def _logistic_ridge(
    design: np.ndarray,
    response: np.ndarray,
    lam: float,
    start: np.ndarray,
    pen: np.ndarray,
    config: RidgeConfig,
    start_intercept: float | None = None,
    outer_max: int = 50,
) -> tuple[float, RidgeSolution]:
    """Penalized logistic fit: IRLS outer loop, coordinate sweeps inside."""
    n = design.shape[0]
    coefs = start.copy()
    ybar = min(max(float(response.mean()), 1e-6), 1 - 1e-6)
    b0 = float(np.log(ybar / (1 - ybar))) if start_intercept is None else start_intercept
    converged = False
    sweeps_total = 0
    for _ in range(outer_max):
        eta = b0 + design @ coefs
        mu = expit(eta)
        w = np.maximum(2.0 * mu * (1.0 - mu), 1e-10)  # deviance curvature
        z = eta + 2.0 * (response - mu) / w
        b0_new = float(w @ (z - design @ coefs) / w.sum())
        wx = design * w[:, None]
        gram = wx.T @ design / n
        target = design.T @ (w * (z - b0_new)) / n
        sol = _gauss_seidel(gram, target, lam, pen, coefs,
                            config.max_iter, config.tol)
        sweeps_total += sol.n_sweeps
        step = max(float(np.max(np.abs(sol.coefs - coefs))), abs(b0_new - b0))
        coefs = sol.coefs
        b0 = b0_new
        if step < max(config.tol, 1e-9):
            converged = sol.converged
            break
    return b0, RidgeSolution(coefs, sweeps_total, converged)


def _logistic_path(
    design: np.ndarray,
    response: np.ndarray,
    grid: np.ndarray,
    pen: np.ndarray,
    config: RidgeConfig,
) -> tuple[np.ndarray, np.ndarray, bool]:
    p = design.shape[1]
    coef_path = np.empty((grid.size, p))
    intercepts = np.empty(grid.size)
    coefs = np.zeros(p)
    b0 = None
    ok = True
    for i, lam in enumerate(grid):
        b0, sol = _logistic_ridge(design, response, float(lam), coefs, pen,
                                  config, start_intercept=b0)
        coefs = sol.coefs
        coef_path[i] = coefs
        intercepts[i] = b0
        ok &= sol.converged
    return coef_path, intercepts, ok


def _deviance_loss(y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    mu = np.clip(expit(eta), 1e-12, 1 - 1e-12)
    return -2.0 * (y[:, None] * np.log(mu) + (1 - y[:, None]) * np.log1p(-mu))


def _fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def cross_validate(data: TrialDataset, config: RidgeConfig | None = None) -> RidgeFit:
    """Fit the screening model with lambda chosen by k-fold cross-validation.

    The design is the treatment column followed by all biomarker columns,
    standardized per training set. One lambda path (computed on the full
    standardized design) is shared by every fold; fold membership is a
    deterministic function of ``cv_seed``. The reported coefficients come
    from a path fit on all rows evaluated at the winning lambda, and live
    on the standardized scale recorded in ``scaling``.
    """
    config = config or RidgeConfig()
    if config.family != data.family:
        config = replace(config, family=data.family)
    n, m = data.n, data.m
    if n < 2 * config.cv_folds:
        raise UsageError(
            f"need n >= 2*cv_folds rows, got n={n}, cv_folds={config.cv_folds}"
        )

    raw = np.column_stack([data.treatment, data.biomarkers])
    y = data.outcome
    pen = np.ones(m + 1)
    if not config.penalize_treatment:
        pen[0] = 0.0

    full_std, full_scaling = standardize(raw)
    grid = lambda_grid(full_std, y, config)

    folds = _fold_indices(n, config.cv_folds, config.cv_seed)
    fold_losses = np.empty((config.cv_folds, grid.size))
    ok = True

    if config.family == "logistic":
        for f, test_idx in enumerate(folds):
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            x_tr, scaling = standardize(raw[mask])
            x_te = scaling.apply(raw[test_idx])
            path, intercepts, conv = _logistic_path(x_tr, y[mask], grid, pen, config)
            eta = intercepts[None, :] + x_te @ path.T
            fold_losses[f] = _deviance_loss(y[test_idx], eta).mean(axis=0)
            ok &= conv
        cv_mean = fold_losses.mean(axis=0)
        cv_se = fold_losses.std(axis=0, ddof=1) / np.sqrt(config.cv_folds)
        best = int(np.argmin(cv_mean))  # first minimum = largest lambda on ties
        coef_path, intercepts, conv = _logistic_path(
            full_std, y, grid[: best + 1], pen, config
        )
        coefs = coef_path[best]
        intercept = float(intercepts[best])
        ok &= conv
    else:
        # One coordinate-descent problem per fold plus the all-rows refit,
        # solved as a group.
        grams = np.empty((config.cv_folds + 1, m + 1, m + 1))
        targets = np.empty((config.cv_folds + 1, m + 1))
        means = np.empty(config.cv_folds)
        tests = []
        for f, test_idx in enumerate(folds):
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            x_tr, scaling = standardize(raw[mask])
            y_tr = y[mask]
            grams[f] = x_tr.T @ x_tr / x_tr.shape[0]
            targets[f] = x_tr.T @ (y_tr - y_tr.mean()) / x_tr.shape[0]
            means[f] = y_tr.mean()
            tests.append(scaling.apply(raw[test_idx]))
        grams[-1] = full_std.T @ full_std / n
        targets[-1] = full_std.T @ (y - y.mean()) / n

        if m + 1 <= 40:
            paths, ok = _grouped_paths(grams, targets, grid, pen, config)
        else:
            paths = np.empty((config.cv_folds + 1, grid.size, m + 1))
            ok = True
            for g in range(config.cv_folds + 1):
                paths[g], conv = _path_solutions(grams[g], targets[g], grid,
                                                 pen, config)
                ok &= conv

        for f, test_idx in enumerate(folds):
            pred = means[f] + tests[f] @ paths[f].T
            fold_losses[f] = ((y[test_idx, None] - pred) ** 2).mean(axis=0)
        cv_mean = fold_losses.mean(axis=0)
        cv_se = fold_losses.std(axis=0, ddof=1) / np.sqrt(config.cv_folds)
        best = int(np.argmin(cv_mean))  # first minimum = largest lambda on ties
        coefs = paths[-1][best]
        intercept = float(y.mean())

    lam_opt = float(grid[best])

    return RidgeFit(
        intercept=intercept,
        treatment_coef=float(coefs[0]),
        biomarker_coefs=coefs[1:].copy(),
        lambda_opt=lam_opt,
        lambda_grid=grid,
        cv_mean=cv_mean,
        cv_se=cv_se,
        scaling=full_scaling,
        converged=bool(ok),
    )


def rank_biomarkers(fit: RidgeFit) -> RidgeRanking:
    """Order biomarkers by descending |coefficient|, ties by column index.

    The treatment coefficient is not part of the ranking. Columns that
    were constant (zero coefficient by construction) land at the end in
    index order, by the same tie rule.
    """
    scores = np.abs(fit.biomarker_coefs)
    order = np.lexsort((np.arange(scores.size), -scores))
    return RidgeRanking(order=order, scores=scores[order])
