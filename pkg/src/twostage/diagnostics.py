"""Empirical check that stage-1 screening and stage-2 tests do not leak
information into each other.

The two-stage procedures control the family-wise error rate only because
the screening statistic and the interaction statistic are asymptotically
independent when treatment is randomized. That independence is checked
here empirically, two ways:

* across biomarkers, on one dataset: correlate the penalized screening
  coefficient with the interaction Wald statistic over j = 1..m;
* across replicates, for one null biomarker: regenerate the trial many
  times and correlate the two estimates over replicates, which is the
  direct sampling-distribution reading of the claim.

Both report a Pearson correlation with a two-sided t test and a Fisher
z-transform 95% confidence interval. Under randomization the interval
should cover zero; generating treatment as a function of the biomarker
(see ``ScenarioConfig.dependent_treatment_index``) breaks it.

The underlying independence argument also assumes the outcome variance is
roughly constant given the biomarkers. That is not enforced on data: a
strong interaction with little residual noise makes var(Y | X) swing with
the interacting biomarker, and a small finite-sample correlation can
persist even under perfect randomization. Interpret a barely-excluded
zero accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .data import TrialDataset
from .errors import (
    IndexHasInteractionError,
    InsufficientPairsError,
    UsageError,
)
from .models import interaction_scan, interaction_test
from .ridge import RidgeConfig, cross_validate
from .simulate import ScenarioConfig, derive_cv_seed, generate


@dataclass(frozen=True)
class IndependenceReport:
    """Pearson summary of the stage-1 / stage-2 statistic relationship."""

    mode: str  # "across_biomarkers" or "across_replicates"
    estimate: float
    p_value: float
    ci_low: float
    ci_high: float
    n_pairs: int


def pearson_test(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Pearson correlation with t-reference p-value and Fisher 95% CI.

    With exactly 3 pairs the interval degenerates to (-1, 1).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("pearson_test expects two equal-length vectors")
    n = x.size
    if n < 3:
        raise InsufficientPairsError("need at least 3 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = float(np.sqrt((xc @ xc) * (yc @ yc)))
    if denom <= 0.0:
        raise UsageError("a constant vector has no defined correlation")
    r = float(xc @ yc / denom)

    r_safe = min(max(r, -1.0 + 1e-15), 1.0 - 1e-15)
    t_stat = r_safe * np.sqrt((n - 2) / (1.0 - r_safe**2))
    p = float(2.0 * stats.t.sf(abs(t_stat), df=n - 2))
    z = np.arctanh(r_safe)
    with np.errstate(divide="ignore"):
        half = stats.norm.ppf(0.975) / np.sqrt(n - 3) if n > 3 else np.inf
    lo = float(np.tanh(z - half))
    hi = float(np.tanh(z + half))
    return r, p, lo, hi


def independence_across_biomarkers(
    data: TrialDataset, ridge_config: RidgeConfig | None = None
) -> IndependenceReport:
    """Correlate screening coefficients with interaction statistics over j.

    Degenerate biomarkers contribute no pair. Needs at least 3 usable
    pairs.
    """
    if data.m < 3:
        raise InsufficientPairsError("need at least 3 biomarkers")
    fit = cross_validate(data, ridge_config)
    scan = interaction_scan(data)
    usable = ~scan.degenerate & np.isfinite(scan.statistics)
    if int(usable.sum()) < 3:
        raise InsufficientPairsError("fewer than 3 non-degenerate biomarkers")
    r, p, lo, hi = pearson_test(
        fit.biomarker_coefs[usable], scan.statistics[usable]
    )
    return IndependenceReport(
        mode="across_biomarkers",
        estimate=r, p_value=p, ci_low=lo, ci_high=hi,
        n_pairs=int(usable.sum()),
    )


def independence_across_replicates(
    config: ScenarioConfig,
    j: int,
    replicates: int,
    ridge_config: RidgeConfig | None = None,
) -> IndependenceReport:
    """Correlate the two estimators for null biomarker j over replicates.

    Replicate r regenerates the scenario from seed ``config.seed + r``,
    records the penalized screening coefficient and the interaction
    estimate for biomarker j, and the pairs are correlated at the end.
    Biomarker j must carry no interaction effect in the scenario.
    """
    if not 0 <= j < config.m:
        raise UsageError(f"biomarker index {j} out of range for m={config.m}")
    if j in config.interacting_indices():
        raise IndexHasInteractionError(
            f"biomarker {j} has an interaction effect in this scenario"
        )
    if replicates < 3:
        raise InsufficientPairsError("need at least 3 replicates")
    ridge_config = ridge_config or RidgeConfig()

    stage1 = np.empty(replicates)
    stage2 = np.empty(replicates)
    for r in range(replicates):
        data = generate(replace(config, seed=config.seed + r))
        rc = replace(ridge_config, cv_seed=derive_cv_seed(config.seed + r))
        fit = cross_validate(data, rc)
        stage1[r] = fit.biomarker_coefs[j]
        stage2[r] = interaction_test(data, j).estimate

    r_est, p, lo, hi = pearson_test(stage1, stage2)
    return IndependenceReport(
        mode="across_replicates",
        estimate=r_est, p_value=p, ci_low=lo, ci_high=hi,
        n_pairs=replicates,
    )
