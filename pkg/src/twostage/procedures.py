"""Stage-2 testing procedures and multiplicity control.

Four end-to-end procedures are provided, all controlling the family-wise
error rate at a target level:

* ``single_step`` tests every biomarker's interaction at level alpha/m.
* ``univariate_threshold_screen`` + ``stage2_bonferroni`` select
  biomarkers whose marginal association p-value clears a stage-1 cutoff,
  then test only those at level alpha/m*.
* ``univariate_rank_procedure`` ranks biomarkers by marginal p-value and
  tests all of them against geometrically decaying per-bucket thresholds.
* ``ridge_rank_procedure`` does the same with the ranking taken from the
  cross-validated penalized screening fit.

The weighted scheme splits the overall level across ranked buckets of
sizes B, 2B, 4B, ...: biomarkers ranked 1..B are tested at (alpha/2)/B,
the next 2B at (alpha/4)/(2B), and bucket k at (alpha/2^(k+1))/(2^k B).
The bucket threshold masses sum to alpha over infinitely many buckets, so
any finite panel spends strictly less than alpha.

Every report keeps one row per biomarker. Rows that were not tested
(not selected, or a constant column) stay in place with NaN statistics,
and ``rejected`` is exactly ``p_value < threshold`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import InvalidRankingError, UsageError
from .models import (
    LOGISTIC_CAVEAT,
    ScanResult,
    interaction_scan,
    marginal_scan,
)
from .ridge import RidgeConfig, cross_validate, rank_biomarkers

METHOD_LABELS = (
    "single_step",
    "univariate_threshold",
    "univariate_rank",
    "ridge_rank",
)


@dataclass(frozen=True)
class WeightScheme:
    """Bucket size and overall level for the weighted stage-2 test."""

    bucket_size: int = 5
    overall_alpha: float = 0.05

    def __post_init__(self):
        if self.bucket_size < 1:
            raise UsageError("bucket_size must be at least 1")
        if not 0 < self.overall_alpha < 1:
            raise UsageError("overall_alpha must lie in (0, 1)")


@dataclass(frozen=True)
class ScreeningOutcome:
    """Stage-1 result: a selected subset or a full ranking.

    ``stage1_stats`` holds marginal p-values (univariate screens) or
    absolute standardized coefficients (ridge screen), indexed by
    biomarker. Degenerate columns are flagged and never selected.
    """

    mode: str  # "threshold" or "rank"
    method: str
    stage1_stats: np.ndarray
    selected: np.ndarray | None = None
    ranking: np.ndarray | None = None
    degenerate: np.ndarray | None = None


@dataclass(frozen=True)
class ReportRow:
    """One biomarker's stage-2 record."""

    index: int
    name: str
    estimate: float
    std_error: float
    statistic: float
    p_value: float
    threshold: float
    tested: bool
    rejected: bool
    note: str = ""


@dataclass(frozen=True)
class StageTwoReport:
    """Per-biomarker interaction test results under one procedure."""

    rows: tuple[ReportRow, ...]
    overall_alpha: float
    method: str
    caveat: str = ""

    @property
    def n_rejected(self) -> int:
        return sum(r.rejected for r in self.rows)

    def rejected_indices(self) -> np.ndarray:
        return np.array([r.index for r in self.rows if r.rejected], dtype=int)


def _caveat_for(data: TrialDataset) -> str:
    return LOGISTIC_CAVEAT if data.family == "logistic" else ""


def _rows_from_scan(
    scan: ScanResult,
    names: tuple[str, ...],
    thresholds: np.ndarray,
    tested: np.ndarray,
) -> tuple[ReportRow, ...]:
    nan = float("nan")
    rows = []
    for j in range(scan.m):
        degenerate = bool(scan.degenerate[j])
        is_tested = bool(tested[j]) and not degenerate
        p = float(scan.p_values[j])
        thr = float(thresholds[j])
        rows.append(ReportRow(
            index=j,
            name=names[j],
            estimate=float(scan.estimates[j]) if is_tested else nan,
            std_error=float(scan.std_errors[j]) if is_tested else nan,
            statistic=float(scan.statistics[j]) if is_tested else nan,
            p_value=p if is_tested else nan,
            threshold=thr,
            tested=is_tested,
            rejected=bool(is_tested and p < thr),
            note="degenerate" if degenerate else "",
        ))
    return tuple(rows)


def single_step(data: TrialDataset, overall_alpha: float = 0.05) -> StageTwoReport:
    """Interaction tests for all biomarkers at the uniform level alpha/m."""
    if not 0 < overall_alpha < 1:
        raise UsageError("overall_alpha must lie in (0, 1)")
    scan = interaction_scan(data)
    thresholds = np.full(data.m, overall_alpha / data.m)
    tested = np.ones(data.m, dtype=bool)
    return StageTwoReport(
        rows=_rows_from_scan(scan, data.names, thresholds, tested),
        overall_alpha=overall_alpha,
        method="single_step",
        caveat=_caveat_for(data),
    )


def univariate_threshold_screen(
    data: TrialDataset, alpha1: float = 0.05
) -> ScreeningOutcome:
    """Stage 1: keep biomarkers whose marginal p-value is below alpha1."""
    if not 0 < alpha1 < 1:
        raise UsageError("alpha1 must lie in (0, 1)")
    scan = marginal_scan(data)
    with np.errstate(invalid="ignore"):
        selected = np.flatnonzero(scan.p_values < alpha1)
    return ScreeningOutcome(
        mode="threshold",
        method="univariate_threshold",
        stage1_stats=scan.p_values.copy(),
        selected=selected,
        degenerate=scan.degenerate.copy(),
    )


def stage2_bonferroni(
    data: TrialDataset,
    screening: ScreeningOutcome,
    overall_alpha: float = 0.05,
) -> StageTwoReport:
    """Stage 2: test the selected subset at the level alpha / m*.

    Biomarkers not selected at stage 1 appear in the report untested.
    An empty selection is a legitimate outcome and yields zero tests.
    """
    if screening.mode != "threshold" or screening.selected is None:
        raise UsageError("stage2_bonferroni needs a threshold-mode screening")
    if not 0 < overall_alpha < 1:
        raise UsageError("overall_alpha must lie in (0, 1)")
    m_star = int(screening.selected.size)
    tested = np.zeros(data.m, dtype=bool)
    thresholds = np.full(data.m, np.nan)
    if m_star > 0:
        scan = interaction_scan(data)
        tested[screening.selected] = True
        thresholds[screening.selected] = overall_alpha / m_star
    else:
        scan = ScanResult(
            estimates=np.full(data.m, np.nan),
            std_errors=np.full(data.m, np.nan),
            statistics=np.full(data.m, np.nan),
            p_values=np.full(data.m, np.nan),
            degenerate=screening.degenerate.copy()
            if screening.degenerate is not None
            else np.zeros(data.m, dtype=bool),
        )
    return StageTwoReport(
        rows=_rows_from_scan(scan, data.names, thresholds, tested),
        overall_alpha=overall_alpha,
        method="univariate_threshold",
        caveat=_caveat_for(data),
    )


def weighted_thresholds(m: int, scheme: WeightScheme) -> np.ndarray:
    """Per-test thresholds by rank position (best rank first).

    Rank positions are 0-based here; position r falls in bucket
    k = floor(log2(r // B + 1)) and is tested at (alpha/2^(k+1))/(2^k B).
    A final partial bucket keeps its bucket's threshold.
    """
    if m < 1:
        raise UsageError("m must be positive")
    b = scheme.bucket_size
    q = np.arange(m) // b + 1
    bucket = np.frexp(q.astype(float))[1] - 1  # floor(log2(q)), exact for ints
    return (scheme.overall_alpha / 2.0 ** (bucket + 1)) / (2.0**bucket * b)


def _check_permutation(ranking: np.ndarray, m: int) -> np.ndarray:
    ranking = np.asarray(ranking, dtype=int)
    if ranking.shape != (m,) or not np.array_equal(np.sort(ranking), np.arange(m)):
        raise InvalidRankingError(
            "ranking must be a permutation of the biomarker indices 0..m-1"
        )
    return ranking


def _thresholds_by_index(ranking: np.ndarray, scheme: WeightScheme) -> np.ndarray:
    by_rank = weighted_thresholds(ranking.size, scheme)
    by_index = np.empty(ranking.size)
    by_index[ranking] = by_rank
    return by_index


def weighted_hypothesis_test(
    ranking: np.ndarray,
    pvalues: np.ndarray,
    scheme: WeightScheme,
    names: tuple[str, ...] | None = None,
) -> StageTwoReport:
    """Test all m hypotheses against rank-dependent weighted thresholds.

    ``ranking`` lists biomarker indices best-first; ``pvalues`` is indexed
    by biomarker. This is the bare kernel: rows carry p-values and
    decisions but no effect estimates.
    """
    pvalues = np.asarray(pvalues, dtype=float)
    m = pvalues.size
    ranking = _check_permutation(ranking, m)
    thresholds = _thresholds_by_index(ranking, scheme)
    if names is None:
        names = tuple(f"X{j + 1}" for j in range(m))
    rows = []
    for j in range(m):
        p = float(pvalues[j])
        tested = bool(np.isfinite(p))
        rows.append(ReportRow(
            index=j,
            name=names[j],
            estimate=float("nan"),
            std_error=float("nan"),
            statistic=float("nan"),
            p_value=p if tested else float("nan"),
            threshold=float(thresholds[j]),
            tested=tested,
            rejected=bool(tested and p < thresholds[j]),
        ))
    return StageTwoReport(
        rows=tuple(rows),
        overall_alpha=scheme.overall_alpha,
        method="weighted",
    )


def univariate_rank_screen(data: TrialDataset) -> ScreeningOutcome:
    """Stage 1 ranking by ascending marginal p-value.

    Ties break toward the lower column index; degenerate columns sort
    after everything else, also in index order.
    """
    scan = marginal_scan(data)
    key = np.where(np.isnan(scan.p_values), np.inf, scan.p_values)
    ranking = np.lexsort((np.arange(data.m), key))
    return ScreeningOutcome(
        mode="rank",
        method="univariate_rank",
        stage1_stats=scan.p_values.copy(),
        ranking=ranking,
        degenerate=scan.degenerate.copy(),
    )


def ridge_rank_screen(
    data: TrialDataset, ridge_config: RidgeConfig | None = None
) -> ScreeningOutcome:
    """Stage 1 ranking by descending absolute penalized coefficient."""
    fit = cross_validate(data, ridge_config)
    ranking = rank_biomarkers(fit)
    degenerate = fit.scaling.constant[1:].copy()  # drop the treatment column
    return ScreeningOutcome(
        mode="rank",
        method="ridge_rank",
        stage1_stats=np.abs(fit.biomarker_coefs),
        ranking=ranking.order,
        degenerate=degenerate,
    )


def _rank_procedure(
    data: TrialDataset, screening: ScreeningOutcome, scheme: WeightScheme
) -> StageTwoReport:
    scan = interaction_scan(data)
    thresholds = _thresholds_by_index(
        _check_permutation(screening.ranking, data.m), scheme
    )
    tested = np.ones(data.m, dtype=bool)
    return StageTwoReport(
        rows=_rows_from_scan(scan, data.names, thresholds, tested),
        overall_alpha=scheme.overall_alpha,
        method=screening.method,
        caveat=_caveat_for(data),
    )


def univariate_rank_procedure(
    data: TrialDataset, scheme: WeightScheme | None = None
) -> StageTwoReport:
    """Marginal p-value ranking followed by the weighted stage-2 test."""
    scheme = scheme or WeightScheme()
    return _rank_procedure(data, univariate_rank_screen(data), scheme)


def ridge_rank_procedure(
    data: TrialDataset,
    ridge_config: RidgeConfig | None = None,
    scheme: WeightScheme | None = None,
) -> StageTwoReport:
    """Penalized-coefficient ranking followed by the weighted stage-2 test."""
    scheme = scheme or WeightScheme()
    return _rank_procedure(data, ridge_rank_screen(data, ridge_config), scheme)


ADJUST_METHODS = ("bonferroni", "sidak", "holm", "hochberg")


@dataclass(frozen=True)
class AdjustResult:
    """Reject flags and per-hypothesis thresholds from one correction."""

    reject: np.ndarray
    thresholds: np.ndarray
    method: str
    alpha: float


def adjust(pvalues: np.ndarray, method: str, alpha: float = 0.05) -> AdjustResult:
    """Classical family-wise corrections on a vector of p-values.

    Bonferroni and Sidak use a single shared cutoff; Holm steps down and
    Hochberg steps up through the sorted p-values against the ladder
    alpha/(m - rank). Rejection is strict (p < threshold) and ties in the
    p-values are ordered by index, so results are deterministic.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise UsageError("pvalues must be a nonempty vector")
    if np.any((p < 0) | (p > 1)):
        raise UsageError("p-values must lie in [0, 1]")
    if not 0 < alpha < 1:
        raise UsageError("alpha must lie in (0, 1)")
    m = p.size

    if method == "bonferroni":
        thresholds = np.full(m, alpha / m)
        return AdjustResult(p < thresholds, thresholds, method, alpha)
    if method == "sidak":
        thresholds = np.full(m, 1.0 - (1.0 - alpha) ** (1.0 / m))
        return AdjustResult(p < thresholds, thresholds, method, alpha)
    if method not in ("holm", "hochberg"):
        raise UsageError(f"unknown adjustment method {method!r}")

    order = np.lexsort((np.arange(m), p))
    ladder = alpha / (m - np.arange(m))
    passed = p[order] < ladder
    reject_sorted = np.zeros(m, dtype=bool)
    if method == "holm":
        # Step down: stop at the first failure.
        fails = np.flatnonzero(~passed)
        cut = fails[0] if fails.size else m
        reject_sorted[:cut] = True
    else:
        # Step up: reject through the largest passing rank.
        hits = np.flatnonzero(passed)
        if hits.size:
            reject_sorted[: hits[-1] + 1] = True

    reject = np.zeros(m, dtype=bool)
    reject[order] = reject_sorted
    thresholds = np.empty(m)
    thresholds[order] = ladder
    return AdjustResult(reject, thresholds, method, alpha)
