"""Two-stage biomarker-treatment interaction testing for randomized trials.

The package screens a biomarker panel (univariate marginal tests or a
cross-validated L2-penalized joint fit), then tests biomarker-treatment
interactions under family-wise error control, and ships a Monte Carlo
engine for power and error-rate studies plus an empirical between-stage
independence diagnostic.
"""

from .data import TrialDataset
from .diagnostics import (
    IndependenceReport,
    independence_across_biomarkers,
    independence_across_replicates,
    pearson_test,
)
from .errors import (
    DataError,
    DegenerateBiomarkerError,
    DimensionMismatchError,
    EmptyAfterFilteringError,
    EstimationError,
    IndexHasInteractionError,
    InsufficientPairsError,
    InvalidRankingError,
    NoInteractionClusterError,
    NonBinaryTreatmentError,
    NonNumericCellError,
    RankDeficientError,
    TwoStageError,
    UsageError,
)
from .ingest import PreprocessLog, RawTable, ingest, read_table
from .models import (
    CoefficientFit,
    ScanResult,
    WaldResult,
    fit_linear,
    fit_logistic,
    interaction_scan,
    interaction_test,
    marginal_scan,
    marginal_test,
)
from .procedures import (
    AdjustResult,
    ReportRow,
    ScreeningOutcome,
    StageTwoReport,
    WeightScheme,
    adjust,
    ridge_rank_procedure,
    ridge_rank_screen,
    single_step,
    stage2_bonferroni,
    univariate_rank_procedure,
    univariate_rank_screen,
    univariate_threshold_screen,
    weighted_hypothesis_test,
    weighted_thresholds,
)
from .ridge import (
    ColumnScaling,
    RidgeConfig,
    RidgeFit,
    RidgeRanking,
    RidgeSolution,
    cross_validate,
    lambda_grid,
    rank_biomarkers,
    ridge_objective,
    ridge_solve,
    standardize,
)
from .simulate import (
    STUDY_RIDGE,
    PowerRow,
    PowerTable,
    ScenarioConfig,
    cluster_discovery_power,
    fwer_estimate,
    generate,
    preset,
    run_study,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
