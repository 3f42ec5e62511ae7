"""Exception hierarchy for the twostage package.

Three branches matter to callers: ``UsageError`` for bad arguments or
configuration, ``DataError`` for problems with the input data, and
``EstimationError`` for numerical failures inside a fit. The CLI maps
these onto distinct exit codes.
"""


class TwoStageError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(TwoStageError):
    """Invalid arguments, configuration, or call sequence."""


class DataError(TwoStageError):
    """The input data violates a documented requirement."""


class EstimationError(TwoStageError):
    """A numerical fitting routine could not produce a valid result."""


class DimensionMismatchError(DataError):
    """Array shapes passed to a fit do not agree."""


class RankDeficientError(EstimationError):
    """Design matrix is rank deficient at the working tolerance."""


class DegenerateBiomarkerError(DataError):
    """A biomarker column is constant and cannot be tested."""


class InvalidRankingError(UsageError):
    """A supplied ranking is not a permutation of the biomarker indices."""


class NoInteractionClusterError(UsageError):
    """Power is undefined: the scenario has no interacting biomarker."""


class InsufficientPairsError(UsageError):
    """Too few pairs to estimate a correlation (needs at least 3)."""


class IndexHasInteractionError(UsageError):
    """The requested biomarker carries an interaction effect, so the
    null-biomarker diagnostic does not apply to it."""


class NonBinaryTreatmentError(DataError):
    """Treatment column takes more than two distinct values."""


class NonNumericCellError(DataError):
    """A table cell could not be parsed as a number."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"non-numeric value {value!r} in column {column!r}, row {row}"
        )


class EmptyAfterFilteringError(DataError):
    """Preprocessing removed every row or every biomarker column."""
