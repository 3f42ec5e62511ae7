"""Immutable container for randomized-trial data.

A :class:`TrialDataset` holds the outcome vector, the binary treatment
indicator, and the biomarker matrix for one trial. Validation happens once
at construction; the arrays are frozen afterwards so a dataset can be
shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DataError

VALID_FAMILIES = ("linear", "logistic")


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrialDataset:
    """Outcome, treatment arm, and biomarker panel for n participants.

    Parameters
    ----------
    outcome : array of shape (n,)
        Response variable. Must be 0/1 when ``family`` is ``"logistic"``.
    treatment : array of shape (n,)
        Arm indicator coded 0 (control) / 1 (treated).
    biomarkers : array of shape (n, m)
        Baseline covariates, one column per candidate biomarker.
    names : sequence of m labels, optional
        Column labels; generated as ``X1..Xm`` when omitted.
    family : {"linear", "logistic"}
        Outcome model family used by every downstream test.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    biomarkers: np.ndarray
    names: tuple[str, ...] = ()
    family: str = "linear"

    def __post_init__(self):
        outcome = _frozen_array(self.outcome)
        treatment = _frozen_array(self.treatment)
        biomarkers = np.atleast_2d(np.array(self.biomarkers, dtype=float))
        biomarkers.setflags(write=False)

        if outcome.ndim != 1 or treatment.ndim != 1 or biomarkers.ndim != 2:
            raise DimensionMismatchError(
                "outcome and treatment must be vectors, biomarkers a matrix"
            )
        n = outcome.shape[0]
        if n < 1 or biomarkers.shape[1] < 1:
            raise DataError("need at least one row and one biomarker column")
        if treatment.shape[0] != n or biomarkers.shape[0] != n:
            raise DimensionMismatchError(
                f"row counts disagree: outcome {n}, treatment "
                f"{treatment.shape[0]}, biomarkers {biomarkers.shape[0]}"
            )
        if not np.all(np.isin(treatment, (0.0, 1.0))):
            raise DataError("treatment entries must be coded 0/1")
        for name, arr in (("outcome", outcome), ("treatment", treatment),
                          ("biomarkers", biomarkers)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains missing or non-finite values")
        if self.family not in VALID_FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        if self.family == "logistic" and not np.all(np.isin(outcome, (0.0, 1.0))):
            raise DataError("logistic family requires a 0/1 outcome")

        names = tuple(self.names) if self.names else tuple(
            f"X{j + 1}" for j in range(biomarkers.shape[1])
        )
        if len(names) != biomarkers.shape[1]:
            raise DimensionMismatchError(
                f"{len(names)} names for {biomarkers.shape[1]} biomarker columns"
            )

        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "treatment", treatment)
        object.__setattr__(self, "biomarkers", biomarkers)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def m(self) -> int:
        return self.biomarkers.shape[1]

    def both_arms_present(self) -> bool:
        return bool(np.any(self.treatment == 0) and np.any(self.treatment == 1))
