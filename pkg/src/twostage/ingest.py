"""Delimited-text ingestion with the trial preprocessing policy.

Rows missing the outcome or the treatment are dropped. Biomarker columns
missing in strictly more than 10% of the remaining rows are excluded;
anything still missing after that is replaced by the column mean
computed on the remaining rows. Treatment may arrive coded as any two
distinct numeric values and is recoded so that the smaller value becomes
0. Every decision lands in a :class:`PreprocessLog` so the output fully
accounts for the input.

Missing cells are empty strings or the literal token ``NA``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import TrialDataset
from .errors import (
    DataError,
    EmptyAfterFilteringError,
    NonBinaryTreatmentError,
    NonNumericCellError,
    UsageError,
)

MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class RawTable:
    """A rectangular text table: header names plus string cells."""

    header: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(set(self.header)) != len(self.header):
            raise DataError("header names must be unique")
        for i, row in enumerate(self.cells):
            if len(row) != len(self.header):
                raise DataError(
                    f"row {i} has {len(row)} cells, header has {len(self.header)}"
                )

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.header)


def read_table(path, delimiter: str = ",", id_column: bool = False) -> RawTable:
    """Read a delimited UTF-8 text file with a header row.

    ``id_column=True`` drops the first column (row identifiers).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = [tuple(cell.strip() for cell in row) for row in reader if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    start = 1 if id_column else 0
    header = rows[0][start:]
    cells = tuple(row[start:] for row in rows[1:])
    return RawTable(header=header, cells=cells)


@dataclass(frozen=True)
class ColumnRecord:
    """Fate of one input column after preprocessing."""

    name: str
    role: str  # "outcome", "treatment", "biomarker", "excluded"
    missing_fraction: float = 0.0
    n_imputed: int = 0


@dataclass(frozen=True)
class PreprocessLog:
    n_rows_in: int
    n_rows_dropped: int
    treatment_mapping: dict[float, int]
    columns: tuple[ColumnRecord, ...] = field(default_factory=tuple)

    def lines(self) -> list[str]:
        out = [
            f"rows read: {self.n_rows_in}",
            f"rows dropped (missing outcome/treatment): {self.n_rows_dropped}",
            "treatment recoding: "
            + ", ".join(f"{k:g} -> {v}" for k, v in sorted(self.treatment_mapping.items())),
        ]
        for col in self.columns:
            if col.role == "excluded":
                out.append(
                    f"column {col.name!r}: excluded "
                    f"({col.missing_fraction:.1%} missing)"
                )
            elif col.role == "biomarker" and col.n_imputed:
                out.append(
                    f"column {col.name!r}: imputed {col.n_imputed} missing "
                    f"value(s) with the column mean"
                )
        return out

    def counts(self) -> dict[str, int]:
        roles = [c.role for c in self.columns]
        return {
            "biomarkers_retained": roles.count("biomarker"),
            "biomarkers_excluded": roles.count("excluded"),
        }


def _parse_cell(cell: str, row: int, column: str) -> float:
    if cell in MISSING_TOKENS:
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise NonNumericCellError(row=row, column=column, value=cell) from None


def ingest(
    table: RawTable,
    outcome_col: str,
    treatment_col: str,
    family: str = "linear",
) -> tuple[TrialDataset, PreprocessLog]:
    """Turn a raw table into a validated dataset plus a preprocessing log."""
    for col in (outcome_col, treatment_col):
        if col not in table.header:
            raise UsageError(f"column {col!r} not found in the input header")
    if outcome_col == treatment_col:
        raise UsageError("outcome and treatment must be different columns")

    col_index = {name: k for k, name in enumerate(table.header)}
    biomarker_names = [
        name for name in table.header if name not in (outcome_col, treatment_col)
    ]
    if not biomarker_names:
        raise EmptyAfterFilteringError("no biomarker columns in the input")

    values = np.empty((table.n_rows, table.n_cols))
    for i, row in enumerate(table.cells):
        for name, k in col_index.items():
            values[i, k] = _parse_cell(row[k], i, name)

    keep = ~(
        np.isnan(values[:, col_index[outcome_col]])
        | np.isnan(values[:, col_index[treatment_col]])
    )
    n_dropped = int((~keep).sum())
    values = values[keep]
    n = values.shape[0]
    if n == 0:
        raise EmptyAfterFilteringError(
            "every row is missing the outcome or the treatment"
        )

    raw_treatment = values[:, col_index[treatment_col]]
    levels = np.unique(raw_treatment)
    if levels.size != 2:
        raise NonBinaryTreatmentError(
            f"treatment column {treatment_col!r} has {levels.size} distinct "
            f"value(s); exactly 2 required"
        )
    mapping = {float(levels[0]): 0, float(levels[1]): 1}
    treatment = (raw_treatment == levels[1]).astype(float)

    records = [
        ColumnRecord(name=outcome_col, role="outcome"),
        ColumnRecord(name=treatment_col, role="treatment"),
    ]
    kept_cols = []
    kept_names = []
    for name in biomarker_names:
        col = values[:, col_index[name]]
        n_missing = int(np.isnan(col).sum())
        fraction = n_missing / n
        # Strictly more than 10% missing excludes the column; compare in
        # integers so the boundary is exact.
        if 10 * n_missing > n:
            records.append(ColumnRecord(name, "excluded", fraction))
            continue
        if n_missing:
            col = col.copy()
            col[np.isnan(col)] = np.nanmean(col)
        records.append(ColumnRecord(name, "biomarker", fraction, n_missing))
        kept_cols.append(col)
        kept_names.append(name)

    if not kept_cols:
        raise EmptyAfterFilteringError("every biomarker column was excluded")

    data = TrialDataset(
        outcome=values[:, col_index[outcome_col]],
        treatment=treatment,
        biomarkers=np.column_stack(kept_cols),
        names=tuple(kept_names),
        family=family,
    )
    log = PreprocessLog(
        n_rows_in=table.n_rows,
        n_rows_dropped=n_dropped,
        treatment_mapping=mapping,
        columns=tuple(records),
    )
    return data, log
