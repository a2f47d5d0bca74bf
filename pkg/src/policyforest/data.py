"""Observational-data containers, validation, and CSV ingestion.

The core object is :class:`Dataset`: ``n`` units with real covariates,
a binary treatment indicator, and a real outcome.  Datasets are immutable
after construction and safe for concurrent reads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Base class for data-layer failures."""


class SchemaError(DataError):
    """A required column is missing or the schema is inconsistent."""


class ParseError(DataError):
    """A cell could not be parsed; the message cites the data row."""


class LengthMismatchError(DataError):
    """Covariates, treatments, and outcomes disagree on length."""


class TreatmentValueError(DataError):
    """A treatment entry is not exactly 0 or 1."""


class NonFiniteError(DataError):
    """A covariate or outcome is NaN or infinite."""


class IndexSetError(DataError):
    """A row-index set contains duplicates or out-of-range entries."""


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of (covariates, treatment, outcome) triples.

    Attributes
    ----------
    covariates : ndarray of shape (n, p)
    treatments : ndarray of shape (n,), entries in {0, 1}
    outcomes : ndarray of shape (n,)
    """

    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        d = np.asarray(self.treatments)
        y = np.asarray(self.outcomes, dtype=np.float64)
        for name, arr in (("covariates", x), ("treatments", d), ("outcomes", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


def validate(ds: Dataset) -> None:
    """Check every Dataset invariant, raising a distinct error per violation.

    Raises
    ------
    LengthMismatchError
        Container lengths disagree, or the dataset is empty (n < 1 or p < 1).
    TreatmentValueError
        Some treatment entry is not exactly 0 or 1.
    NonFiniteError
        Some covariate or outcome is NaN or infinite.
    """
    n = ds.covariates.shape[0]
    if ds.treatments.shape != (n,) or ds.outcomes.shape != (n,):
        raise LengthMismatchError(
            f"inconsistent lengths: covariates n={n}, "
            f"treatments {ds.treatments.shape}, outcomes {ds.outcomes.shape}"
        )
    if n < 1 or ds.p < 1:
        raise LengthMismatchError(f"dataset must have n >= 1 and p >= 1, got n={n}, p={ds.p}")
    d = np.asarray(ds.treatments)
    if not np.all((d == 0) | (d == 1)):
        bad = int(np.argmax(~((d == 0) | (d == 1))))
        raise TreatmentValueError(f"treatment must be 0 or 1; offending entry at index {bad}")
    if not np.all(np.isfinite(ds.covariates)):
        raise NonFiniteError("covariates contain non-finite values")
    if not np.all(np.isfinite(ds.outcomes)):
        raise NonFiniteError("outcomes contain non-finite values")


def check_index_set(indices: np.ndarray, n: int) -> np.ndarray:
    """Validate an ordered set of distinct row indices into a length-n sample."""
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise IndexSetError("index set must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexSetError(f"index out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise IndexSetError("index set contains duplicates")
    return idx


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for CSV ingestion, declared by name.

    ``covariates=None`` takes every non-role column in header order.
    """

    outcome: str = "y"
    treatment: str = "d"
    covariates: tuple[str, ...] | None = None


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"row {row}: column '{col}': cannot parse '{cell}' as a number") from None
    if not np.isfinite(value):
        raise ParseError(f"row {row}: column '{col}': non-finite value '{cell}'")
    return value


def _parse_treatment(cell: str, row: int, col: str) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise ParseError(
            f"row {row}: column '{col}': treatment must be integer 0 or 1, got '{cell}'"
        ) from None
    if value not in (0, 1):
        raise ParseError(f"row {row}: column '{col}': treatment must be 0 or 1, got {value}")
    return value


def read_csv_columns(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a UTF-8 CSV into (header, data rows of raw strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        rows = [row for row in reader if row]
    return header, rows


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Load a Dataset from a comma-separated file with one header row.

    Row numbers in parse errors are 1-based over data rows (the header
    is row 0).  Row order and covariate header order are preserved.

    Raises
    ------
    SchemaError
        A configured column is missing, or no covariate column remains.
    ParseError
        A non-numeric cell, a non-finite value, or a treatment outside {0, 1}.
    """
    header, rows = read_csv_columns(path)
    positions = {name: i for i, name in enumerate(header)}
    for role, name in (("outcome", schema.outcome), ("treatment", schema.treatment)):
        if name not in positions:
            raise SchemaError(f"{path}: missing {role} column '{name}'")
    if schema.covariates is None:
        cov_names = [c for c in header if c not in (schema.outcome, schema.treatment)]
    else:
        cov_names = list(schema.covariates)
        for name in cov_names:
            if name not in positions:
                raise SchemaError(f"{path}: missing covariate column '{name}'")
    if not cov_names:
        raise SchemaError(f"{path}: no covariate columns")

    cov_pos = [positions[c] for c in cov_names]
    y_pos = positions[schema.outcome]
    d_pos = positions[schema.treatment]
    n = len(rows)
    x = np.empty((n, len(cov_names)), dtype=np.float64)
    d = np.empty(n, dtype=np.int64)
    y = np.empty(n, dtype=np.float64)
    for i, row in enumerate(rows):
        rownum = i + 1
        if len(row) != len(header):
            raise ParseError(f"row {rownum}: expected {len(header)} cells, got {len(row)}")
        for j, pos in enumerate(cov_pos):
            x[i, j] = _parse_float(row[pos], rownum, cov_names[j])
        d[i] = _parse_treatment(row[d_pos], rownum, schema.treatment)
        y[i] = _parse_float(row[y_pos], rownum, schema.outcome)

    ds = Dataset(covariates=x, treatments=d, outcomes=y)
    validate(ds)
    return ds


def covariate_names(p: int, schema: CsvSchema = CsvSchema()) -> list[str]:
    """Default covariate column names x0..x{p-1} unless the schema fixes them."""
    if schema.covariates is not None:
        if len(schema.covariates) != p:
            raise SchemaError(f"schema names {len(schema.covariates)} covariates, dataset has {p}")
        return list(schema.covariates)
    return [f"x{j}" for j in range(p)]


def save_csv(ds: Dataset, path: str | Path, schema: CsvSchema = CsvSchema(),
             extra: dict[str, np.ndarray] | None = None) -> None:
    """Write a Dataset (plus optional extra columns) as UTF-8 CSV.

    Floats are written with ``repr`` so a round trip through
    :func:`load_csv` reproduces values exactly.
    """
    names = covariate_names(ds.p, schema)
    extra = extra or {}
    header = names + [schema.treatment, schema.outcome] + list(extra)
    for name, column in extra.items():
        if len(column) != ds.n:
            raise LengthMismatchError(f"extra column '{name}' has length {len(column)} != n={ds.n}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.covariates[i]]
            row.append(str(int(ds.treatments[i])))
            row.append(repr(float(ds.outcomes[i])))
            row.extend(repr(float(column[i])) for column in extra.values())
            writer.writerow(row)
