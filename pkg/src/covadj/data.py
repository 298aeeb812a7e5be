"""Subject-level trial data and design matrices.

A :class:`TrialDataset` holds a binary outcome, a binary treatment indicator
and an ordered set of numeric baseline covariates.  The declared covariate
order doubles as the drop order used when a logistic fit fails: the last
declared covariate is removed first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RANK_TOL = 1e-10


class DataError(ValueError):
    """Base class for problems with the input data."""


class MissingColumn(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class NonBinaryTreatment(DataError):
    pass


class UnparsableNumeric(DataError):
    pass


@dataclass(frozen=True)
class TrialRecord:
    outcome: int
    treatment: int
    covariates: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Outcome ``y``, treatment ``z`` and covariate matrix ``w`` for ``n`` subjects.

    Arrays are stored column-wise and made read-only; use :meth:`records` for
    the row view.
    """

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        z = np.array(self.z, dtype=float).ravel()
        w = np.array(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(len(y), -1) if w.size else np.empty((len(y), 0))
        names = tuple(self.covariate_names)
        if not names and w.shape[1]:
            names = tuple(f"x{j + 1}" for j in range(w.shape[1]))
        if len(z) != len(y) or w.shape[0] != len(y):
            raise DataError("outcome, treatment and covariates must have the same length")
        if w.shape[1] != len(names):
            raise DataError(f"{w.shape[1]} covariate columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise DataError("duplicate covariate names")
        if not np.isin(y, (0.0, 1.0)).all():
            raise NonBinaryOutcome("outcome must be coded 0/1")
        if not np.isin(z, (0.0, 1.0)).all():
            raise NonBinaryTreatment("treatment must be coded 0/1")
        if not np.isfinite(w).all():
            raise UnparsableNumeric("covariates must be finite (missing values are not allowed)")
        if len(y) < 2:
            raise DataError("need at least two subjects")
        if z.min() == z.max():
            raise DataError("both treatment arms must be nonempty")
        for arr in (y, z, w):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def arm_sizes(self) -> tuple[int, int]:
        """(control, treated) counts."""
        n1 = int(self.z.sum())
        return self.n - n1, n1

    def records(self) -> list[TrialRecord]:
        return [
            TrialRecord(int(yi), int(zi), tuple(float(v) for v in wi))
            for yi, zi, wi in zip(self.y, self.z, self.w)
        ]

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord], covariate_names: Sequence[str]) -> "TrialDataset":
        k = len(covariate_names)
        for i, r in enumerate(records):
            if len(r.covariates) != k:
                raise DataError(f"record {i}: expected {k} covariates, got {len(r.covariates)}")
        w = np.array([r.covariates for r in records], dtype=float).reshape(len(records), k)
        return cls(
            y=np.array([r.outcome for r in records]),
            z=np.array([r.treatment for r in records]),
            w=w,
            covariate_names=tuple(covariate_names),
        )

    def subset(self, mask: np.ndarray) -> "TrialDataset":
        mask = np.asarray(mask, dtype=bool)
        return TrialDataset(self.y[mask], self.z[mask], self.w[mask], self.covariate_names)

    def take(self, order: np.ndarray) -> "TrialDataset":
        """Rows reordered (or resampled) by integer index."""
        return TrialDataset(self.y[order], self.z[order], self.w[order], self.covariate_names)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """``X`` with rows ``(1, z_i, w_i)`` restricted to the retained covariates."""

    X: np.ndarray
    covariates: tuple[str, ...]

    @property
    def column_roles(self) -> list[str]:
        return ["intercept", "treatment"] + [f"covariate({c})" for c in self.covariates]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def counterfactual(self, treatment: int) -> np.ndarray:
        """Copy of ``X`` with the treatment column forced to ``treatment``."""
        Xc = self.X.copy()
        Xc[:, 1] = treatment
        return Xc


def build_design(data: TrialDataset, retained: Sequence[str] | None = None) -> DesignMatrix:
    """Design matrix with intercept, treatment, then ``retained`` in dataset order.

    ``retained=None`` keeps every covariate.
    """
    names = data.covariate_names
    if retained is None:
        keep = list(names)
    else:
        unknown = set(retained) - set(names)
        if unknown:
            raise ValueError(f"unknown covariates: {sorted(unknown)}")
        keep = [c for c in names if c in set(retained)]
    idx = [names.index(c) for c in keep]
    X = np.empty((data.n, 2 + len(idx)))
    X[:, 0] = 1.0
    X[:, 1] = data.z
    X[:, 2:] = data.w[:, idx]
    X.flags.writeable = False
    return DesignMatrix(X, tuple(keep))


def dependent_columns(X: np.ndarray, tol: float = RANK_TOL) -> list[int]:
    """Indices of columns that are linearly dependent on earlier columns.

    Columns are scanned left to right, so the intercept and treatment columns
    are never reported ahead of a covariate they are collinear with.  Rank is
    judged on unit-norm columns by singular values relative to the largest.
    """
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    kept: list[int] = []
    dependent = []
    for j in range(X.shape[1]):
        if norms[j] == 0.0:
            dependent.append(j)
            continue
        cols = kept + [j]
        A = X[:, cols] / norms[cols]
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= tol * s[0]:
            dependent.append(j)
        else:
            kept.append(j)
    return dependent


def check_rank(design: DesignMatrix) -> tuple[bool, list[str]]:
    """Return ``(full_rank, dependent_column_roles)``."""
    dep = dependent_columns(design.X)
    roles = design.column_roles
    return not dep, [roles[j] for j in dep]


def _parse_binary(value: str, row: int, col: str, exc: type[DataError]) -> int:
    try:
        v = float(value)
    except ValueError:
        raise exc(f"row {row}, column {col!r}: {value!r} is not 0/1") from None
    if v not in (0.0, 1.0):
        raise exc(f"row {row}, column {col!r}: {value!r} is not 0/1")
    return int(v)


def load_csv(
    path: str | Path,
    outcome_col: str,
    treatment_col: str,
    covariate_cols: Sequence[str] = (),
    arms: tuple[str, str] | None = None,
) -> TrialDataset:
    """Read a header-first, comma-separated file into a :class:`TrialDataset`.

    Parameters
    ----------
    path
        CSV file with a header row.
    outcome_col, treatment_col
        Columns holding the 0/1 outcome and treatment.
    covariate_cols
        Numeric covariate columns, in model order.
    arms
        ``(treated_label, control_label)`` for files with more than two arms.
        Rows whose treatment value is neither label are skipped, and the
        treatment column is then read as text rather than 0/1.

    Row numbers in error messages count data rows from 1.
    """
    if arms is not None and arms[0] == arms[1]:
        raise DataError("the two arms must differ")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (outcome_col, treatment_col, *covariate_cols):
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
        ys, zs, ws = [], [], []
        for row_no, row in enumerate(reader, start=1):
            label = (row[treatment_col] or "").strip()
            if arms is not None:
                if label not in arms:
                    continue
                zs.append(1 if label == arms[0] else 0)
            else:
                zs.append(_parse_binary(label, row_no, treatment_col, NonBinaryTreatment))
            ys.append(_parse_binary((row[outcome_col] or "").strip(), row_no, outcome_col, NonBinaryOutcome))
            vals = []
            for col in covariate_cols:
                raw = (row[col] or "").strip()
                try:
                    v = float(raw)
                except ValueError:
                    raise UnparsableNumeric(f"row {row_no}, column {col!r}: cannot parse {raw!r}") from None
                if not np.isfinite(v):
                    raise UnparsableNumeric(f"row {row_no}, column {col!r}: non-finite value {raw!r}")
                vals.append(v)
            ws.append(vals)
    w = np.array(ws, dtype=float).reshape(len(ys), len(covariate_cols))
    return TrialDataset(np.array(ys), np.array(zs), w, tuple(covariate_cols))


def write_csv(data: TrialDataset, path: str | Path, outcome_col: str = "y", treatment_col: str = "z") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([outcome_col, treatment_col, *data.covariate_names])
        for yi, zi, wi in zip(data.y, data.z, data.w):
            writer.writerow([int(yi), int(zi), *(repr(float(v)) for v in wi)])
