"""Method-comparison data: paired measurements, differences, and covariates.

The unit of analysis is a :class:`Dataset` holding the observed differences
``y = m1 - m2`` between two measurement methods, optionally the pairwise
means ``m = (m1 + m2) / 2``, and a list of typed covariate columns
(continuous or categorical).  Datasets are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

MEAN_COVARIATE_NAME = "mean"


class ValidationError(ValueError):
    """Raised when data violates a structural invariant.

    ``messages`` lists every violated invariant, one entry per violation.
    """

    def __init__(self, messages: Sequence[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass(frozen=True)
class MethodPair:
    """One subject's paired measurements from two methods (same units)."""

    m1: float
    m2: float


@dataclass(frozen=True)
class Column:
    """A named covariate column of length n.

    Continuous columns store real values.  Categorical columns store
    1-based level indices into ``levels``; level order is fixed at
    construction (for CSV input: order of first appearance).
    """

    name: str
    kind: str
    values: np.ndarray
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        errors = []
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            errors.append(f"column {self.name!r}: unknown kind {self.kind!r}")
        elif self.kind == CATEGORICAL:
            if self.levels is None or len(self.levels) < 2:
                errors.append(f"column {self.name!r}: categorical needs >= 2 levels")
            else:
                v = self.values
                if v.size and (v.min() < 1 or v.max() > len(self.levels)):
                    errors.append(
                        f"column {self.name!r}: level indices outside [1, {len(self.levels)}]"
                    )
        else:
            if self.levels is not None:
                errors.append(f"column {self.name!r}: continuous column cannot have levels")
            if not np.all(np.isfinite(self.values.astype(float))):
                errors.append(f"column {self.name!r}: non-finite values")
        if errors:
            raise ValidationError(errors)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_levels(self) -> int:
        return len(self.levels) if self.levels else 0


@dataclass(frozen=True)
class Dataset:
    """Differences plus covariates, the unit of tree fitting.

    Parameters
    ----------
    y : ndarray
        Observed differences ``m1 - m2``, length n, all finite.
    mean_values : ndarray or None
        Pairwise means ``(m1 + m2) / 2`` when available.
    covariates : tuple of Column
        Typed covariate columns, all length n, unique names.
    include_mean_as_covariate : bool
        When set (and mean values exist) the means are exposed as an extra
        continuous covariate named ``"mean"`` by :meth:`model_covariates`.
    """

    y: np.ndarray
    mean_values: np.ndarray | None = None
    covariates: tuple[Column, ...] = ()
    include_mean_as_covariate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.mean_values is not None:
            object.__setattr__(
                self, "mean_values", np.asarray(self.mean_values, dtype=float)
            )
        object.__setattr__(self, "covariates", tuple(self.covariates))
        validate_dataset(self)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def model_covariates(self) -> tuple[Column, ...]:
        """Covariates used for fitting; appends the mean column when flagged."""
        cols = self.covariates
        if self.include_mean_as_covariate and self.mean_values is not None:
            cols = cols + (
                Column(name=MEAN_COVARIATE_NAME, kind=CONTINUOUS, values=self.mean_values),
            )
        return cols

    def with_mean_covariate(self, include: bool) -> "Dataset":
        return replace(self, include_mean_as_covariate=include)


def validate_dataset(d: Dataset) -> None:
    """Check every Dataset invariant, aggregating all violations."""
    errors = []
    n = d.y.shape[0] if d.y.ndim == 1 else -1
    if d.y.ndim != 1:
        errors.append("y must be one-dimensional")
    elif n < 1:
        errors.append("dataset must contain at least one observation")
    if n >= 1 and not np.all(np.isfinite(d.y)):
        errors.append("y contains non-finite values")
    if d.mean_values is not None and d.mean_values.shape != (max(n, 0),):
        errors.append(f"mean_values length {d.mean_values.shape} != n={n}")
    names = [c.name for c in d.covariates]
    if len(set(names)) != len(names):
        dupes = sorted({x for x in names if names.count(x) > 1})
        errors.append(f"duplicate covariate names: {dupes}")
    if d.include_mean_as_covariate and MEAN_COVARIATE_NAME in names:
        errors.append(
            f"covariate name {MEAN_COVARIATE_NAME!r} collides with the mean covariate"
        )
    for c in d.covariates:
        if c.values.shape != (max(n, 0),):
            errors.append(f"covariate {c.name!r} length {c.values.shape[0]} != n={n}")
    if errors:
        raise ValidationError(errors)


def derive_differences(
    pairs: Sequence[MethodPair | tuple[float, float]],
) -> tuple[np.ndarray, np.ndarray]:
    """Turn paired measurements into differences and means.

    Returns ``(y, m)`` with ``y_i = m1_i - m2_i`` and ``m_i = (m1_i + m2_i)/2``.
    Non-finite entries are rejected with the offending 1-based row index.
    """
    if len(pairs) == 0:
        raise ValidationError(["no measurement pairs supplied"])
    m1 = np.empty(len(pairs))
    m2 = np.empty(len(pairs))
    bad = []
    for i, p in enumerate(pairs):
        a, b = (p.m1, p.m2) if isinstance(p, MethodPair) else (p[0], p[1])
        a, b = float(a), float(b)
        if not (math.isfinite(a) and math.isfinite(b)):
            bad.append(f"non-finite measurement at row {i + 1}")
        m1[i], m2[i] = a, b
    if bad:
        raise ValidationError(bad)
    return m1 - m2, (m1 + m2) / 2.0


@dataclass(frozen=True)
class CsvSchema:
    """Declares how to interpret a method-comparison CSV.

    Either ``m1``/``m2`` name the two measurement columns, or ``diff`` names
    a precomputed difference column (optionally with ``mean`` naming a
    precomputed mean column).  ``covariates`` maps column names to kinds.
    """

    m1: str | None = None
    m2: str | None = None
    diff: str | None = None
    mean: str | None = None
    covariates: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        has_pair = self.m1 is not None and self.m2 is not None
        if has_pair == (self.diff is not None):
            raise ValidationError(
                ["schema must name either both measurement columns or one difference column"]
            )
        for _, kind in self.covariates:
            if kind not in (CONTINUOUS, CATEGORICAL):
                raise ValidationError([f"unknown covariate kind {kind!r}"])


@dataclass(frozen=True)
class LoadReport:
    """Row accounting for one CSV load: raw rows = kept + dropped."""

    n_raw: int
    n_kept: int
    dropped_rows: tuple[int, ...] = ()

    @property
    def n_dropped(self) -> int:
        return len(self.dropped_rows)

    def summary(self) -> str:
        if self.n_dropped == 0:
            return f"{self.n_kept} rows loaded"
        word = "row" if self.n_dropped == 1 else "rows"
        return f"{self.n_kept} rows loaded, {self.n_dropped} {word} dropped (missing values)"


class CsvParseError(ValueError):
    """A cell could not be parsed; carries the 1-based data row and column name."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        super().__init__(f"cannot parse value {value!r} in column {column!r}, row {row}")


def load_csv(
    path,
    schema: CsvSchema,
    include_mean_as_covariate: bool = False,
) -> tuple[Dataset, LoadReport]:
    """Load a method-comparison CSV into a Dataset.

    UTF-8, comma-separated, one header row, decimal point '.', empty cell =
    missing.  Rows with any missing cell among the schema's columns are
    dropped (complete-case) and counted in the returned report.  Categorical
    levels are collected in order of first appearance among kept rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError([f"{path}: empty file (no header row)"])
        header = list(reader.fieldnames)
        needed = [c for c in (schema.m1, schema.m2, schema.diff, schema.mean) if c]
        needed += [name for name, _ in schema.covariates]
        missing_cols = [c for c in needed if c not in header]
        if missing_cols:
            raise ValidationError([f"{path}: columns not found: {missing_cols}"])
        rows = list(reader)

    kept: list[dict] = []
    dropped: list[int] = []
    for i, row in enumerate(rows, start=1):
        cells = {c: (row.get(c) or "").strip() for c in needed}
        if any(v == "" for v in cells.values()):
            dropped.append(i)
        else:
            kept.append((i, cells))

    if not kept:
        raise ValidationError([f"{path}: no complete rows left after dropping missing values"])

    def parse_float(cells, rownum, col):
        try:
            return float(cells[col])
        except ValueError:
            raise CsvParseError(rownum, col, cells[col]) from None

    if schema.diff is not None:
        y = np.array([parse_float(c, i, schema.diff) for i, c in kept])
        if schema.mean is not None:
            m = np.array([parse_float(c, i, schema.mean) for i, c in kept])
        else:
            m = None
    else:
        m1 = np.array([parse_float(c, i, schema.m1) for i, c in kept])
        m2 = np.array([parse_float(c, i, schema.m2) for i, c in kept])
        y, m = m1 - m2, (m1 + m2) / 2.0

    non_finite = [i for (i, _), v in zip(kept, y) if not math.isfinite(v)]
    if non_finite:
        raise ValidationError(
            [f"non-finite difference at row {r}" for r in non_finite]
        )

    columns = []
    for name, kind in schema.covariates:
        if kind == CONTINUOUS:
            vals = np.array([parse_float(c, i, name) for i, c in kept])
            columns.append(Column(name=name, kind=CONTINUOUS, values=vals))
        else:
            levels: list[str] = []
            index = {}
            codes = np.empty(len(kept), dtype=int)
            for j, (_, cells) in enumerate(kept):
                label = cells[name]
                if label not in index:
                    index[label] = len(levels) + 1
                    levels.append(label)
                codes[j] = index[label]
            if len(levels) < 2:
                raise ValidationError(
                    [f"categorical column {name!r} has a single level {levels[0]!r}"]
                )
            columns.append(
                Column(name=name, kind=CATEGORICAL, values=codes, levels=tuple(levels))
            )

    dataset = Dataset(
        y=y,
        mean_values=m,
        covariates=tuple(columns),
        include_mean_as_covariate=include_mean_as_covariate and m is not None,
    )
    report = LoadReport(n_raw=len(rows), n_kept=len(kept), dropped_rows=tuple(dropped))
    return dataset, report
