"""Regression data container, CSV ingestion and validation.

Index conventions used across the package:

* rows ``t = 0 .. n-1`` are observations;
* ``x_delta`` columns ``0 .. k_delta-1`` are nuisance covariates;
* ``x_theta`` columns ``0 .. k_theta-1`` are test covariates, and parsimonious
  model ``i`` regresses ``y`` on ``[x_delta, x_theta[:, i]]``.

No intercept is added anywhere. Users wanting one add a column of ones to the
nuisance block.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Base class for data ingestion problems."""


class SchemaError(DatasetError):
    """A column named in the schema is absent or roles overlap."""


class ParseError(DatasetError):
    """A cell could not be read as a finite float."""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(DatasetError):
    """The assembled dataset violates an invariant."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


@dataclass(frozen=True)
class Violation:
    invariant: str
    index: int | None
    message: str


@dataclass(frozen=True)
class ColumnSchema:
    """Role assignment of CSV columns."""

    response: str
    nuisance: tuple[str, ...] = ()
    test: tuple[str, ...] = ()

    @classmethod
    def coerce(cls, schema: ColumnSchema | Mapping) -> ColumnSchema:
        if isinstance(schema, ColumnSchema):
            return schema
        try:
            response = schema["response"]
        except KeyError:
            raise SchemaError("schema must name a 'response' column") from None
        return cls(
            response=str(response),
            nuisance=tuple(schema.get("nuisance", ()) or ()),
            test=tuple(schema.get("test", ()) or ()),
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response plus nuisance and test covariate blocks.

    Arrays are copied on construction and made read-only. ``x_theta`` is kept
    in column-major order because every parsimonious model reads one column.

    Parameters
    ----------
    y : array-like of shape (n,)
    x_delta : array-like of shape (n, k_delta), possibly with k_delta = 0
    x_theta : array-like of shape (n, k_theta)
    nuisance_names, test_names : optional column labels
    """

    y: np.ndarray
    x_delta: np.ndarray
    x_theta: np.ndarray
    nuisance_names: tuple[str, ...] = field(default=())
    test_names: tuple[str, ...] = field(default=())
    response_name: str = "y"

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        n = y.shape[0]
        xd = self.x_delta
        if xd is None:
            xd = np.empty((n, 0))
        xd = np.array(xd, dtype=np.float64, order="F")
        if xd.ndim == 1:
            xd = xd.reshape(n, -1, order="F")
        xt = np.array(self.x_theta, dtype=np.float64, order="F")
        if xt.ndim == 1:
            xt = xt.reshape(n, 1)
        if xd.ndim != 2 or xt.ndim != 2:
            raise DatasetError("covariate blocks must be 2-dimensional")
        if xd.shape[0] != n or xt.shape[0] != n:
            raise DatasetError(
                f"row counts differ: y has {n}, x_delta {xd.shape[0]}, "
                f"x_theta {xt.shape[0]}"
            )
        if xt.shape[1] < 1:
            raise DatasetError("x_theta needs at least one test column")
        dn = tuple(self.nuisance_names) or tuple(f"d{j + 1}" for j in range(xd.shape[1]))
        tn = tuple(self.test_names) or tuple(f"t{j + 1}" for j in range(xt.shape[1]))
        if len(dn) != xd.shape[1] or len(tn) != xt.shape[1]:
            raise DatasetError("column name count does not match block width")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x_delta", _frozen(xd))
        object.__setattr__(self, "x_theta", _frozen(xt))
        object.__setattr__(self, "nuisance_names", dn)
        object.__setattr__(self, "test_names", tn)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k_delta(self) -> int:
        return self.x_delta.shape[1]

    @property
    def k_theta(self) -> int:
        return self.x_theta.shape[1]

    def model_design(self, i: int) -> np.ndarray:
        """Regressor block ``[x_delta, x_theta[:, i]]`` of parsimonious model ``i``."""
        if not 0 <= i < self.k_theta:
            raise IndexError(f"model index {i} outside [0, {self.k_theta})")
        return np.column_stack([self.x_delta, self.x_theta[:, i]])

    def with_response(self, y: np.ndarray) -> Dataset:
        return Dataset(
            y, self.x_delta, self.x_theta,
            self.nuisance_names, self.test_names, self.response_name,
        )


def validate(ds: Dataset) -> list[Violation]:
    """Report every invariant violation of ``ds``; never raises."""
    out: list[Violation] = []
    if not np.all(np.isfinite(ds.y)):
        bad = int(np.flatnonzero(~np.isfinite(ds.y))[0])
        out.append(Violation("finite", bad, f"response '{ds.response_name}' has a non-finite value at row {bad}"))
    for block, names in ((ds.x_delta, ds.nuisance_names), (ds.x_theta, ds.test_names)):
        finite = np.isfinite(block)
        for j in np.flatnonzero(~finite.all(axis=0)):
            out.append(Violation("finite", int(j), f"column '{names[j]}' has non-finite values"))
        zero = ~np.any(block != 0.0, axis=0)
        for j in np.flatnonzero(zero):
            out.append(Violation("nonzero_column", int(j), f"column '{names[j]}' is identically zero"))
    if ds.n < ds.k_delta + 2:
        out.append(Violation(
            "degrees_of_freedom", None,
            f"n = {ds.n} < k_delta + 2 = {ds.k_delta + 2}: parsimonious models have no residual degree of freedom",
        ))
    return out


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"row {row}, column '{column}': cannot parse {text!r} as a number", row, column
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column '{column}': non-finite value {text!r}", row, column)
    return value


def load_csv(path: str | Path, schema: ColumnSchema | Mapping) -> Dataset:
    """Read a header-row CSV into a :class:`Dataset`.

    Row numbers in error messages are 1-based data rows (the header is row 0).

    Raises
    ------
    SchemaError
        A schema column is missing from the header, or a column has two roles.
    ParseError
        A cell is empty, non-numeric or non-finite.
    ValidationError
        The assembled dataset violates a :func:`validate` invariant.
    """
    schema = ColumnSchema.coerce(schema)
    if not schema.test:
        raise SchemaError("schema names no test columns")
    wanted = [schema.response, *schema.nuisance, *schema.test]
    if len(set(wanted)) != len(wanted):
        raise SchemaError("a column is assigned more than one role")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        pos = {name: j for j, name in enumerate(header)}
        missing = [c for c in wanted if c not in pos]
        if missing:
            raise SchemaError(f"columns not in header: {', '.join(missing)}")
        cols = [pos[c] for c in wanted]
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            vals = []
            for name, j in zip(wanted, cols):
                cell = record[j].strip() if j < len(record) else ""
                if cell == "":
                    raise ParseError(f"row {r}, column '{name}': missing value", r, name)
                vals.append(_parse_cell(cell, r, name))
            rows.append(vals)

    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(wanted))
    kd = len(schema.nuisance)
    ds = Dataset(
        y=data[:, 0],
        x_delta=data[:, 1:1 + kd],
        x_theta=data[:, 1 + kd:],
        nuisance_names=schema.nuisance,
        test_names=schema.test,
        response_name=schema.response,
    )
    problems = validate(ds)
    if problems:
        raise ValidationError(problems)
    return ds


def save_csv(ds: Dataset, path: str | Path) -> ColumnSchema:
    """Write ``ds`` with 17 significant digits; returns the schema to reload it."""
    header = [ds.response_name, *ds.nuisance_names, *ds.test_names]
    data = np.column_stack([ds.y, ds.x_delta, ds.x_theta])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])
    return ColumnSchema(ds.response_name, ds.nuisance_names, ds.test_names)


def header_columns(path: str | Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh))]


def schema_from_header(
    path: str | Path, response: str, nuisance: Sequence[str] = (), test: Sequence[str] | None = None,
) -> ColumnSchema:
    """Build a schema, taking every remaining column as a test column when ``test`` is None."""
    if test is None:
        used = {response, *nuisance}
        test = [c for c in header_columns(path) if c not in used]
    return ColumnSchema(response, tuple(nuisance), tuple(test))
