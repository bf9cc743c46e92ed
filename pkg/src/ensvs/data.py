"""Data containers, validation and CSV ingestion.

Missing covariate cells are tracked by an explicit boolean ``mask`` (True =
missing). The underlying ``x`` array holds NaN at masked cells so that any
accidental arithmetic on them propagates visibly instead of silently using a
placeholder.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CsvFormatError, ValidationError

NA_TOKEN = "NA"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n x p covariates with a missingness mask and a fully observed response.

    Parameters
    ----------
    x : (n, p) array
        Covariates. Values at masked cells are ignored (stored as NaN).
    y : (n,) array
        Response, never missing.
    mask : (n, p) bool array, optional
        True where the covariate is missing. Defaults to ``isnan(x)``.
    column_names : sequence of str, optional
        Defaults to ``x1 .. xp``.
    response_name : str
        Header used for the response when writing CSV.
    """

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray | None = None
    column_names: tuple[str, ...] | None = None
    response_name: str = "y"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValidationError(f"x must be 2-dimensional, got shape {x.shape}")
        n, p = x.shape
        if n < 1 or p < 1:
            raise ValidationError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise ValidationError(f"y must have length n={n}, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("response y must be fully observed and finite")

        mask = np.isnan(x) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValidationError(f"mask shape {mask.shape} != x shape {x.shape}")
        observed = x[~mask]
        if not np.all(np.isfinite(observed)):
            raise ValidationError("observed covariate values must be finite")
        empty = np.flatnonzero(mask.all(axis=0))
        if empty.size:
            raise ValidationError(f"columns with no observed entry: {empty.tolist()}")

        names = self.column_names
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(p))
        names = tuple(str(c) for c in names)
        if len(names) != p:
            raise ValidationError(f"{len(names)} column names for p={p} columns")

        x = np.where(mask, np.nan, x)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def missing_fraction(self) -> float:
        return float(self.mask.mean())

    @property
    def is_complete(self) -> bool:
        return not self.mask.any()

    def with_mask(self, mask: np.ndarray) -> "Dataset":
        """Return a copy whose covariates are additionally masked where ``mask`` is True."""
        new_mask = self.mask | np.asarray(mask, dtype=bool)
        return Dataset(self.x, self.y, new_mask, self.column_names, self.response_name)

    def take_columns(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return Dataset(
            self.x[:, columns],
            self.y,
            self.mask[:, columns],
            tuple(self.column_names[j] for j in columns),
            self.response_name,
        )

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = list(rows)
        return Dataset(self.x[rows], self.y[rows], self.mask[rows], self.column_names, self.response_name)


@dataclass(frozen=True)
class CoefficientVector:
    beta: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(np.asarray(self.beta, dtype=float).ravel()))

    def __len__(self):
        return self.beta.shape[0]


def complete_rows(d: Dataset, columns: Iterable[int] | None = None) -> list[int]:
    """Ascending indices of rows with no masked entry among ``columns`` (all columns if None)."""
    cols = np.arange(d.p) if columns is None else np.asarray(list(columns), dtype=int)
    if cols.size and (cols.min() < 0 or cols.max() >= d.p):
        raise ValidationError(f"column indices out of range for p={d.p}")
    if cols.size == 0:
        return list(range(d.n))
    return np.flatnonzero(~d.mask[:, cols].any(axis=1)).tolist()


def load_csv(path: str | Path, response_column: str, na_token: str = NA_TOKEN) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Cells equal to ``na_token`` become masked covariate cells. The response
    column may not contain ``na_token``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, header row expected") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise ValidationError(f"{path}: response column {response_column!r} not in header {header}")
        yi = header.index(response_column)
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise CsvFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
            vals = []
            for col, cell in enumerate(row):
                cell = cell.strip()
                if cell == na_token:
                    if col == yi:
                        raise ValidationError(
                            f"{path}: line {lineno}: response {response_column!r} is missing"
                        )
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: line {lineno}, column {header[col]!r}: cannot parse {cell!r} as a number"
                    ) from None
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    xcols = [j for j in range(width) if j != yi]
    x = arr[:, xcols]
    return Dataset(
        x=x,
        y=arr[:, yi],
        mask=np.isnan(x),
        column_names=tuple(header[j] for j in xcols),
        response_name=response_column,
    )


def save_csv(d: Dataset, path: str | Path, na_token: str = NA_TOKEN) -> None:
    """Write ``d`` with covariates first and the response last; masked cells become ``na_token``.

    Floats are written with ``repr`` so that :func:`load_csv` reproduces them bit for bit.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.column_names, d.response_name])
        for i in range(d.n):
            cells = [na_token if d.mask[i, j] else repr(float(d.x[i, j])) for j in range(d.p)]
            cells.append(repr(float(d.y[i])))
            w.writerow(cells)
