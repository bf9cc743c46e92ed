from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from ..errors import ValidationError

SelectorKind = Literal["lasso", "stepwise_aic", "knockoff_fixed_x"]

_ALIASES = {
    "lasso": "lasso",
    "stepwise": "stepwise_aic",
    "stepwise_aic": "stepwise_aic",
    "knockoff": "knockoff_fixed_x",
    "knockoff_fixed_x": "knockoff_fixed_x",
}


@dataclass(frozen=True)
class SelectorConfig:
    """Base selector and its hyperparameters.

    ``knockoff_plus`` defaults to False: with ``q = 0.1`` the knockoff+ rule needs
    at least ``1/q = 10`` selections before it can select anything, so it never
    selects inside a subset of 6 or 10 variables. ``lasso_rule`` defaults to the
    CV-minimum lambda; the one-standard-error rule misses weak signals that
    share a subset with no other signal.
    """

    kind: SelectorKind = "lasso"
    lasso_cv_folds: int = 10
    lasso_rule: Literal["min", "one_se"] = "min"
    lasso_n_lambdas: int = 100
    lasso_lambda_min_ratio: float | None = None
    knockoff_fdr_q: float = 0.10
    knockoff_plus: bool = False
    knockoff_n_lambdas: int = 500
    stepwise_start: Literal["null", "full"] = "null"
    stepwise_direction: Literal["both"] = "both"

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise ValidationError(f"unknown selector kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 < self.knockoff_fdr_q < 1.0:
            raise ValidationError(f"knockoff_fdr_q must lie in (0, 1), got {self.knockoff_fdr_q}")
        if self.lasso_cv_folds < 2:
            raise ValidationError(f"lasso_cv_folds must be >= 2, got {self.lasso_cv_folds}")
        if self.lasso_rule not in ("min", "one_se"):
            raise ValidationError(f"lasso_rule must be 'min' or 'one_se', got {self.lasso_rule!r}")
        if self.stepwise_start not in ("null", "full"):
            raise ValidationError(f"stepwise_start must be 'null' or 'full', got {self.stepwise_start!r}")
        if self.stepwise_direction != "both":
            raise ValidationError("only bidirectional stepwise is supported")

    def min_rows(self, m: int) -> int:
        """Smallest number of complete rows on which this selector can run with ``m`` variables."""
        if self.kind == "lasso":
            return max(self.lasso_cv_folds, 3)
        if self.kind == "stepwise_aic":
            return m + 3
        return 2 * m


@dataclass(frozen=True, eq=False)
class InstanceDesign:
    """Complete covariates and response of one regression instance.

    ``column_map[j]`` is the index in the parent dataset of column ``j`` of ``xs``.
    """

    xs: np.ndarray
    ys: np.ndarray
    column_map: tuple[int, ...] | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).ravel()
        if xs.ndim != 2 or xs.shape[1] < 1:
            raise ValidationError(f"xs must be n x m with m >= 1, got shape {xs.shape}")
        if ys.shape[0] != xs.shape[0]:
            raise ValidationError(f"ys length {ys.shape[0]} != n = {xs.shape[0]}")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValidationError("instance design must be complete and finite")
        cmap = tuple(range(xs.shape[1])) if self.column_map is None else tuple(int(c) for c in self.column_map)
        if len(cmap) != xs.shape[1]:
            raise ValidationError("column_map length must equal the number of columns")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "column_map", cmap)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def m(self) -> int:
        return self.xs.shape[1]


def standardize(x: np.ndarray):
    """Column means and 1/n standard deviations; constant columns get scale 0."""
    mean = x.mean(axis=0)
    scale = np.sqrt(((x - mean) ** 2).mean(axis=0))
    tiny = 1e-12 * np.maximum(np.abs(mean), 1.0)
    scale = np.where(scale > tiny, scale, 0.0)
    return mean, scale


def as_design(design_or_x, y=None) -> InstanceDesign:
    if isinstance(design_or_x, InstanceDesign):
        return design_or_x
    return InstanceDesign(design_or_x, y)
