"""Lasso by coordinate descent along a decreasing lambda path, with K-fold CV."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ._cd import cd_gram_path
from .base import InstanceDesign, SelectorConfig, as_design, standardize


@dataclass(frozen=True, eq=False)
class LassoPath:
    """Solutions on the standardized scale (columns mean 0, 1/n variance 1; y centered).

    The objective at each lambda is ``||yc - Z b||^2 / (2n) + lambda * |b|_1``.
    """

    lambdas: np.ndarray
    coef: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def coef_original(self) -> tuple[np.ndarray, np.ndarray]:
        """Slopes (L x m) and intercepts (L,) on the original covariate scale."""
        safe = np.where(self.x_scale > 0, self.x_scale, 1.0)
        b = np.where(self.x_scale > 0, self.coef / safe, 0.0)
        return b, self.y_mean - b @ self.x_mean

    def predict(self, x: np.ndarray) -> np.ndarray:
        b, a = self.coef_original()
        return a[:, None] + b @ np.asarray(x, dtype=float).T


def _moments(xs: np.ndarray, ys: np.ndarray):
    n = xs.shape[0]
    mean, scale = standardize(xs)
    safe = np.where(scale > 0, scale, 1.0)
    z = np.where(scale > 0, (xs - mean) / safe, 0.0)
    ym = ys.mean()
    yc = ys - ym
    return z.T @ z / n, z.T @ yc / n, mean, scale, ym


def lambda_max(design: InstanceDesign) -> float:
    """Smallest lambda at which every coefficient is zero: ``max_j |z_j'y| / n``."""
    design = as_design(design)
    return float(np.abs(_moments(design.xs, design.ys)[1]).max())


def default_lambdas(design: InstanceDesign, n_lambdas: int = 100, min_ratio: float | None = None) -> np.ndarray:
    design = as_design(design)
    if min_ratio is None:
        min_ratio = 1e-4 if design.n > design.m else 1e-2
    lmax = lambda_max(design)
    if lmax <= 0:
        lmax = 1.0
    return lmax * np.geomspace(1.0, min_ratio, n_lambdas)


def _check_lambdas(lambdas) -> np.ndarray:
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size == 0 or not np.all(np.isfinite(lambdas)) or np.any(lambdas <= 0):
        raise ValidationError("lambdas must be finite and positive")
    if np.any(np.diff(lambdas) >= 0):
        raise ValidationError("lambdas must be strictly descending")
    return lambdas


def lasso_path(design: InstanceDesign, lambdas) -> LassoPath:
    """Warm-started coordinate descent solutions at each of ``lambdas`` (strictly descending)."""
    design = as_design(design)
    lambdas = _check_lambdas(lambdas)
    G, c, mean, scale, ym = _moments(design.xs, design.ys)
    coef = cd_gram_path(G, c, lambdas)
    return LassoPath(lambdas=lambdas, coef=coef, x_mean=mean, x_scale=scale, y_mean=ym)


def lasso_objective(design: InstanceDesign, lam: float, coef_std: np.ndarray) -> float:
    design = as_design(design)
    G, c, *_ = _moments(design.xs, design.ys)
    yc = design.ys - design.ys.mean()
    b = np.asarray(coef_std, dtype=float)
    # ||yc - Zb||^2/(2n) expanded through the Gram matrix
    return float(0.5 * (yc @ yc / design.n) - c @ b + 0.5 * b @ G @ b + lam * np.abs(b).sum())


def kkt_residuals(design: InstanceDesign, path: LassoPath) -> np.ndarray:
    """Per-lambda worst violation of the lasso optimality conditions."""
    design = as_design(design)
    G, c, *_ = _moments(design.xs, design.ys)
    out = np.empty(path.lambdas.size)
    live = np.diag(G) > 0
    for i, (lam, b) in enumerate(zip(path.lambdas, path.coef)):
        corr = c - G @ b
        active = (b != 0) & live
        v_inactive = np.maximum(np.abs(corr[~active & live]) - lam, 0.0)
        v_active = np.abs(corr[active] - lam * np.sign(b[active]))
        out[i] = max(v_inactive.max(initial=0.0), v_active.max(initial=0.0))
    return out


@dataclass(frozen=True, eq=False)
class LassoCV:
    lambdas: np.ndarray
    cvm: np.ndarray
    cvsd: np.ndarray
    index_min: int
    index_1se: int
    path: LassoPath

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[self.index_min])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambdas[self.index_1se])


def lasso_cv(design: InstanceDesign, folds: int = 10, seed=None, n_lambdas: int = 100,
             min_ratio: float | None = None) -> LassoCV:
    """K-fold cross-validated prediction MSE along a common lambda path.

    Fold MSEs are pooled with fold-size weights; ``cvsd`` is the standard error
    of the weighted mean over folds.
    """
    design = as_design(design)
    n = design.n
    if n < folds:
        raise ValidationError(f"n={n} is smaller than the number of CV folds ({folds})")
    lambdas = default_lambdas(design, n_lambdas, min_ratio)
    rng = np.random.default_rng(seed)
    foldid = rng.permutation(np.arange(n) % folds)
    cvraw = np.empty((folds, lambdas.size))
    sizes = np.empty(folds)
    for k in range(folds):
        test = foldid == k
        train = ~test
        G, c, mean, scale, ym = _moments(design.xs[train], design.ys[train])
        path = LassoPath(lambdas, cd_gram_path(G, c, lambdas), mean, scale, ym)
        resid = path.predict(design.xs[test]) - design.ys[test]
        cvraw[k] = (resid ** 2).mean(axis=1)
        sizes[k] = test.sum()
    w = sizes / sizes.sum()
    cvm = w @ cvraw
    cvsd = np.sqrt((w @ (cvraw - cvm) ** 2) / (folds - 1))
    i_min = int(np.argmin(cvm))
    i_1se = int(np.flatnonzero(cvm <= cvm[i_min] + cvsd[i_min])[0])
    return LassoCV(lambdas, cvm, cvsd, i_min, i_1se, lasso_path(design, lambdas))


def select_lasso(design: InstanceDesign, cfg: SelectorConfig | None = None, seed=None) -> np.ndarray:
    """Variables with a nonzero coefficient at the cross-validated lambda."""
    design = as_design(design)
    cfg = cfg or SelectorConfig(kind="lasso")
    fit = lasso_cv(design, cfg.lasso_cv_folds, seed, cfg.lasso_n_lambdas, cfg.lasso_lambda_min_ratio)
    idx = fit.index_1se if cfg.lasso_rule == "one_se" else fit.index_min
    return fit.path.coef[idx] != 0
