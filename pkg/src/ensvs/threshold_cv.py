"""Cross-validated choice of the selection-ratio threshold.

Thresholds on a grid define nested models ``{j : r_j >= t}``; each is scored by
K-fold OLS prediction error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .data import Dataset
from .errors import DegenerateInputError, NumericalError, ValidationError
from .imputation import fit_em, stochastic_impute

DEFAULT_GRID = tuple(np.round(np.arange(0.5, 1.0001, 0.1), 10))


@dataclass(frozen=True)
class ThresholdCvConfig:
    """``grid=None`` uses the distinct positive ratios plus 0.5, 0.6, ..., 1.0.

    ``screen_size=None`` means ``min(n // 2, p)``. ``rule='one_sd'`` picks the
    sparsest model whose mean CV error is within one fold-SD of the minimum.
    """

    folds: int = 5
    grid: tuple[float, ...] | None = None
    screen_size: int | None = None
    seed: int = 0
    rule: Literal["one_sd", "min"] = "one_sd"

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError(f"folds must be >= 2, got {self.folds}")
        if self.grid is not None:
            grid = tuple(float(g) for g in self.grid)
            if not grid or any(not 0.0 < g <= 1.0 for g in grid):
                raise ValidationError("grid must be nonempty with values in (0, 1]")
            object.__setattr__(self, "grid", grid)
        if self.rule not in ("one_sd", "min"):
            raise ValidationError(f"unknown rule {self.rule!r}")


def nested_models(ratios: np.ndarray, grid: Sequence[float], candidates=None) -> list[np.ndarray]:
    """Column indices with ratio at least each grid value, restricted to ``candidates``."""
    ratios = np.asarray(ratios, dtype=float)
    cand = np.arange(ratios.size) if candidates is None else np.sort(np.asarray(candidates, dtype=int))
    return [cand[ratios[cand] >= t] for t in grid]


def _ols_mse(x_train, y_train, x_test, y_test) -> float:
    a = np.column_stack([np.ones(len(y_train)), x_train])
    coef, *_ = np.linalg.lstsq(a, y_train, rcond=None)
    pred = coef[0] + x_test @ coef[1:]
    return float(np.mean((y_test - pred) ** 2))


def tune_threshold(data: Dataset, ratios, cfg: ThresholdCvConfig | None = None):
    """Choose a threshold on the ratios by K-fold CV of nested OLS models.

    Returns
    -------
    threshold : float
    cv_curve : list of (threshold, mean_mse, sd_mse)
        Feasible grid points only, in increasing threshold order.
    """
    cfg = cfg or ThresholdCvConfig()
    ratios = np.asarray(ratios, dtype=float)
    n, p = data.n, data.p
    if ratios.shape != (p,):
        raise ValidationError(f"ratios must have length p={p}")
    if n < cfg.folds:
        raise ValidationError(f"n={n} is smaller than folds={cfg.folds}")

    if cfg.grid is None:
        grid = np.union1d(ratios[ratios > 0], DEFAULT_GRID)
    else:
        grid = np.unique(cfg.grid)
    n_train = n - int(np.ceil(n / cfg.folds))

    candidates = np.flatnonzero(ratios >= grid.min())
    if candidates.size + 1 >= n_train:
        size = cfg.screen_size if cfg.screen_size is not None else min(n // 2, p)
        order = np.argsort(-ratios, kind="stable")
        candidates = order[:size]
    models = nested_models(ratios, grid, candidates)
    feasible = [i for i, mdl in enumerate(models) if mdl.size + 1 < n_train]
    if not feasible:
        raise ValidationError("no grid threshold gives a model that fits within the training folds")

    used = np.unique(np.concatenate([models[i] for i in feasible]))
    rng = np.random.default_rng(cfg.seed)
    foldid = rng.permutation(np.arange(n) % cfg.folds)
    ss = np.random.SeedSequence(cfg.seed)
    incomplete = used.size > 0 and data.mask[:, used].any()
    pos = {c: i for i, c in enumerate(used)}

    mse = np.empty((cfg.folds, len(feasible)))
    for f in range(cfg.folds):
        test = foldid == f
        train = ~test
        x = data.x[:, used]
        if incomplete:
            # impute train and test together, hiding the test outcomes from the model
            values = np.column_stack([x, data.y])
            mask = np.column_stack([data.mask[:, used], test])
            try:
                fit = fit_em(values, mask)
            except (DegenerateInputError, NumericalError) as exc:
                raise DegenerateInputError(f"joint imputation failed in fold {f}: {exc}") from exc
            seed = np.random.SeedSequence(ss.entropy, spawn_key=(f,))
            x = stochastic_impute(values, mask, fit, seed=seed)[:, :-1]
        for col, i in enumerate(feasible):
            cols = [pos[c] for c in models[i]]
            mse[f, col] = _ols_mse(x[train][:, cols], data.y[train], x[test][:, cols], data.y[test])

    mean = mse.mean(axis=0)
    sd = mse.std(axis=0, ddof=1)
    thresholds = grid[feasible]
    sizes = np.array([models[i].size for i in feasible])
    best = int(np.argmin(mean))
    if cfg.rule == "min":
        eligible = np.flatnonzero(mean <= mean[best])
    else:
        eligible = np.flatnonzero(mean <= mean[best] + sd[best])
    smallest = sizes[eligible].min()
    pick = eligible[sizes[eligible] == smallest]
    chosen = float(thresholds[pick].max())
    curve = [(float(t), float(a), float(b)) for t, a, b in zip(thresholds, mean, sd)]
    return chosen, curve
