"""Bidirectional stepwise OLS selection by AIC."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import InstanceDesign, SelectorConfig, as_design, standardize

_PIVOT_TOL = 1e-10


class _OLS:
    """RSS of intercept + subset models from the Gram matrix of standardized columns."""

    def __init__(self, xs: np.ndarray, ys: np.ndarray):
        self.n = xs.shape[0]
        mean, scale = standardize(xs)
        self.live = scale > 0
        safe = np.where(self.live, scale, 1.0)
        z = np.where(self.live, (xs - mean) / safe, 0.0)
        yc = ys - ys.mean()
        self.G = z.T @ z
        self.c = z.T @ yc
        self.tss = float(yc @ yc)
        self.floor = 1e-12 * self.tss if self.tss > 0 else 1e-300

    def rss(self, subset) -> float | None:
        """None when the subset design is (numerically) rank deficient."""
        if not subset:
            return self.tss
        s = list(subset)
        if not self.live[s].all():
            return None
        try:
            L = np.linalg.cholesky(self.G[np.ix_(s, s)])
        except np.linalg.LinAlgError:
            return None
        if np.min(np.diag(L)) ** 2 < _PIVOT_TOL * self.n:
            return None
        w = np.linalg.solve(L, self.c[s])
        return max(self.tss - float(w @ w), 0.0)

    def aic(self, subset) -> float:
        rss = self.rss(subset)
        if rss is None:
            return np.inf
        return self.n * np.log(max(rss, self.floor) / self.n) + 2.0 * (len(subset) + 1)


def aic(design: InstanceDesign, subset) -> float:
    """``n ln(RSS/n) + 2 (q + 1)`` for the intercept model on ``subset`` (inf if singular)."""
    design = as_design(design)
    return _OLS(design.xs, design.ys).aic(tuple(sorted(subset)))


def select_stepwise_aic(design: InstanceDesign, cfg: SelectorConfig | None = None, seed=None) -> np.ndarray:
    """Greedy add/drop search from the intercept-only (or full) model.

    Each step takes the single move that lowers AIC the most; the search stops
    when no move improves. Moves producing a singular design are skipped.
    """
    design = as_design(design)
    n, m = design.n, design.m
    if n <= m + 2:
        raise ValidationError(f"stepwise needs n > m + 2, got n={n}, m={m}")
    start = cfg.stepwise_start if cfg is not None else "null"
    ols = _OLS(design.xs, design.ys)

    current: frozenset = frozenset()
    best = ols.aic(())
    if start == "full":
        full = frozenset(range(m))
        a = ols.aic(tuple(sorted(full)))
        if np.isfinite(a):
            current, best = full, a

    for _ in range(4 * m + 4):
        moves = [current | {j} for j in range(m) if j not in current]
        moves += [current - {j} for j in sorted(current)]
        scores = [ols.aic(tuple(sorted(s))) for s in moves]
        if not scores:
            break
        i = int(np.argmin(scores))
        if not scores[i] < best:
            break
        current, best = moves[i], scores[i]

    mask = np.zeros(m, dtype=bool)
    mask[list(current)] = True
    return mask
