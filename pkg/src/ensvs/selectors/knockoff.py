"""Fixed-X equicorrelated knockoffs with the lasso signed-max statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError, ValidationError
from ._cd import cd_gram_path
from .base import InstanceDesign, SelectorConfig, as_design


@dataclass(frozen=True, eq=False)
class KnockoffDesign:
    x: np.ndarray
    knockoffs: np.ndarray
    y: np.ndarray
    s: np.ndarray
    gram: np.ndarray

    @property
    def augmented(self) -> np.ndarray:
        return np.hstack([self.x, self.knockoffs])


def knockoff_construct(design: InstanceDesign, seed=None) -> KnockoffDesign:
    """Equicorrelated fixed-X knockoffs for the centered, unit-norm columns of ``design``.

    With ``Sigma = X'X`` and ``s_j = min(2 lambda_min(Sigma), 1)`` the knockoffs
    satisfy ``Xk'Xk = Sigma`` and ``X'Xk = Sigma - diag(s)``. The orthogonal
    complement is taken orthogonal to the intercept as well when ``n > 2m``, so
    knockoff columns are centered too.

    Any orthonormal complement gives valid knockoffs. With ``seed=None`` it is
    the trailing block of a complete QR, which is concentrated on a few fixed
    rows; with a seed it is drawn uniformly, so repeated instances on the same
    rows do not share one knockoff noise pattern.
    """
    design = as_design(design)
    n, m = design.n, design.m
    if n < 2 * m:
        raise ValidationError(f"fixed-X knockoffs need n >= 2m, got n={n}, m={m}")
    xc = design.xs - design.xs.mean(axis=0)
    norms = np.sqrt((xc ** 2).sum(axis=0))
    if np.any(norms <= 1e-12 * max(1.0, float(np.abs(design.xs).max()))):
        raise DegenerateInputError("constant column in knockoff design")
    x = xc / norms
    sigma = x.T @ x
    lam_min = np.linalg.eigvalsh(sigma)[0]
    if lam_min <= 1e-10:
        raise DegenerateInputError(f"design Gram matrix is degenerate (lambda_min={lam_min:.3g})")
    s_val = min(2.0 * lam_min, 1.0)
    s = np.full(m, s_val)
    sigma_inv = np.linalg.inv(sigma)
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)

    a = 2.0 * np.diag(s) - (s[:, None] * sigma_inv * s[None, :])
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    c = np.sqrt(np.clip(w, 0.0, None))[:, None] * v.T

    basis = np.column_stack([np.ones(n), x]) if n > 2 * m else x
    r = basis.shape[1]
    if seed is None:
        u_perp = np.linalg.qr(basis, mode="complete")[0][:, r:r + m]
    else:
        qb = np.linalg.qr(basis)[0]
        g = np.random.default_rng(seed).standard_normal((n, m))
        g -= qb @ (qb.T @ g)
        g -= qb @ (qb.T @ g)  # second pass for orthogonality to working precision
        u_perp = np.linalg.qr(g)[0]

    knock = x - x @ (sigma_inv * s[None, :]) + u_perp @ c
    return KnockoffDesign(x=x, knockoffs=knock, y=design.ys - design.ys.mean(), s=s, gram=sigma)


def entry_lambdas(x: np.ndarray, y: np.ndarray, n_lambdas: int = 500) -> np.ndarray:
    """Largest grid lambda at which each column enters the lasso path (0 if it never does).

    The grid is geometric from ``max|x'y|`` down to ``max|x'y| / 2000``.
    """
    G = x.T @ x
    c = x.T @ y
    lmax = float(np.abs(c).max())
    out = np.zeros(x.shape[1])
    if lmax <= 0:
        return out
    lambdas = lmax * (1.0 / 2000.0) ** (np.arange(n_lambdas) / n_lambdas)
    # only the nonzero pattern matters here
    coef = cd_gram_path(G, c, lambdas, 1e-10 * float(np.diag(G).max()))
    nz = coef != 0
    entered = nz.any(axis=0)
    first = np.argmax(nz, axis=0)
    out[entered] = lambdas[first[entered]]
    return out


def signed_max_statistic(kd: KnockoffDesign, n_lambdas: int = 500) -> np.ndarray:
    m = kd.x.shape[1]
    z = entry_lambdas(kd.augmented, kd.y, n_lambdas)
    orig, knock = z[:m], z[m:]
    return np.maximum(orig, knock) * np.sign(orig - knock)


def knockoff_threshold(W: np.ndarray, q: float, offset: int = 1) -> float:
    """Smallest ``t`` in ``{|W_j|}`` with ``(offset + #{W <= -t}) / max(1, #{W >= t}) <= q``.

    ``offset=1`` is knockoff+, ``offset=0`` the plain knockoff rule. Returns inf
    when no such ``t`` exists.
    """
    W = np.asarray(W, dtype=float)
    for t in np.unique(np.abs(W[W != 0])):
        if (offset + np.sum(W <= -t)) / max(1, np.sum(W >= t)) <= q:
            return float(t)
    return np.inf


def select_knockoff(design: InstanceDesign, cfg: SelectorConfig | None = None, seed=None) -> np.ndarray:
    design = as_design(design)
    cfg = cfg or SelectorConfig(kind="knockoff_fixed_x")
    W = signed_max_statistic(knockoff_construct(design, seed), cfg.knockoff_n_lambdas)
    t = knockoff_threshold(W, cfg.knockoff_fdr_q, offset=1 if cfg.knockoff_plus else 0)
    return W >= t
