"""EM for a multivariate Gaussian on incomplete data, and single stochastic imputation.

The E-step is vectorised over rows using the precision matrix ``Q = inv(Sigma)``.
For a row with missing set M, the padded matrix ``A = P Q P + (I - P)`` (``P`` the
diagonal missingness selector) has ``inv(A)`` equal to ``inv(Q_MM)`` on the missing
block and the identity elsewhere, which gives the conditional mean, conditional
covariance and the observed-block log-determinant without per-row slicing.
Inverses are computed once per distinct missingness pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NumericalError, ValidationError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    covariance: np.ndarray
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _ridge_floor(cov: np.ndarray) -> np.ndarray:
    # add delta*I when the smallest eigenvalue drops below delta = 1e-8 * trace / m
    m = cov.shape[0]
    delta = 1e-8 * np.trace(cov) / m
    if delta <= 0:
        delta = 1e-8
    if np.linalg.eigvalsh(cov)[0] < delta:
        cov = cov + delta * np.eye(m)
    return cov


def _check_values(values, mask):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValidationError(f"values must be 2-dimensional, got shape {values.shape}")
    mask = np.isnan(values) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValidationError(f"mask shape {mask.shape} != values shape {values.shape}")
    if not np.all(np.isfinite(values[~mask])):
        raise ValidationError("observed values must be finite")
    return values, mask


class _PatternCache:
    """Per-pattern padded inverses ``inv(P Q P + I - P)`` and their log-determinants."""

    def __init__(self, mask: np.ndarray):
        self.patterns, self.row_pattern, self.counts = np.unique(
            mask, axis=0, return_inverse=True, return_counts=True
        )
        self.row_pattern = self.row_pattern.ravel()

    def solve(self, prec: np.ndarray):
        P = self.patterns.astype(float)
        m = prec.shape[0]
        A = P[:, :, None] * prec[None] * P[:, None, :]
        idx = np.arange(m)
        A[:, idx, idx] += 1.0 - P
        sign, logdet = np.linalg.slogdet(A)
        if np.any(sign <= 0):
            raise NumericalError("missing-block precision is not positive definite")
        return np.linalg.inv(A), logdet


def _estep(x0: np.ndarray, mask: np.ndarray, mean: np.ndarray, cov: np.ndarray, cache: _PatternCache):
    """Conditional means, summed conditional covariances and observed-data log-likelihood."""
    n, m = x0.shape
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance is not positive definite") from None
    logdet_cov = 2.0 * np.log(np.diag(chol)).sum()
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + prec.T)
    ainv, logdet_a = cache.solve(prec)

    d = np.where(mask, 0.0, x0 - mean)
    r = d @ prec
    pr = np.where(mask, r, 0.0)
    u = np.einsum("nij,nj->ni", ainv[cache.row_pattern], pr)
    xhat = np.where(mask, mean - u, x0)

    n_obs = (~mask).sum(axis=1)
    quad = np.einsum("ni,ni->n", d, r) - np.einsum("ni,ni->n", pr, u)
    logdet_oo = logdet_cov + logdet_a[cache.row_pattern]
    ll = -0.5 * (n_obs * LOG_2PI + np.where(n_obs > 0, logdet_oo, 0.0) + quad).sum()

    P = cache.patterns.astype(float)
    cond = P[:, :, None] * ainv * P[:, None, :]
    cond_sum = np.einsum("k,kij->ij", cache.counts.astype(float), cond)
    return xhat, cond_sum, float(ll)


def fit_em(values, mask=None, max_iter: int = 200, tol: float = 1e-6) -> GaussianFit:
    """Maximum-likelihood mean and covariance of an incomplete Gaussian sample by EM.

    Parameters
    ----------
    values : (n, m) array
        Data; entries at masked cells are ignored.
    mask : (n, m) bool array, optional
        True where missing. Defaults to ``isnan(values)``.
    max_iter : int
        Maximum number of EM iterations.
    tol : float
        Stop once the relative change of the observed-data log-likelihood falls below ``tol``.

    Returns
    -------
    GaussianFit
        ``loglik_trace[i]`` is the observed-data log-likelihood at the parameters
        entering iteration ``i``; the last entry is evaluated at the returned parameters.
    """
    values, mask = _check_values(values, mask)
    if max_iter < 1 or not tol > 0:
        raise ValidationError("need max_iter >= 1 and tol > 0")
    n, m = values.shape
    if m < 1:
        raise ValidationError("need at least one column")
    n_obs = (~mask).sum(axis=0)
    if np.any(n_obs < 2):
        raise DegenerateInputError(f"columns with < 2 observed values: {np.flatnonzero(n_obs < 2).tolist()}")

    x0 = np.where(mask, 0.0, values)
    mean = x0.sum(axis=0) / n_obs
    var = (np.where(mask, 0.0, values - mean) ** 2).sum(axis=0) / n_obs
    cov = _ridge_floor(np.diag(np.where(var > 0, var, 1.0)))
    cache = _PatternCache(mask)

    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        xhat, cond_sum, ll = _estep(x0, mask, mean, cov, cache)
        trace.append(ll)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol * abs(trace[-2]):
            break
        mean = xhat.mean(axis=0)
        centered = xhat - mean
        cov = (centered.T @ centered + cond_sum) / n
        cov = _ridge_floor(0.5 * (cov + cov.T))
    else:
        trace.append(_estep(x0, mask, mean, cov, cache)[2])

    return GaussianFit(mean=mean, covariance=cov, loglik_trace=trace, iterations=it)


def conditional_moments(fit: GaussianFit, observed_idx, observed_vals):
    """Mean and covariance of the complementary coordinates given ``observed_idx``.

    Returns the marginal moments when nothing is observed.
    """
    m = fit.dim
    obs = np.asarray(list(observed_idx), dtype=int)
    vals = np.asarray(observed_vals, dtype=float).ravel()
    if obs.size != vals.size:
        raise ValidationError("observed_idx and observed_vals differ in length")
    if obs.size and (obs.min() < 0 or obs.max() >= m or np.unique(obs).size != obs.size):
        raise ValidationError("observed_idx must be distinct indices in range")
    if obs.size == m:
        raise ValidationError("observed_idx must be a strict subset of the coordinates")
    mis = np.setdiff1d(np.arange(m), obs)
    mu, S = fit.mean, fit.covariance
    if obs.size == 0:
        return mu.copy(), S.copy()
    S_oo = S[np.ix_(obs, obs)]
    S_mo = S[np.ix_(mis, obs)]
    try:
        c = np.linalg.cholesky(S_oo)
    except np.linalg.LinAlgError:
        raise NumericalError("observed-block covariance is singular") from None
    # K = S_mo inv(S_oo) via two triangular solves
    K = np.linalg.solve(c.T, np.linalg.solve(c, S_mo.T)).T
    cmean = mu[mis] + K @ (vals - mu[obs])
    ccov = S[np.ix_(mis, mis)] - K @ S_mo.T
    return cmean, 0.5 * (ccov + ccov.T)


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(c)
        return v * np.sqrt(np.clip(w, 0.0, None))


def stochastic_impute(values, mask=None, fit: GaussianFit | None = None, seed=None) -> np.ndarray:
    """Replace each masked cell by one draw from its row's conditional Gaussian.

    Observed cells are returned unchanged. The standard-normal noise is drawn
    as a full ``(n, m)`` block up front, so the output depends only on ``seed``.
    """
    values, mask = _check_values(values, mask)
    if fit is None:
        raise ValidationError("a GaussianFit is required")
    n, m = values.shape
    if fit.dim != m or fit.covariance.shape != (m, m):
        raise ValidationError(f"fit dimension {fit.dim} != number of columns {m}")
    out = np.array(values, dtype=float, copy=True)
    if not mask.any():
        return out
    z = np.random.default_rng(seed).standard_normal((n, m))
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mu, S = fit.mean, fit.covariance
    for k, pat in enumerate(patterns):
        if not pat.any():
            continue
        rows = np.flatnonzero(inverse == k)
        mis = np.flatnonzero(pat)
        obs = np.flatnonzero(~pat)
        if obs.size:
            S_oo = S[np.ix_(obs, obs)]
            S_mo = S[np.ix_(mis, obs)]
            K = np.linalg.solve(S_oo, S_mo.T).T
            cmean = mu[mis] + (values[np.ix_(rows, obs)] - mu[obs]) @ K.T
            ccov = S[np.ix_(mis, mis)] - K @ S_mo.T
        else:
            cmean = np.broadcast_to(mu, (rows.size, m))
            ccov = S
        L = _psd_sqrt(0.5 * (ccov + ccov.T))
        out[np.ix_(rows, mis)] = cmean + z[np.ix_(rows, mis)] @ L.T
    return out
