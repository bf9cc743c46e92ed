"""Covariance-update coordinate descent for the lasso (numba kernel)."""

import numpy as np
from numba import njit


@njit(cache=True)
def cd_gram_path(G, c, lambdas, tol=1e-18, max_sweeps=100000):
    """Minimise ``0.5 b'Gb - c'b + lam * |b|_1`` along ``lambdas`` with warm starts.

    ``G`` is X'X/n and ``c`` is X'y/n for a standardized design. Coordinates with
    ``G[j, j] == 0`` (constant columns) stay at zero. Convergence is declared when
    the largest weighted squared coordinate move of a sweep is below ``tol``.
    """
    m = G.shape[0]
    L = lambdas.shape[0]
    beta = np.zeros(m)
    grad = c.copy()
    out = np.zeros((L, m))
    for l in range(L):
        lam = lambdas[l]
        for _ in range(max_sweeps):
            worst = 0.0
            for j in range(m):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                old = beta[j]
                z = grad[j] + gjj * old
                if z > lam:
                    new = (z - lam) / gjj
                elif z < -lam:
                    new = (z + lam) / gjj
                else:
                    new = 0.0
                if new != old:
                    delta = new - old
                    for i in range(m):
                        grad[i] -= G[i, j] * delta
                    beta[j] = new
                    move = gjj * delta * delta
                    if move > worst:
                        worst = move
            if worst < tol:
                break
        out[l, :] = beta
    return out
