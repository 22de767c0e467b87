"""Pure-Python coordinate-descent kernels.

Same sweep schedule and update order as the compiled ``_cd_core`` module, so
both backends return the same iterates up to floating-point summation order.
"""

from __future__ import annotations

import numpy as np


def _solve(A, x, g, lam, tol, max_sweeps):
    p = A.shape[0]
    diag = np.diag(A).tolist()
    sweeps = 0

    def update(j):
        ajj = diag[j]
        if ajj <= 0.0:
            return 0.0
        old = x[j]
        z = ajj * old - g[j]
        if z > lam:
            new = (z - lam) / ajj
        elif z < -lam:
            new = (z + lam) / ajj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            x[j] = new
            np.add(g, delta * A[j], out=g)
        return abs(delta)

    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            maxd = max(maxd, update(j))
        sweeps += 1
        if maxd <= tol:
            return sweeps, True
        active = np.flatnonzero(x).tolist()
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in active:
                maxd = max(maxd, update(j))
            sweeps += 1
            if maxd <= tol:
                break
    return sweeps, False


def cd_quadratic_l1(A, b, lam, x, tol, max_sweeps):
    g = A @ x - b
    return _solve(A, x, g, float(lam), float(tol), int(max_sweeps))


def cd_decorrelator(A, mu, tol, max_sweeps):
    p = A.shape[0]
    M = np.zeros((p, p))
    sweeps = np.zeros(p, dtype=np.int64)
    converged = np.zeros(p, dtype=bool)
    for i in range(p):
        g = np.zeros(p)
        g[i] = -1.0
        sweeps[i], converged[i] = _solve(A, M[i], g, float(mu), float(tol), int(max_sweeps))
    return M, sweeps, converged
