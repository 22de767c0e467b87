# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled coordinate-descent kernels.

Both kernels minimise  1/2 x'Ax - b'x + lam*||x||_1  for a symmetric PSD
``A`` held in C order, keeping the gradient ``g = Ax - b`` up to date after
every nonzero coordinate move.  Sweeps alternate between one pass over all
coordinates and repeated passes over the current nonzero set.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


cdef inline double _update(const double[:, ::1] A, double[::1] x, double[::1] g,
                           Py_ssize_t j, double lam, Py_ssize_t p) nogil:
    cdef double ajj = A[j, j]
    cdef double old, new, delta
    cdef Py_ssize_t k
    if ajj <= 0.0:
        return 0.0
    old = x[j]
    new = _soft(ajj * old - g[j], lam) / ajj
    delta = new - old
    if delta != 0.0:
        x[j] = new
        for k in range(p):
            g[k] += delta * A[j, k]
    return fabs(delta)


cdef int _solve(const double[:, ::1] A, double[::1] x, double[::1] g,
                Py_ssize_t[::1] active, double lam, double tol,
                int max_sweeps, int* sweeps_out) nogil:
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t j, m, n_active
    cdef int sweeps = 0
    cdef double d, maxd
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            d = _update(A, x, g, j, lam, p)
            if d > maxd:
                maxd = d
        sweeps += 1
        if maxd <= tol:
            sweeps_out[0] = sweeps
            return 1
        n_active = 0
        for j in range(p):
            if x[j] != 0.0:
                active[n_active] = j
                n_active += 1
        while sweeps < max_sweeps:
            maxd = 0.0
            for m in range(n_active):
                d = _update(A, x, g, active[m], lam, p)
                if d > maxd:
                    maxd = d
            sweeps += 1
            if maxd <= tol:
                break
    sweeps_out[0] = sweeps
    return 0


def cd_quadratic_l1(const double[:, ::1] A, const double[::1] b, double lam,
                    double[::1] x, double tol, int max_sweeps):
    """Run coordinate descent in place on ``x``; return (sweeps, converged)."""
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t i, k
    cdef int sweeps = 0
    cdef int ok
    cdef double[::1] g = np.empty(p)
    cdef Py_ssize_t[::1] active = np.empty(p, dtype=np.intp)
    with nogil:
        for i in range(p):
            g[i] = -b[i]
        for k in range(p):
            if x[k] != 0.0:
                for i in range(p):
                    g[i] += x[k] * A[k, i]
        ok = _solve(A, x, g, active, lam, tol, max_sweeps, &sweeps)
    return sweeps, bool(ok)


def cd_decorrelator(const double[:, ::1] A, double mu, double tol, int max_sweeps):
    """Solve the p penalised decorrelator problems (b = e_i), one row each.

    Returns ``(M, sweeps, converged)`` with ``M[i]`` the solution for e_i.
    """
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t i, k
    cdef int sweeps = 0
    cdef int ok
    M_arr = np.zeros((p, p))
    sweeps_arr = np.zeros(p, dtype=np.int64)
    conv_arr = np.zeros(p, dtype=bool)
    cdef double[:, ::1] M = M_arr
    cdef long long[::1] sw = sweeps_arr
    cdef cnp.npy_bool[::1] cv = conv_arr
    cdef double[::1] g = np.empty(p)
    cdef Py_ssize_t[::1] active = np.empty(p, dtype=np.intp)
    with nogil:
        for i in range(p):
            for k in range(p):
                g[k] = 0.0
            g[i] = -1.0
            ok = _solve(A, M[i], g, active, mu, tol, max_sweeps, &sweeps)
            sw[i] = sweeps
            cv[i] = ok
    return M_arr, sweeps_arr, conv_arr
