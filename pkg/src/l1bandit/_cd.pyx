# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cyclic coordinate descent for the Gram-form LASSO."""

import numpy as np
from libc.math cimport fabs


cdef inline double _soft(double z, double thr) nogil:
    if z > thr:
        return z - thr
    if z < -thr:
        return z + thr
    return 0.0


def lasso_cd(double[:, ::1] gram, double[::1] xty, double n, double lam,
             double[::1] beta, double tol, int max_iter, bint history=False):
    """Run sweeps in place on ``beta``.

    Returns ``(sweeps, last_max_delta, zero_variance_count, objectives)``;
    objectives omit the constant ``yty / 2n`` term.
    """
    cdef Py_ssize_t d = beta.shape[0]
    cdef Py_ssize_t i, j
    cdef double[::1] g = np.empty(d)
    cdef double gjj, old, new, delta, max_delta = 0.0, thr = lam * n
    cdef double quad, lin, pen
    cdef int sweeps = 0, zero_var = 0
    objectives = []

    for i in range(d):
        g[i] = -xty[i]
    for j in range(d):
        if beta[j] != 0.0:
            for i in range(d):
                g[i] += gram[i, j] * beta[j]

    for j in range(d):
        if gram[j, j] <= 0.0:
            zero_var += 1

    while sweeps < max_iter:
        max_delta = 0.0
        with nogil:
            for j in range(d):
                gjj = gram[j, j]
                old = beta[j]
                if gjj <= 0.0:
                    new = 0.0
                else:
                    new = _soft(gjj * old - g[j], thr) / gjj
                delta = new - old
                if delta != 0.0:
                    beta[j] = new
                    for i in range(d):
                        g[i] += gram[i, j] * delta
                    if fabs(delta) > max_delta:
                        max_delta = fabs(delta)
        sweeps += 1
        if history:
            quad = 0.0
            lin = 0.0
            pen = 0.0
            for i in range(d):
                quad += beta[i] * (g[i] + xty[i])
                lin += beta[i] * xty[i]
                pen += fabs(beta[i])
            objectives.append((0.5 * quad - lin) / n + lam * pen)
        if max_delta <= tol:
            break
    return sweeps, max_delta, zero_var, objectives
