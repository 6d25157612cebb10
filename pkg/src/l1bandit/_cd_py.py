"""Pure-Python twin of ``_cd.lasso_cd``; used when the extension is not built."""

import numpy as np


def lasso_cd(gram, xty, n, lam, beta, tol, max_iter, history=False):
    d = beta.shape[0]
    g = gram @ beta - xty
    diag = np.diag(gram).copy()
    zero_var = int(np.count_nonzero(diag <= 0.0))
    thr = lam * n
    objectives = []
    sweeps = 0
    max_delta = 0.0
    while sweeps < max_iter:
        max_delta = 0.0
        for j in range(d):
            gjj = diag[j]
            old = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                z = gjj * old - g[j]
                if z > thr:
                    new = (z - thr) / gjj
                elif z < -thr:
                    new = (z + thr) / gjj
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                g += gram[:, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        sweeps += 1
        if history:
            quad = float(beta @ (g + xty))
            objectives.append((0.5 * quad - float(beta @ xty)) / n + lam * float(np.abs(beta).sum()))
        if max_delta <= tol:
            break
    return sweeps, max_delta, zero_var, objectives
