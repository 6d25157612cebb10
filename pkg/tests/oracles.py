"""Slow, independent reference implementations used only by the tests.

None of these share code with the package: they work from raw data matrices,
explicit enumeration or a generic convex solver.
"""

from __future__ import annotations

import itertools

import numpy as np


def prox_grad_lasso(X: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-10,
                    max_iter: int = 200_000) -> np.ndarray:
    """FISTA with restart on ``(1/2n)||y - X b||^2 + lam ||b||_1`` using the raw design."""
    n, d = X.shape
    L = np.linalg.norm(X, 2) ** 2 / n
    step = 1.0 / L
    b = np.zeros(d)
    z = b.copy()
    tk = 1.0
    prev_obj = np.inf
    for _ in range(max_iter):
        grad = X.T @ (X @ z - y) / n
        u = z - step * grad
        b_new = np.sign(u) * np.maximum(np.abs(u) - step * lam, 0.0)
        obj = 0.5 * np.sum((y - X @ b_new) ** 2) / n + lam * np.abs(b_new).sum()
        if obj > prev_obj:  # adaptive restart keeps the iteration monotone
            if tk == 1.0:  # a plain proximal step no longer descends: converged to round-off
                break
            tk, z = 1.0, b.copy()
            continue
        tk_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        z = b_new + (tk - 1) / tk_new * (b_new - b)
        moved = np.abs(b_new - b).max()
        b, tk, prev_obj = b_new, tk_new, obj
        if moved < tol:
            break
    return b


def gauss_jordan_inverse(A: np.ndarray) -> np.ndarray:
    """Textbook Gauss-Jordan elimination with partial pivoting."""
    n = A.shape[0]
    M = np.hstack([np.array(A, dtype=float), np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        M[[col, piv]] = M[[piv, col]]
        M[col] /= M[col, col]
        for r in range(n):
            if r != col:
                M[r] -= M[r, col] * M[col]
    return M[:, n:]


def ball_vertex_argmax(arms: np.ndarray, center: np.ndarray, radius: float) -> int:
    """Joint maximization of ``<x, beta>`` over arms and the l1 ball by enumerating every
    ball vertex ``center +- radius e_j`` (a linear objective peaks at a vertex)."""
    d = center.shape[0]
    vertices = np.vstack([center + radius * np.eye(d), center - radius * np.eye(d)])
    values = arms @ vertices.T  # K x 2d
    best_per_arm = values.max(axis=1)
    return int(np.argmax(best_per_arm)), best_per_arm


def compatibility_bruteforce(sigma: np.ndarray, support) -> float:
    """``sqrt(s * min v'Sv)`` over ``||v||_1 = 1`` in the cone, enumerating all sign orthants
    and solving each as a convex QP with cvxpy."""
    import cvxpy as cp

    d = sigma.shape[0]
    on = np.asarray(sorted(support))
    off = np.setdiff1d(np.arange(d), on)
    s = len(on)
    sym = 0.5 * (sigma + sigma.T)
    # factor for a DCP-friendly sum of squares
    evals, evecs = np.linalg.eigh(sym)
    root = (evecs * np.sqrt(np.clip(evals, 0, None))).T
    best = np.inf
    for signs in itertools.product((-1.0, 1.0), repeat=d):
        if signs[0] < 0:  # v and -v give the same value
            continue
        D = np.diag(signs)
        w = cp.Variable(d, nonneg=True)
        cons = [cp.sum(w) == 1]
        if off.size:
            cons.append(cp.sum(w[off]) <= 3 * cp.sum(w[on]))
        prob = cp.Problem(cp.Minimize(cp.sum_squares(root @ D @ w)), cons)
        prob.solve(solver=cp.CLARABEL)
        best = min(best, float(prob.value))
    return float(np.sqrt(max(s * best, 0.0)))


def sparse_eigen_enumerate(sigma: np.ndarray, m: int) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for cols in itertools.combinations(range(sigma.shape[0]), m):
        sub = sigma[np.ix_(cols, cols)]
        ev = np.linalg.eigvalsh(sub)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    return float(lo), float(hi)


def identity_compatibility(d: int, s0: int) -> float:
    """Closed form for ``Sigma = I``. Spreading on-support mass ``a`` evenly over ``s0``
    coordinates and ``1 - a`` over the rest gives ``a^2/s0 + (1-a)^2/(d-s0)``, minimized
    at ``a = s0/d`` unless the cone forces ``a >= 1/4``."""
    a = max(s0 / d, 0.25)
    return float(np.sqrt(s0 * (a * a / s0 + (1 - a) ** 2 / (d - s0))))
