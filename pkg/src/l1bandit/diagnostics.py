"""Empirical checks on the quantities the regret analysis relies on.

Coverage of the l1 ball, the compatibility (restricted eigenvalue) constant
of the sample covariance over the cone ``||v_{S^c}||_1 <= 3 ||v_S||_1``,
sparse eigenvalues, and the fraction of optimal pulls.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, RegretTrace, TrueModel, best_arm
from .solvers import DesignState

CONE_FACTOR = 3.0


@dataclass(frozen=True)
class CovarianceSnapshot:
    t: int
    sigma_hat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.sigma_hat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigurationError(f"covariance must be square, got shape {m.shape}")
        object.__setattr__(self, "sigma_hat", 0.5 * (m + m.T))

    @classmethod
    def from_design(cls, design: DesignState) -> "CovarianceSnapshot":
        return cls(design.t, design.sigma_hat)


@dataclass
class DiagnosticsReport:
    t: int
    phi_hat: float = math.nan
    rho_min: float = math.nan
    rho_max: float = math.nan
    coverage: float = math.nan
    optimal_fraction: float = math.nan

    def __post_init__(self):
        if not math.isnan(self.optimal_fraction) and not 0 <= self.optimal_fraction <= 1:
            raise ConfigurationError("optimal_fraction must lie in [0, 1]")
        if self.rho_min > self.rho_max:
            raise ConfigurationError("rho_min exceeds rho_max")

    FIELDS = ("t", "phi_hat", "rho_min", "rho_max", "coverage", "optimal_fraction")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def coverage_check(beta_hat, model: TrueModel, tau: float) -> bool:
    """True iff ``||beta_hat - beta_star||_1 <= tau``."""
    if tau < 0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")
    return float(np.abs(np.asarray(beta_hat) - model.beta_star).sum()) <= tau


def lasso_error_radius(t: int, d: int, s0: int, sigma: float, x_max: float, phi: float) -> float:
    """High-probability l1 error bound of the LASSO at penalty :func:`lasso_error_lambda`."""
    return 6.0 * s0 * sigma * x_max / phi**2 * math.sqrt((2 * math.log(t) + 2 * math.log(d)) / t)


def lasso_error_lambda(t: int, d: int, sigma: float, x_max: float) -> float:
    return 2.0 * sigma * x_max * math.sqrt((2 * math.log(t) + 2 * math.log(d)) / t)


def _project_simplex(y: np.ndarray, radius: float) -> np.ndarray:
    """Row-wise Euclidean projection onto ``{w >= 0, sum(w) = radius}``."""
    n = y.shape[1]
    u = -np.sort(-y, axis=1)
    css = np.cumsum(u, axis=1) - radius
    k = np.count_nonzero(u - css / np.arange(1, n + 1) > 0, axis=1)
    theta = css[np.arange(y.shape[0]), k - 1] / k
    return np.maximum(y - theta[:, None], 0.0)


def _project_cone_slice(y: np.ndarray, on: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Projection onto ``{w >= 0, sum w = 1, sum w_off <= 3/4}`` (nonnegative cone slice)."""
    w = _project_simplex(y, 1.0)
    if off.size == 0:
        return w
    cap = CONE_FACTOR / (1.0 + CONE_FACTOR)
    bad = w[:, off].sum(axis=1) > cap
    if bad.any():
        rows = np.flatnonzero(bad)
        w[np.ix_(rows, on)] = _project_simplex(y[np.ix_(rows, on)], 1.0 - cap)
        w[np.ix_(rows, off)] = _project_simplex(y[np.ix_(rows, off)], cap)
    return w


def _orthant_qp(sigma: np.ndarray, signs: np.ndarray, w: np.ndarray, on, off, lipschitz: float,
                max_iter: int, tol: float) -> np.ndarray:
    """Accelerated projected gradient for ``min w' D Sigma D w`` on the cone slice, one row per start."""
    step = 1.0 / lipschitz
    z = w.copy()
    tk = 1.0
    for _ in range(max_iter):
        grad = 2.0 * signs * ((signs * z) @ sigma)
        w_new = _project_cone_slice(z - step * grad, on, off)
        tk_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        z = w_new + ((tk - 1.0) / tk_new) * (w_new - w)
        moved = np.abs(w_new - w).max()
        w, tk = w_new, tk_new
        if moved < tol:
            break
    return w


def _quad(sigma, v):
    return np.einsum("ij,ij->i", v @ sigma, v)


def compatibility_estimate(snap, support, n_starts: int = 64, seed: int = 0, max_iter: int = 3000,
                           tol: float = 1e-12, refine_rounds: int = 10) -> float:
    """Upper estimate of the largest ``phi`` with ``||v||_1^2 <= |S| v'Sv / phi^2`` on the cone.

    Returns ``sqrt(|S| * min v'Sv)`` over ``||v||_1 = 1`` cone points found by
    multi-start projected gradient inside sign orthants, followed by a
    sign-flip refinement of coordinates sitting at zero. Every evaluated
    point is feasible, so the value bounds the true constant from above.
    """
    sigma = snap.sigma_hat if isinstance(snap, CovarianceSnapshot) else np.asarray(snap, dtype=np.float64)
    sigma = 0.5 * (sigma + sigma.T)
    d = sigma.shape[0]
    on = np.unique(np.asarray(support, dtype=int))
    if on.size == 0:
        raise ConfigurationError("support must be nonempty")
    if on.min() < 0 or on.max() >= d:
        raise ConfigurationError("support index out of range")
    off = np.setdiff1d(np.arange(d), on)
    s = on.size
    rng = np.random.default_rng(seed)
    lipschitz = 2.0 * max(float(np.linalg.eigvalsh(sigma)[-1]), 1e-300)

    # starts: eigenvectors of the smallest eigenvalues, uniform spread, then random orthants
    evals, evecs = np.linalg.eigh(sigma)
    starts = [evecs[:, i] for i in range(min(d, max(1, n_starts // 4)))]
    spread = np.zeros(d)
    spread[on] = 1.0 / (4.0 * s)
    if off.size:
        spread[off] = 3.0 / (4.0 * off.size)
    else:
        spread[on] = 1.0 / s
    starts.append(spread)
    while len(starts) < n_starts:
        starts.append(rng.standard_normal(d) * rng.random(d) ** 2)
    v0 = np.asarray(starts[:max(n_starts, 1)])
    signs = np.where(v0 < 0, -1.0, 1.0)
    w = _project_cone_slice(np.abs(v0), on, off)

    w = _orthant_qp(sigma, signs, w, on, off, lipschitz, max_iter, tol)
    best = _quad(sigma, signs * w)
    for _ in range(refine_rounds):
        v = signs * w
        g_w = 2.0 * signs * (v @ sigma)  # gradient in w-coordinates for the current orthant
        flipped_g = -g_w
        at_zero = w <= 1e-14
        flips = np.zeros_like(at_zero)
        for block in (on, off):
            if block.size == 0:
                continue
            gb = np.where(w[:, block] > 1e-14, g_w[:, block], np.inf)
            floor = gb.min(axis=1)
            floor = np.where(np.isfinite(floor), floor, g_w.min(axis=1))
            flips[:, block] = at_zero[:, block] & (flipped_g[:, block] < floor[:, None] - 1e-12)
        if not flips.any():
            break
        new_signs = np.where(flips, -signs, signs)
        new_w = _orthant_qp(sigma, new_signs, w, on, off, lipschitz, max_iter, tol)
        new_val = _quad(sigma, new_signs * new_w)
        improved = new_val < best
        signs = np.where(improved[:, None], new_signs, signs)
        w = np.where(improved[:, None], new_w, w)
        best = np.minimum(best, new_val)
    return math.sqrt(max(float(s * best.min()), 0.0))


def sparse_eigen_probe(snap, m: int, n_samples: int = 2000, seed: int = 0,
                       exhaustive_limit: int = 10_000) -> tuple[float, float]:
    """Extreme eigenvalues over ``m``-column principal submatrices.

    All ``C(d, m)`` subsets are enumerated when there are at most
    ``exhaustive_limit`` of them; otherwise ``n_samples`` random subsets are
    used (the result then brackets the true values from inside).
    """
    sigma = snap.sigma_hat if isinstance(snap, CovarianceSnapshot) else np.asarray(snap, dtype=np.float64)
    d = sigma.shape[0]
    if not 1 <= m <= d:
        raise ConfigurationError(f"m must lie in [1, {d}], got {m}")
    if math.comb(d, m) <= exhaustive_limit:
        subsets = np.array(list(itertools.combinations(range(d), m)), dtype=int)
    else:
        rng = np.random.default_rng(seed)
        subsets = np.array([np.sort(rng.choice(d, size=m, replace=False)) for _ in range(n_samples)])
    subs = sigma[subsets[:, :, None], subsets[:, None, :]]
    eig = np.linalg.eigvalsh(subs)
    return float(eig[:, 0].min()), float(eig[:, -1].max())


def optimal_fraction(trace: RegretTrace, window_start: int = 1) -> float:
    """Share of rounds ``t >= window_start`` where the chosen arm was optimal."""
    t = np.asarray(trace.t)
    if t.size == 0 or window_start > t[-1]:
        raise ConfigurationError(f"window_start={window_start} is past the last round")
    sel = t >= window_start
    chosen = np.asarray(trace.chosen_arm)[sel]
    optimal = np.asarray(trace.optimal_arm)[sel]
    return float(np.mean(chosen == optimal))


def conditional_optimal_covariance(sample_round, model: TrueModel, delta_star: float, n_rounds: int,
                                   rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """``E[x_opt x_opt' | gap >= delta_star]`` by rejection over generated rounds.

    ``sample_round(rng)`` returns a ``ContextRound``. Returns the estimate and
    the number of accepted rounds.
    """
    acc = np.zeros((model.d, model.d))
    kept = 0
    for _ in range(n_rounds):
        rnd = sample_round(rng)
        means = rnd.arms @ model.beta_star
        a = best_arm(rnd, model.beta_star)
        runner_up = np.max(np.delete(means, a))
        if means[a] >= runner_up + delta_star:
            x = rnd.arms[a]
            acc += np.outer(x, x)
            kept += 1
    if kept == 0:
        raise ConfigurationError(f"no round had a gap >= {delta_star}")
    return acc / kept, kept


def estimate_phi0(sample_round, model: TrueModel, delta_star: float, m: int, n_rounds: int = 5000,
                  seed: int = 0, n_samples: int = 2000) -> float:
    """``sqrt`` of the smallest ``m``-sparse eigenvalue of the gap-conditioned optimal-arm covariance."""
    rng = np.random.default_rng(seed)
    cov, _ = conditional_optimal_covariance(sample_round, model, delta_star, n_rounds, rng)
    rho_min, _ = sparse_eigen_probe(cov, m, n_samples=n_samples, seed=seed)
    return math.sqrt(max(rho_min, 0.0))


def diagnose_snapshot(design: DesignState, model: TrueModel, ball=None, trace: RegretTrace | None = None,
                      window_start: int = 1, n_starts: int = 16, m: int | None = None) -> DiagnosticsReport:
    """One diagnostics row for the current state of a run."""
    snap = CovarianceSnapshot.from_design(design)
    support = model.support
    report = DiagnosticsReport(design.t)
    if design.t > 0 and support.size:
        report.phi_hat = compatibility_estimate(snap, support, n_starts=n_starts)
        report.rho_min, report.rho_max = sparse_eigen_probe(snap, m or max(1, support.size))
    if ball is not None:
        report.coverage = float(coverage_check(ball.center, model, ball.radius))
    if trace is not None and len(trace):
        report.optimal_fraction = optimal_fraction(trace, min(window_start, trace.t[-1]))
    return report
