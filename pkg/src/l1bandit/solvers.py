"""Incremental least-squares state, LASSO and ridge solvers.

The LASSO is solved by cyclic coordinate descent on the Gram form
``(1/2t) b'Gb - (1/t) xty'b + yty/2t + lam*||b||_1`` so per-round cost does
not grow with the number of observations. The sweep kernel is compiled
(``_cd``) when the extension is available; otherwise the pure-Python twin in
``_cd_py`` is used. Set ``L1BANDIT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _cd_py
from .core import ConfigurationError, NumericError

log = logging.getLogger(__name__)

try:
    if os.environ.get("L1BANDIT_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _cd as _cd_ext
except ImportError:  # extension not built
    _cd_ext = None

BACKEND = "compiled" if _cd_ext is not None else "python"
_KERNELS = {"python": _cd_py.lasso_cd}
if _cd_ext is not None:
    _KERNELS["compiled"] = _cd_ext.lasso_cd

DEFAULT_TOL = 1e-8
DEFAULT_KKT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000


def available_backends() -> list[str]:
    return sorted(_KERNELS)


@dataclass
class DesignState:
    """Running sums ``X'X``, ``X'y`` and ``y'y`` over ``t`` observations."""

    d: int
    t: int = 0
    gram: np.ndarray = field(default=None, repr=False)
    xty: np.ndarray = field(default=None, repr=False)
    yty: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {self.d}")
        if self.gram is None:
            self.gram = np.zeros((self.d, self.d))
        if self.xty is None:
            self.xty = np.zeros(self.d)

    @property
    def sigma_hat(self) -> np.ndarray:
        """Sample covariance ``gram / t``."""
        if self.t == 0:
            return np.zeros_like(self.gram)
        return self.gram / self.t

    def copy(self) -> "DesignState":
        return DesignState(self.d, self.t, self.gram.copy(), self.xty.copy(), self.yty)


def design_update(state: DesignState, x, y: float) -> DesignState:
    """Rank-one accumulation of one observation; mutates and returns ``state``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (state.d,):
        raise ConfigurationError(f"feature has shape {x.shape}, expected ({state.d},)")
    y = float(y)
    if not (np.isfinite(y) and np.all(np.isfinite(x))):
        raise NumericError("non-finite feature or reward")
    # in-place symmetric rank-one update keeps gram exactly symmetric
    state.gram += np.outer(x, x)
    state.xty += y * x
    state.yty += y * y
    state.t += 1
    return state


@dataclass
class LassoSolution:
    beta_hat: np.ndarray
    lam: float
    iterations: int
    converged: bool
    kkt_violation: float
    zero_variance: int = 0
    objectives: list = field(default_factory=list, repr=False)


def lasso_objective(state: DesignState, beta, lam: float) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    n = state.t
    quad = beta @ state.gram @ beta
    return float((0.5 * quad - state.xty @ beta + 0.5 * state.yty) / n + lam * np.abs(beta).sum())


def kkt_residual(state: DesignState, beta, lam: float) -> float:
    """Largest violation of the LASSO optimality conditions at ``beta``."""
    beta = np.asarray(beta, dtype=np.float64)
    if state.t == 0:
        raise ConfigurationError("KKT residual needs at least one observation")
    grad = (state.gram @ beta - state.xty) / state.t
    active = beta != 0
    res = np.where(active, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(res.max()) if res.size else 0.0


def lasso_solve(
    state: DesignState,
    lam: float,
    warm_start=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    kkt_tol: float = DEFAULT_KKT_TOL,
    history: bool = False,
    backend: str | None = None,
) -> LassoSolution:
    """Minimize ``(1/2t)||Y - X b||^2 + lam ||b||_1`` from the sufficient statistics.

    Sweeps until the largest coordinate move is below ``tol`` and the KKT
    residual is below ``kkt_tol``. Hitting ``max_iter`` returns the iterate
    with ``converged=False``. Coordinates with ``gram_jj = 0`` are held at 0.
    """
    if state.t < 1:
        raise ConfigurationError("lasso_solve needs at least one observation")
    if lam < 0:
        raise ConfigurationError(f"lambda must be >= 0, got {lam}")
    name = backend or BACKEND
    if name not in _KERNELS:
        raise ConfigurationError(f"unknown backend {name!r}; available: {available_backends()}")
    kernel = _KERNELS[name]
    beta = np.zeros(state.d) if warm_start is None else np.array(warm_start, dtype=np.float64)
    if beta.shape != (state.d,):
        raise ConfigurationError(f"warm start has shape {beta.shape}, expected ({state.d},)")
    gram = np.ascontiguousarray(state.gram)
    xty = np.ascontiguousarray(state.xty)

    sweeps = 0
    objectives: list = []
    const = 0.5 * state.yty / state.t
    zero_var = 0
    kkt = np.inf
    while sweeps < max_iter:
        n_sw, _, zero_var, objs = kernel(gram, xty, float(state.t), float(lam), beta, tol, max_iter - sweeps, history)
        sweeps += n_sw
        objectives.extend(o + const for o in objs)
        kkt = kkt_residual(state, beta, lam)
        if kkt <= kkt_tol:
            break
    converged = kkt <= kkt_tol
    if not converged:
        log.debug("lasso_solve hit max_iter=%d with kkt=%.3g", max_iter, kkt)
    if zero_var:
        log.debug("lasso_solve: %d zero-variance coordinates held at 0", zero_var)
    return LassoSolution(beta, float(lam), sweeps, converged, kkt, zero_var, objectives)


def ridge_solve(state: DesignState, lambda_ridge: float) -> np.ndarray:
    """``(gram + lambda_ridge I)^{-1} xty`` via a symmetric positive-definite solve."""
    if lambda_ridge <= 0:
        raise ConfigurationError(f"ridge penalty must be > 0, got {lambda_ridge}")
    if state.t == 0:
        return np.zeros(state.d)
    v = state.gram + lambda_ridge * np.eye(state.d)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(state.xty))):
        raise NumericError("non-finite design statistics")
    try:
        return scipy.linalg.solve(v, state.xty, assume_a="pos")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"ridge solve failed: {exc}") from exc
