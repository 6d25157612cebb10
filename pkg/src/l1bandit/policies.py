"""Arm-selection policies sharing the ``select`` / ``update`` protocol.

``L1BallPolicy`` keeps a LASSO estimate as the center of an l1 ball and plays
the arm maximizing ``<x, center> + radius * ||x||_inf``, which is the exact
value of ``max_{beta in ball} <x, beta>``. The other classes are comparison
baselines (OFUL ellipsoid UCB, forced-sampling OLS/LASSO bandits) and
controls (greedy LASSO, uniform random, oracle, constant).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ConfigurationError, ContextRound, NumericError, Observation, TrueModel, best_arm
from .solvers import DesignState, design_update, lasso_solve, ridge_solve

log = logging.getLogger(__name__)

PRACTICAL_LAMBDA0 = 0.5
PRACTICAL_TAU0 = 1.0


def schedule(lambda0: float, tau0: float, t: int, d: int) -> tuple[float, float]:
    """Penalty and radius after ``t`` observations: both scale as ``sqrt((ln d + ln t) / t)``."""
    if t < 1:
        raise ConfigurationError(f"schedule needs t >= 1, got {t}")
    if d < 2:
        raise ConfigurationError(f"schedule needs d >= 2, got {d}")
    rate = math.sqrt((math.log(d) + math.log(t)) / t)
    return lambda0 * rate, tau0 * rate


def theoretical_constants(sigma: float, x_max: float, s0: int, phi0: float) -> tuple[float, float]:
    """``(lambda0, tau0)`` for which the regret guarantee is stated.

    ``lambda0 = 2 sqrt(2) sigma x_max`` and ``tau0 = 384 sqrt(2) s0 sigma x_max / phi0^2``.
    """
    if phi0 <= 0:
        raise ConfigurationError(f"phi0 must be > 0, got {phi0}")
    lambda0 = 2.0 * math.sqrt(2.0) * sigma * x_max
    tau0 = 384.0 * math.sqrt(2.0) * s0 * sigma * x_max / phi0**2
    return lambda0, tau0


@dataclass(frozen=True)
class ConfidenceBall:
    """``{beta : ||beta - center||_1 <= radius}``, optionally with coordinates outside
    the boolean mask ``free`` pinned to their center values."""

    center: np.ndarray
    radius: float
    free: np.ndarray | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigurationError(f"radius must be >= 0, got {self.radius}")

    def contains(self, beta) -> bool:
        gap = np.abs(np.asarray(beta) - self.center)
        if self.free is not None and np.any(gap[~self.free] > 0):
            return False
        return float(gap.sum()) <= self.radius


def l1ball_scores(arms: np.ndarray, ball: ConfidenceBall) -> np.ndarray:
    spread = arms if ball.free is None else arms[:, ball.free]
    bonus = np.abs(spread).max(axis=1) if spread.shape[1] else np.zeros(arms.shape[0])
    return arms @ ball.center + ball.radius * bonus


def l1ball_select(rnd: ContextRound, ball: ConfidenceBall) -> int:
    """Optimistic arm for an l1 ball; ties go to the lowest index."""
    if ball.center.shape[0] != rnd.d:
        raise ConfigurationError(f"ball center has length {ball.center.shape[0]}, round has d={rnd.d}")
    return int(np.argmax(l1ball_scores(rnd.arms, ball)))


class L1BallPolicy:
    """LASSO-centered l1 confidence ball policy.

    Round 1 uses center 0 and radius ``tau0``. After ``t`` observations the
    center is the LASSO fit at ``lambda_t`` (warm-started from the previous
    center) and the radius is ``tau_t``, both from :func:`schedule`.

    ``solve_every="doubling"`` refits only when ``t`` is a power of two and
    keeps the stale center in between.

    ``known`` maps coordinates to values the policy is told in advance; they
    are removed from the regression (their contribution is subtracted from the
    reward) and held fixed in the ball.
    """

    name = "l1ball"

    def __init__(self, d: int, lambda0: float = PRACTICAL_LAMBDA0, tau0: float = PRACTICAL_TAU0,
                 solve_every: str = "round", tol: float = 1e-8, max_iter: int = 10_000,
                 known: dict | None = None):
        if solve_every not in ("round", "doubling"):
            raise ConfigurationError(f"solve_every must be 'round' or 'doubling', got {solve_every!r}")
        if lambda0 < 0 or tau0 < 0:
            raise ConfigurationError("lambda0 and tau0 must be >= 0")
        self.d = d
        self.lambda0 = float(lambda0)
        self.tau0 = float(tau0)
        self.solve_every = solve_every
        self.tol = tol
        self.max_iter = max_iter
        self.design = DesignState(d)
        self.known = {int(j): float(v) for j, v in (known or {}).items()}
        if any(not 0 <= j < d for j in self.known):
            raise ConfigurationError(f"known coordinates must lie in [0, {d})")
        self._pinned = np.array(sorted(self.known), dtype=int)
        self._free = None
        self.beta_hat = np.zeros(d)
        if self.known:
            self._free = np.ones(d, dtype=bool)
            self._free[self._pinned] = False
            self.beta_hat[self._pinned] = [self.known[j] for j in self._pinned]
        self.radius = self.tau0
        self.last_solution = None
        self.events: list[tuple[int, str]] = []

    @property
    def t(self) -> int:
        return self.design.t

    @property
    def ball(self) -> ConfidenceBall:
        return ConfidenceBall(self.beta_hat, self.radius, self._free)

    def select(self, rnd: ContextRound) -> int:
        return l1ball_select(rnd, self.ball)

    def _due(self, t: int) -> bool:
        return self.solve_every == "round" or (t & (t - 1)) == 0

    def update(self, obs: Observation) -> None:
        x, y = obs.feature, obs.reward
        if self.known:
            x = np.array(x, dtype=np.float64)
            y = y - float(x[self._pinned] @ self.beta_hat[self._pinned])
            x[self._pinned] = 0.0
        design_update(self.design, x, y)
        t = self.design.t
        lam, tau = schedule(self.lambda0, self.tau0, t, self.d)
        if self._due(t):
            warm = self.beta_hat.copy()
            warm[self._pinned] = 0.0
            sol = lasso_solve(self.design, lam, warm_start=warm, tol=self.tol, max_iter=self.max_iter)
            if not sol.converged:
                self.events.append((obs.t, f"lasso not converged: kkt={sol.kkt_violation:.3g}"))
                log.warning("round %d: LASSO did not converge (kkt=%.3g)", obs.t, sol.kkt_violation)
            beta = sol.beta_hat.copy()
            beta[self._pinned] = self.beta_hat[self._pinned]
            self.beta_hat = beta
            self.last_solution = sol
        self.radius = tau


def l1ball_update(policy: L1BallPolicy, obs: Observation) -> L1BallPolicy:
    policy.update(obs)
    return policy


class GreedyLassoPolicy(L1BallPolicy):
    """Same LASSO center as :class:`L1BallPolicy`, zero exploration bonus."""

    name = "greedy"

    def __init__(self, d: int, lambda0: float = PRACTICAL_LAMBDA0, **kw):
        super().__init__(d, lambda0=lambda0, tau0=0.0, **kw)


def oful_radius(t: int, d: int, lambda_ridge: float, delta: float, R: float, S_bound: float,
                x_max: float) -> float:
    return R * math.sqrt(d * math.log((1.0 + t * x_max**2 * d / lambda_ridge) / delta)) \
        + math.sqrt(lambda_ridge) * S_bound


def oful_scores(arms: np.ndarray, design: DesignState, lambda_ridge: float, delta: float,
                R: float, S_bound: float, x_max: float) -> np.ndarray:
    if lambda_ridge <= 0:
        raise ConfigurationError(f"lambda_ridge must be > 0, got {lambda_ridge}")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    v = design.gram + lambda_ridge * np.eye(design.d)
    try:
        factor = scipy.linalg.cho_factor(v)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"ellipsoid matrix factorization failed: {exc}") from exc
    beta = scipy.linalg.cho_solve(factor, design.xty)
    widths = np.sqrt(np.einsum("ij,ji->i", arms, scipy.linalg.cho_solve(factor, arms.T)))
    rho = oful_radius(design.t, design.d, lambda_ridge, delta, R, S_bound, x_max)
    return arms @ beta + rho * widths


def oful_select(rnd: ContextRound, design: DesignState, lambda_ridge: float = 1.0, delta: float = 1e-4,
                R: float = 1.0, S_bound: float = 1.0, x_max: float = 1.0) -> int:
    """Ellipsoid UCB: ``<x, ridge estimate> + rho_t ||x||_{V^-1}``."""
    return int(np.argmax(oful_scores(rnd.arms, design, lambda_ridge, delta, R, S_bound, x_max)))


class OFULPolicy:
    name = "oful"

    def __init__(self, d: int, lambda_ridge: float = 1.0, delta: float = 1e-4, R: float = 1.0,
                 S_bound: float = 1.0, x_max: float = 1.0):
        self.design = DesignState(d)
        self.params = dict(lambda_ridge=lambda_ridge, delta=delta, R=R, S_bound=S_bound, x_max=x_max)
        oful_scores(np.zeros((1, d)), self.design, **self.params)  # validates parameters

    def select(self, rnd: ContextRound) -> int:
        return oful_select(rnd, self.design, **self.params)

    def update(self, obs: Observation) -> None:
        design_update(self.design, obs.feature, obs.reward)


@dataclass(frozen=True)
class ForcedSamplingPlan:
    """Each arm is forced ``q`` times at the start of every doubling block.

    With 0-based time ``s = t - 1`` the forced windows are
    ``[(2^n - 1) K q, 2^n K q)`` for ``n = 0, 1, ...``; slot ``j`` inside a
    window forces arm ``j // q``. Each arm is forced ``q`` times per window,
    so ``O(q log T)`` times up to ``T``.
    """

    q: int
    K: int

    def __post_init__(self):
        if self.q < 1 or self.K < 1:
            raise ConfigurationError("forced sampling needs q >= 1 and K >= 1")


def forced_arm(plan: ForcedSamplingPlan, t: int) -> int | None:
    if t < 1:
        raise ConfigurationError(f"round index must be >= 1, got {t}")
    width = plan.K * plan.q
    block = (t - 1) // width + 1  # forced iff this is a power of two
    if block & (block - 1):
        return None
    return ((t - 1) % width) // plan.q


def screened_select(arms: np.ndarray, forced_estimate, all_estimate, h: float) -> int:
    """Two-stage choice: keep arms within ``h/2`` of the best forced-estimate score, then
    return the best kept arm under the all-sample estimate."""
    arms = np.asarray(arms, dtype=np.float64)
    stage1 = arms @ np.asarray(forced_estimate, dtype=np.float64)
    keep = stage1 >= stage1.max() - h / 2.0
    stage2 = np.where(keep, arms @ np.asarray(all_estimate, dtype=np.float64), -np.inf)
    return int(np.argmax(stage2))


lasso_bandit_select = screened_select
ols_bandit_select = screened_select


class _ForcedSamplingPolicy:
    """Shared machinery: forced rounds feed a second design kept apart."""

    def __init__(self, d: int, K: int, q: int, h: float):
        self.d = d
        self.plan = ForcedSamplingPlan(q, K)
        self.h = float(h)
        self.forced = DesignState(d)
        self.all = DesignState(d)
        self.forced_estimate = np.zeros(d)
        self.all_estimate = np.zeros(d)
        self._forced_now = False
        self.events: list[tuple[int, str]] = []

    def select(self, rnd: ContextRound) -> int:
        if rnd.K != self.plan.K:
            raise ConfigurationError(f"policy configured for K={self.plan.K}, round has K={rnd.K}")
        arm = forced_arm(self.plan, rnd.t)
        self._forced_now = arm is not None
        if arm is not None:
            return arm
        return screened_select(rnd.arms, self.forced_estimate, self.all_estimate, self.h)

    def update(self, obs: Observation) -> None:
        design_update(self.all, obs.feature, obs.reward)
        if self._forced_now:
            design_update(self.forced, obs.feature, obs.reward)
            self.forced_estimate = self._fit_forced()
        self.all_estimate = self._fit_all()


def _near_ols(state: DesignState) -> np.ndarray:
    scale = np.trace(state.gram) / state.d
    if state.t == 0 or scale <= 0:
        return np.zeros(state.d)
    return ridge_solve(state, 1e-10 * scale)


class OLSBanditPolicy(_ForcedSamplingPolicy):
    """Forced-sampling OLS bandit; rank-deficient designs get a vanishing ridge."""

    name = "ols_bandit"

    def __init__(self, d: int, K: int, q: int = 1, h: float = 1.0):
        super().__init__(d, K, q, h)

    def _fit_forced(self):
        return _near_ols(self.forced)

    def _fit_all(self):
        return _near_ols(self.all)


class LassoBanditPolicy(_ForcedSamplingPolicy):
    """Forced-sampling LASSO bandit.

    The forced-sample fit uses the fixed penalty ``lambda1``; the all-sample
    fit uses ``lambda2_0 * sqrt((ln t + ln d) / t)``.
    """

    name = "lasso_bandit"

    def __init__(self, d: int, K: int, q: int = 1, h: float = 5.0, lambda1: float = 0.5,
                 lambda2_0: float = 0.5, tol: float = 1e-8):
        super().__init__(d, K, q, h)
        self.lambda1 = float(lambda1)
        self.lambda2_0 = float(lambda2_0)
        self.tol = tol

    def _fit(self, state, lam, warm, t):
        sol = lasso_solve(state, lam, warm_start=warm, tol=self.tol)
        if not sol.converged:
            self.events.append((t, f"lasso not converged: kkt={sol.kkt_violation:.3g}"))
        return sol.beta_hat

    def _fit_forced(self):
        return self._fit(self.forced, self.lambda1, self.forced_estimate, self.all.t)

    def _fit_all(self):
        lam, _ = schedule(self.lambda2_0, 0.0, self.all.t, self.d)
        return self._fit(self.all, lam, self.all_estimate, self.all.t)


class RandomPolicy:
    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def select(self, rnd: ContextRound) -> int:
        return int(self.rng.integers(rnd.K))

    def update(self, obs: Observation) -> None:
        pass


class OraclePolicy:
    """Knows ``beta_star``; zero regret by construction."""

    name = "oracle"

    def __init__(self, model: TrueModel):
        self.model = model

    def select(self, rnd: ContextRound) -> int:
        return best_arm(rnd, self.model.beta_star)

    def update(self, obs: Observation) -> None:
        pass


class ConstantPolicy:
    name = "constant"

    def __init__(self, arm: int = 0):
        self.arm = int(arm)

    def select(self, rnd: ContextRound) -> int:
        if not 0 <= self.arm < rnd.K:
            raise ConfigurationError(f"constant arm {self.arm} out of range for K={rnd.K}")
        return self.arm

    def update(self, obs: Observation) -> None:
        pass


class LabelOraclePolicy:
    """Replay control that is told each row's label before choosing."""

    name = "label_oracle"

    def __init__(self):
        self._label = None

    def reveal(self, label: int) -> None:
        self._label = int(label)

    def select(self, rnd: ContextRound) -> int:
        if self._label is None:
            raise ConfigurationError("label oracle used outside replay")
        return self._label

    def update(self, obs: Observation) -> None:
        self._label = None
