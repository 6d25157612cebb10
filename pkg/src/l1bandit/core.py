"""Domain types, the policy protocol and regret accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, Union, runtime_checkable

import numpy as np


class ConfigurationError(ValueError):
    """Inputs are inconsistent (dimensions, ranges, unknown keys)."""


class NumericError(ArithmeticError):
    """A linear-algebra step could not be carried out on finite numbers."""


def _as_vector(x, name="vector") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class TrueModel:
    """Hidden linear reward model ``y = <x, beta_star> + sigma * noise``.

    ``b`` defaults to ``||beta_star||_1``; when given it must bound it.
    """

    beta_star: np.ndarray
    sigma: float = 1.0
    x_max: float = 1.0
    b: float | None = None

    def __post_init__(self):
        beta = _as_vector(self.beta_star, "beta_star").copy()
        beta.setflags(write=False)
        object.__setattr__(self, "beta_star", beta)
        l1 = float(np.abs(beta).sum())
        if self.b is None:
            object.__setattr__(self, "b", l1)
        elif l1 > self.b * (1 + 1e-12):
            raise ConfigurationError(f"||beta_star||_1 = {l1} exceeds b = {self.b}")
        if self.sigma < 0 or self.x_max <= 0:
            raise ConfigurationError("sigma must be >= 0 and x_max > 0")

    @property
    def d(self) -> int:
        return self.beta_star.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_star)

    @property
    def s0(self) -> int:
        return int(np.count_nonzero(self.beta_star))

    def mean_rewards(self, arms: np.ndarray) -> np.ndarray:
        return np.asarray(arms, dtype=np.float64) @ self.beta_star


@dataclass(frozen=True)
class ContextRound:
    """The ``K`` candidate feature vectors shown at round ``t`` (rows of ``arms``)."""

    t: int
    arms: np.ndarray

    def __post_init__(self):
        arms = np.asarray(self.arms, dtype=np.float64)
        if arms.ndim != 2:
            raise ConfigurationError(f"arms must be a K x d matrix, got shape {arms.shape}")
        if arms.shape[0] < 2:
            raise ConfigurationError(f"a round needs K >= 2 arms, got {arms.shape[0]}")
        if self.t < 1:
            raise ConfigurationError(f"round index must be >= 1, got {self.t}")
        arms = arms.copy()
        arms.setflags(write=False)
        object.__setattr__(self, "arms", arms)

    @property
    def K(self) -> int:
        return self.arms.shape[0]

    @property
    def d(self) -> int:
        return self.arms.shape[1]

    def within_bound(self, x_max: float) -> bool:
        return bool(np.max(np.abs(self.arms)) <= x_max)


@dataclass(frozen=True)
class Observation:
    t: int
    chosen_arm: int
    feature: np.ndarray
    reward: float

    @classmethod
    def from_round(cls, rnd: ContextRound, chosen: int, reward: float) -> "Observation":
        return cls(rnd.t, int(chosen), rnd.arms[chosen], float(reward))


@runtime_checkable
class Policy(Protocol):
    """Anything that picks an arm from a round and learns from the outcome.

    ``select`` must be a deterministic function of the policy's internal
    state (including its own seeded generator) and the round.
    """

    def select(self, rnd: ContextRound) -> int: ...

    def update(self, obs: Observation) -> None: ...


ArmsLike = Union[ContextRound, np.ndarray, Sequence[Sequence[float]]]


def _arms_of(rnd: ArmsLike) -> np.ndarray:
    if isinstance(rnd, ContextRound):
        return rnd.arms
    arms = np.asarray(rnd, dtype=np.float64)
    if arms.ndim != 2 or arms.shape[0] == 0:
        raise ConfigurationError("empty or malformed arm list")
    return arms


def best_arm(rnd: ArmsLike, beta) -> int:
    """Index of the arm with the largest ``<x_a, beta>``; ties go to the lowest index."""
    arms = _arms_of(rnd)
    beta = _as_vector(beta, "beta")
    if beta.shape[0] != arms.shape[1]:
        raise ConfigurationError(f"beta has length {beta.shape[0]}, arms have d={arms.shape[1]}")
    return int(np.argmax(arms @ beta))


def instant_regret(rnd: ArmsLike, chosen: int, model: TrueModel) -> float:
    """``max_a <x_a, beta*> - <x_chosen, beta*>`` on the realized round."""
    arms = _arms_of(rnd)
    if arms.shape[1] != model.d:
        raise ConfigurationError(f"round has d={arms.shape[1]}, model has d={model.d}")
    if not 0 <= chosen < arms.shape[0]:
        raise ConfigurationError(f"arm {chosen} out of range for K={arms.shape[0]}")
    means = arms @ model.beta_star
    return float(means.max() - means[chosen])


@dataclass
class RegretTrace:
    """Per-round record of one (policy, repetition) run."""

    policy_id: str
    seed: int
    t: list = field(default_factory=list)
    chosen_arm: list = field(default_factory=list)
    optimal_arm: list = field(default_factory=list)
    instant_regret: list = field(default_factory=list)
    cum_regret: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def record(self, t: int, chosen: int, optimal: int, regret: float) -> None:
        if regret < 0:
            raise ConfigurationError(f"negative instant regret {regret} at t={t}")
        prev = self.cum_regret[-1] if self.cum_regret else 0.0
        self.t.append(int(t))
        self.chosen_arm.append(int(chosen))
        self.optimal_arm.append(int(optimal))
        self.instant_regret.append(float(regret))
        self.cum_regret.append(prev + float(regret))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final_regret(self) -> float:
        return self.cum_regret[-1] if self.cum_regret else 0.0

    def regret_at(self, t: int) -> float:
        """Cumulative regret after round ``t`` (rounds are recorded in order from 1)."""
        return self.cum_regret[t - 1]
