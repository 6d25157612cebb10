"""Context/reward generators and labeled-dataset replay.

* synthetic: ``K`` i.i.d. draws from ``N(0, Sigma)`` with ``Sigma_ij = rho^|i-j|``,
  clamped coordinate-wise to ``[-x_max, x_max]``, sparse ``beta_star``.
* margin: two arms ``X`` and ``X + zeta e_0`` with ``zeta = +-Beta(alpha, 1)``,
  so ``P(|gap| <= h) = h^alpha``.
* hard: the two-arm weak-signal construction used for regret lower bounds.
* replay: rows ``(label, context)`` block-embedded into ``K * p`` dimensions.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ConfigurationError, ContextRound, TrueModel

BETA_DISTS = {"uniform(0,1)": (0.0, 1.0), "uniform(0,0.2)": (0.0, 0.2)}


class ReplayFormatError(ConfigurationError):
    """A replay file row could not be parsed or failed validation."""


@functools.lru_cache(maxsize=16)
def _toeplitz_cholesky(d: int, rho: float) -> np.ndarray:
    idx = np.arange(d)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    factor = np.linalg.cholesky(cov)
    factor.setflags(write=False)
    return factor


def clamped_gaussian(n: int, d: int, rho: float, bound: float, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, d))
    if rho != 0.0:
        z = z @ _toeplitz_cholesky(d, rho).T
    return np.clip(z, -bound, bound)


def _sample_sparse(d: int, s0: int, beta_dist: str, rng: np.random.Generator, exclude=()) -> np.ndarray:
    lo, hi = BETA_DISTS[beta_dist]
    pool = np.setdiff1d(np.arange(d), np.asarray(exclude, dtype=int))
    support = np.sort(rng.choice(pool, size=s0, replace=False))
    beta = np.zeros(d)
    # Unif(lo, hi] so every support entry is nonzero
    beta[support] = hi - (hi - lo) * rng.random(s0)
    return beta


@dataclass(frozen=True)
class SyntheticSpec:
    K: int = 5
    d: int = 100
    s0: int = 5
    beta_dist: str = "uniform(0,1)"
    cov_decay: float = 0.5
    sigma: float = 1.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.K < 2 or self.d < 2:
            raise ConfigurationError("synthetic environment needs K >= 2 and d >= 2")
        if not 1 <= self.s0 <= self.d:
            raise ConfigurationError(f"s0 must lie in [1, d], got {self.s0}")
        if not 0 <= self.cov_decay < 1:
            raise ConfigurationError(f"cov_decay must lie in [0, 1), got {self.cov_decay}")
        if self.beta_dist not in BETA_DISTS:
            raise ConfigurationError(f"beta_dist must be one of {sorted(BETA_DISTS)}, got {self.beta_dist!r}")

    @property
    def dim(self) -> int:
        return self.d


def gen_synthetic_round(spec: SyntheticSpec, rng: np.random.Generator, t: int = 1) -> ContextRound:
    return ContextRound(t, clamped_gaussian(spec.K, spec.d, spec.cov_decay, spec.x_max, rng))


def sample_synthetic_model(spec: SyntheticSpec, rng: np.random.Generator) -> TrueModel:
    beta = _sample_sparse(spec.d, spec.s0, spec.beta_dist, rng)
    return TrueModel(beta, sigma=spec.sigma, x_max=spec.x_max)


@dataclass(frozen=True)
class MarginSpec:
    """Two-arm signed-Beta margin environment.

    The shared base vector is clamped to ``base_bound`` and the box bound is
    ``x_max = base_bound + 1`` so adding ``zeta in [-1, 1]`` never clips and
    the gap law stays exact.
    """

    alpha: float = 1.0
    d: int = 100
    s0: int = 5
    cov_decay: float = 0.5
    base_bound: float = 1.0
    beta_dist: str = "uniform(0,1)"
    sigma: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if self.d < 2 or not 1 <= self.s0 <= self.d:
            raise ConfigurationError("margin environment needs d >= 2 and 1 <= s0 <= d")
        if not 0 <= self.cov_decay < 1:
            raise ConfigurationError(f"cov_decay must lie in [0, 1), got {self.cov_decay}")
        if self.beta_dist not in BETA_DISTS:
            raise ConfigurationError(f"unknown beta_dist {self.beta_dist!r}")

    K = 2

    @property
    def x_max(self) -> float:
        return self.base_bound + 1.0

    @property
    def dim(self) -> int:
        return self.d

    @property
    def delta_star(self) -> float:
        """Gap scale for which ``P(|gap| <= h) <= (h / delta_star)^alpha / 2``."""
        return 2.0 ** (-1.0 / self.alpha)


def signed_beta(alpha: float, rng: np.random.Generator, size=None):
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * rng.beta(alpha, 1.0, size)


def gen_margin_round(spec: MarginSpec, rng: np.random.Generator, t: int = 1) -> ContextRound:
    base = clamped_gaussian(1, spec.d, spec.cov_decay, spec.base_bound, rng)[0]
    other = base.copy()
    other[0] += signed_beta(spec.alpha, rng)
    arms = np.clip(np.stack([base, other]), -spec.x_max, spec.x_max)
    return ContextRound(t, arms)


def sample_margin_model(spec: MarginSpec, rng: np.random.Generator) -> TrueModel:
    """``beta_0 = 1`` plus ``s0 - 1`` random entries elsewhere."""
    beta = np.zeros(spec.d)
    if spec.s0 > 1:
        beta = _sample_sparse(spec.d, spec.s0 - 1, spec.beta_dist, rng, exclude=(0,))
    beta[0] = 1.0
    return TrueModel(beta, sigma=spec.sigma, x_max=spec.x_max)


@dataclass(frozen=True)
class HardInstanceSpec:
    """Two arms in ``d + 1`` dimensions with one weak signal coordinate.

    Arm 0 is ``(X0, X1..Xd)`` and arm 1 is ``(0, -X1..-Xd)``; ``X0`` is 0 with
    probability ``min(1, C_x0 * beta_min^alpha)`` and +-1 otherwise, and the
    payload is standard normal clamped to ``[-1, 1]``.
    """

    d: int = 100
    T: int = 1000
    alpha: float = 0.0
    c: float | None = None
    C_x0: float = 0.5
    sigma: float = 1.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.d < 2 or self.T < 2:
            raise ConfigurationError("hard instance needs d >= 2 and T >= 2")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.C_x0 < 0:
            raise ConfigurationError("C_x0 must be >= 0")

    K = 2

    @property
    def dim(self) -> int:
        return self.d + 1

    @property
    def signal_constant(self) -> float:
        return self.sigma / (2.0 * self.x_max) if self.c is None else self.c

    @property
    def beta_min(self) -> float:
        return math.sqrt(math.log(self.d) / self.T)

    @property
    def theta(self) -> float:
        return self.signal_constant * self.beta_min

    @property
    def p_zero(self) -> float:
        return min(1.0, self.C_x0 * self.beta_min**self.alpha)

    @property
    def known_coefficients(self) -> dict:
        """The construction treats the leading coefficient as known to the learner."""
        return {0: 1.0}


def gen_hard_round(spec: HardInstanceSpec, rng: np.random.Generator, t: int = 1) -> ContextRound:
    p0 = spec.p_zero
    x0 = rng.choice([-1.0, 0.0, 1.0], p=[(1 - p0) / 2, p0, (1 - p0) / 2])
    payload = np.clip(rng.standard_normal(spec.d), -1.0, 1.0)
    arm0 = np.concatenate(([x0], payload))
    arm1 = np.concatenate(([0.0], -payload))
    return ContextRound(t, np.stack([arm0, arm1]))


def sample_hard_model(spec: HardInstanceSpec, rng: np.random.Generator) -> TrueModel:
    beta = np.zeros(spec.d + 1)
    beta[0] = 1.0
    beta[int(rng.integers(1, spec.d + 1))] = spec.theta
    return TrueModel(beta, sigma=spec.sigma, x_max=spec.x_max)


def draw_reward(x, model: TrueModel, rng: np.random.Generator) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise ConfigurationError(f"feature has shape {x.shape}, model has d={model.d}")
    return float(x @ model.beta_star + model.sigma * rng.standard_normal())


class BanditEnvironment:
    """A sampled model plus independent context and noise streams.

    The noise stream is consumed exactly once per round, so two policies run
    on environments built from the same seeds see identical contexts and
    identical noise draws.
    """

    def __init__(self, model: TrueModel, sampler: Callable, context_rng: np.random.Generator,
                 noise_rng: np.random.Generator):
        self.model = model
        self._sampler = sampler
        self.context_rng = context_rng
        self.noise_rng = noise_rng

    def next_round(self, t: int) -> ContextRound:
        return self._sampler(self.context_rng, t)

    def sample(self, rng: np.random.Generator, t: int = 1) -> ContextRound:
        """A round from the same law drawn with an outside generator (leaves the streams untouched)."""
        return self._sampler(rng, t)

    def reward(self, x) -> float:
        return draw_reward(x, self.model, self.noise_rng)


_GENERATORS = {
    SyntheticSpec: (gen_synthetic_round, sample_synthetic_model),
    MarginSpec: (gen_margin_round, sample_margin_model),
    HardInstanceSpec: (gen_hard_round, sample_hard_model),
}


def make_environment(spec, seed) -> BanditEnvironment:
    """Build an environment from a spec and a seed (int or ``SeedSequence``)."""
    try:
        gen_round, sample_model = _GENERATORS[type(spec)]
    except KeyError:
        raise ConfigurationError(f"no generator for {type(spec).__name__}") from None
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    model_ss, ctx_ss, noise_ss = ss.spawn(3)
    model = sample_model(spec, np.random.default_rng(model_ss))
    return BanditEnvironment(
        model,
        lambda rng, t: gen_round(spec, rng, t),
        np.random.default_rng(ctx_ss),
        np.random.default_rng(noise_ss),
    )


@dataclass(frozen=True)
class ReplayDataset:
    labels: np.ndarray
    contexts: np.ndarray
    K: int

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def p(self) -> int:
        return self.contexts.shape[1]

    @property
    def d(self) -> int:
        return self.K * self.p

    def embed(self, context) -> np.ndarray:
        """Block embedding: row ``a`` holds ``context`` in block ``a``, zeros elsewhere."""
        context = np.asarray(context, dtype=np.float64)
        arms = np.zeros((self.K, self.d))
        for a in range(self.K):
            arms[a, a * self.p:(a + 1) * self.p] = context
        return arms

    def round(self, i: int, t: int | None = None) -> ContextRound:
        return ContextRound(i + 1 if t is None else t, self.embed(self.contexts[i]))


def replay_load(path, K: int) -> ReplayDataset:
    """Read a UTF-8 CSV with a header; column 1 is the label in ``[0, K)``, the rest are covariates."""
    if K < 2:
        raise ConfigurationError(f"replay needs K >= 2, got {K}")
    labels, rows = [], []
    width = None
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ReplayFormatError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ReplayFormatError(f"{path}:{lineno}: need a label and at least one covariate")
            if len(row) != width:
                raise ReplayFormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            if any(cell.strip() == "" for cell in row):
                raise ReplayFormatError(f"{path}:{lineno}: missing values are not supported")
            try:
                label = int(row[0])
                values = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise ReplayFormatError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= label < K:
                raise ReplayFormatError(f"{path}:{lineno}: label {label} outside [0, {K})")
            if not all(math.isfinite(v) for v in values):
                raise ReplayFormatError(f"{path}:{lineno}: non-finite covariate")
            labels.append(label)
            rows.append(values)
    if not rows:
        raise ReplayFormatError(f"{path}: no data rows")
    return ReplayDataset(np.asarray(labels, dtype=int), np.asarray(rows, dtype=np.float64), K)
