"""Experiment configuration: a typed INI-style ``key = value`` file.

Sections::

    [experiment]           T, repetitions, master_seed, output, constant_mode,
                           diagnostics, checkpoint_every, diagnostics_starts,
                           chart, permutations
    [environment]          kind = synthetic | margin | hard | replay, plus the
                           keys of that kind (see ENVIRONMENT_KEYS)
    [policy <id>]          type = one of POLICY_KEYS, plus that type's keys

Policies keep the order in which they appear. Unknown sections or keys are
errors that name the offending ``section.key``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .core import ConfigurationError
from .environments import BETA_DISTS, HardInstanceSpec, MarginSpec, SyntheticSpec


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _float_or_auto(text: str):
    return "auto" if text.strip() == "auto" else float(text)


EXPERIMENT_KEYS = {
    "T": int,
    "repetitions": int,
    "master_seed": int,
    "output": str,
    "constant_mode": _choice("practical", "theoretical"),
    "diagnostics": _bool,
    "checkpoint_every": int,
    "diagnostics_starts": int,
    "chart": _bool,
    "permutations": int,
}

EXPERIMENT_DEFAULTS = {
    "repetitions": 1,
    "master_seed": 0,
    "output": "out",
    "constant_mode": "practical",
    "diagnostics": False,
    "checkpoint_every": 10,
    "diagnostics_starts": 16,
    "chart": True,
    "permutations": 10,
}

ENVIRONMENT_KEYS = {
    "synthetic": {"K": int, "d": int, "s0": int, "beta_dist": _choice(*BETA_DISTS), "cov_decay": float,
                  "sigma": float, "x_max": float},
    "margin": {"alpha": float, "d": int, "s0": int, "cov_decay": float, "base_bound": float,
               "beta_dist": _choice(*BETA_DISTS), "sigma": float},
    "hard": {"d": int, "T": int, "alpha": float, "c": float, "C_x0": float, "sigma": float, "x_max": float},
    "replay": {"path": str, "K": int},
}

_SPEC_TYPES = {"synthetic": SyntheticSpec, "margin": MarginSpec, "hard": HardInstanceSpec}

POLICY_KEYS = {
    "l1ball": {"lambda0": float, "tau0": float, "solve_every": _choice("round", "doubling"),
               "phi0": _float_or_auto, "delta_star": float, "sparse_mult": int, "use_known": _bool},
    "greedy": {"lambda0": float, "use_known": _bool},
    "oful": {"lambda_ridge": float, "delta": float, "R": float, "S_bound": float},
    "lasso_bandit": {"q": int, "h": float, "lambda1": float, "lambda2_0": float},
    "ols_bandit": {"q": int, "h": float},
    "random": {},
    "oracle": {},
    "constant": {"arm": int},
    "label_oracle": {},
}


@dataclass
class PolicyConfig:
    id: str
    type: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    environment_kind: str
    environment: dict
    policies: list
    T: int
    repetitions: int = 1
    master_seed: int = 0
    output: str = "out"
    constant_mode: str = "practical"
    diagnostics: bool = False
    checkpoint_every: int = 10
    diagnostics_starts: int = 16
    chart: bool = True
    permutations: int = 10

    def __post_init__(self):
        if self.T < 1:
            raise ConfigurationError("experiment.T must be >= 1")
        if self.repetitions < 1:
            raise ConfigurationError("experiment.repetitions must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigurationError("experiment.checkpoint_every must be >= 1")
        if self.permutations < 1:
            raise ConfigurationError("experiment.permutations must be >= 1")
        if not self.policies:
            raise ConfigurationError("at least one [policy <id>] section is required")
        ids = [p.id for p in self.policies]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate policy ids in {ids}")

    def environment_spec(self):
        """Spec object for generated environments (``None`` for replay)."""
        if self.environment_kind == "replay":
            return None
        params = dict(self.environment)
        if self.environment_kind == "hard":
            params.setdefault("T", self.T)
        try:
            return _SPEC_TYPES[self.environment_kind](**params)
        except ConfigurationError as exc:
            raise ConfigurationError(f"environment: {exc}") from None


def _typed(section: str, items, schema: dict) -> dict:
    out = {}
    for key, raw in items:
        if key not in schema:
            raise ConfigurationError(f"unknown key {section}.{key}")
        try:
            out[key] = schema[key](raw.strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from None
    return out


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       default_section="\x00defaults")
    parser.optionxform = str  # keys are case-sensitive (K, T, R, C_x0)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None

    experiment = None
    environment = None
    policies = []
    for name in parser.sections():
        items = parser.items(name)
        if name == "experiment":
            experiment = _typed(name, items, EXPERIMENT_KEYS)
        elif name == "environment":
            raw = dict(items)
            kind = raw.pop("kind", None)
            if kind not in ENVIRONMENT_KEYS:
                raise ConfigurationError(f"environment.kind must be one of {sorted(ENVIRONMENT_KEYS)}, got {kind!r}")
            environment = (kind, _typed(name, raw.items(), ENVIRONMENT_KEYS[kind]))
        elif name.startswith("policy "):
            pid = name[len("policy "):].strip()
            if not pid or any(c in pid for c in "/\\ ,"):
                raise ConfigurationError(f"bad policy id in section [{name}]")
            raw = dict(items)
            ptype = raw.pop("type", pid)
            if ptype not in POLICY_KEYS:
                raise ConfigurationError(f"{name}.type must be one of {sorted(POLICY_KEYS)}, got {ptype!r}")
            policies.append(PolicyConfig(pid, ptype, _typed(name, raw.items(), POLICY_KEYS[ptype])))
        else:
            raise ConfigurationError(f"unknown section [{name}]")

    if experiment is None:
        raise ConfigurationError("missing [experiment] section")
    if "T" not in experiment:
        raise ConfigurationError("missing key experiment.T")
    if environment is None:
        raise ConfigurationError("missing [environment] section")
    kind, env = environment
    if kind == "replay":
        for key in ("path", "K"):
            if key not in env:
                raise ConfigurationError(f"missing key environment.{key}")
        path = Path(env["path"])
        if not path.is_absolute() and source not in ("<config>",):
            env["path"] = str((Path(source).parent / path))
    cfg = ExperimentConfig(kind, env, policies, **{**EXPERIMENT_DEFAULTS, **experiment})
    cfg.environment_spec()  # validate ranges now
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
