"""Seeded simulation and replay runs and their CSV outputs.

Each (policy, repetition) job gets a fresh environment and policy. The
environment stream depends only on ``(master_seed, rep)`` so every policy in
a repetition faces the same model, contexts and noise; the policy's own
generator depends on ``(master_seed, policy_id, rep)``. Jobs never share
state, so results do not depend on job order or worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import policies as P
from .chart import emit_chart
from .config import ExperimentConfig, PolicyConfig
from .core import ConfigurationError, ContextRound, Observation, RegretTrace, TrueModel, best_arm, instant_regret
from .diagnostics import DiagnosticsReport, compatibility_estimate, coverage_check, estimate_phi0, \
    optimal_fraction, sparse_eigen_probe
from .environments import make_environment, replay_load
from .solvers import DesignState, design_update

log = logging.getLogger(__name__)

TRACE_FIELDS = ("t", "rep", "policy", "chosen_arm", "optimal_arm", "instant_regret", "cum_regret")
SUMMARY_FIELDS = ("t", "policy", "mean", "sd", "n")
_ENV_TAG = 0x5EED


def default_jobs() -> int:
    """Worker count from ``$L1BANDIT_JOBS``, else the number of usable cores."""
    env = os.environ.get("L1BANDIT_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer L1BANDIT_JOBS=%r", env)
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def _stable_id(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def environment_seed(master_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _ENV_TAG, rep])


def policy_seed(master_seed: int, policy_id: str, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _stable_id(policy_id), rep])


def checkpoints(T: int, every: int) -> list[int]:
    pts = list(range(every, T + 1, every))
    if not pts or pts[-1] != T:
        pts.append(T)
    return pts


def doubling_checkpoints(T: int) -> list[int]:
    pts = [2**k for k in range(T.bit_length()) if 2**k <= T]
    if pts[-1] != T:
        pts.append(T)
    return pts


# --------------------------------------------------------------------------- policies

def build_policy(pcfg: PolicyConfig, *, d: int, K: int, mode: str, model: TrueModel | None,
                 rng: np.random.Generator, sample_round=None, x_max: float = 1.0, sigma: float = 1.0,
                 known: dict | None = None):
    """Instantiate one configured policy for a problem of dimension ``d`` with ``K`` arms.

    ``known`` holds coefficients the environment reveals to the learner; LASSO
    policies pin them unless configured with ``use_known = false``.
    """
    p = dict(pcfg.params)
    kind = pcfg.type
    if kind in ("l1ball", "greedy"):
        known = known if p.get("use_known", True) else None
        if mode == "theoretical":
            if model is None:
                raise ConfigurationError(f"policy {pcfg.id}: theoretical constants need a known model")
            lam0 = 2.0 * math.sqrt(2.0) * model.sigma * model.x_max
        else:
            lam0 = P.PRACTICAL_LAMBDA0
        lam0 = p.get("lambda0", lam0)
        if kind == "greedy":
            return P.GreedyLassoPolicy(d, lambda0=lam0, known=known)
        tau0 = p.get("tau0")
        if tau0 is None:
            if mode == "theoretical":
                phi0 = p.get("phi0", "auto")
                if phi0 == "auto":
                    if sample_round is None:
                        raise ConfigurationError(f"policy {pcfg.id}: phi0 = auto needs a generated environment")
                    m = p.get("sparse_mult", 1) * model.s0
                    phi0 = estimate_phi0(sample_round, model, p.get("delta_star", 0.1), min(m, d),
                                         seed=int(rng.integers(2**31)))
                _, tau0 = P.theoretical_constants(model.sigma, model.x_max, model.s0, phi0)
            else:
                tau0 = P.PRACTICAL_TAU0
        return P.L1BallPolicy(d, lambda0=lam0, tau0=tau0, solve_every=p.get("solve_every", "round"),
                              known=known)
    if kind == "oful":
        return P.OFULPolicy(d, lambda_ridge=p.get("lambda_ridge", 1.0), delta=p.get("delta", 1e-4),
                            R=p.get("R", sigma), S_bound=p.get("S_bound", 1.0), x_max=x_max)
    if kind == "lasso_bandit":
        return P.LassoBanditPolicy(d, K, q=p.get("q", 1), h=p.get("h", 5.0), lambda1=p.get("lambda1", 0.5),
                                   lambda2_0=p.get("lambda2_0", 0.5))
    if kind == "ols_bandit":
        return P.OLSBanditPolicy(d, K, q=p.get("q", 1), h=p.get("h", 1.0))
    if kind == "random":
        return P.RandomPolicy(rng)
    if kind == "oracle":
        if model is None:
            raise ConfigurationError(f"policy {pcfg.id}: oracle needs a known model (use label_oracle for replay)")
        return P.OraclePolicy(model)
    if kind == "constant":
        return P.ConstantPolicy(p.get("arm", 0))
    if kind == "label_oracle":
        return P.LabelOraclePolicy()
    raise ConfigurationError(f"unknown policy type {kind!r}")


# --------------------------------------------------------------------------- simulation

def simulate(config: ExperimentConfig, pcfg: PolicyConfig, rep: int, horizon: int | None = None,
             record_snapshots: bool | None = None):
    """Run one (policy, repetition) job; returns ``(trace, snapshots or None)``."""
    spec = config.environment_spec()
    if spec is None:
        raise ConfigurationError("simulate needs a generated environment; use run_replay for replay")
    T = horizon or config.T
    env = make_environment(spec, environment_seed(config.master_seed, rep))
    model = env.model
    prng = np.random.default_rng(policy_seed(config.master_seed, pcfg.id, rep))
    policy = build_policy(pcfg, d=spec.dim, K=spec.K, mode=config.constant_mode, model=model, rng=prng,
                          sample_round=env.sample, x_max=model.x_max, sigma=model.sigma,
                          known=getattr(spec, "known_coefficients", None))
    snapshots = record_snapshots if record_snapshots is not None else config.diagnostics
    snap_at = set(doubling_checkpoints(T)) if snapshots else set()
    snap = {"t": [], "gram": [], "center": [], "radius": []}
    design = DesignState(spec.dim) if snapshots else None

    trace = RegretTrace(pcfg.id, rep)
    for t in range(1, T + 1):
        rnd = env.next_round(t)
        chosen = policy.select(rnd)
        optimal = best_arm(rnd, model.beta_star)
        trace.record(t, chosen, optimal, instant_regret(rnd, chosen, model))
        obs = Observation.from_round(rnd, chosen, env.reward(rnd.arms[chosen]))
        policy.update(obs)
        if design is not None:
            design_update(design, obs.feature, obs.reward)
            if t in snap_at:
                snap["t"].append(t)
                snap["gram"].append(design.gram.copy())
                ball = getattr(policy, "ball", None)
                snap["center"].append(ball.center.copy() if ball is not None else np.full(spec.dim, np.nan))
                snap["radius"].append(ball.radius if ball is not None else np.nan)
    trace.events.extend(getattr(policy, "events", []))
    if not snapshots:
        return trace, None
    snap = {k: np.asarray(v) for k, v in snap.items()}
    snap["beta_star"] = np.asarray(model.beta_star)
    return trace, snap


def _job(args):
    config, pcfg, rep = args
    return simulate(config, pcfg, rep)


def run_jobs(config: ExperimentConfig, jobs: int = 1):
    """All (policy, rep) jobs in config order: ``{(policy_id, rep): (trace, snapshot)}``."""
    work = [(config, pcfg, rep) for pcfg in config.policies for rep in range(config.repetitions)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, work))
    else:
        results = [_job(w) for w in work]
    return {(w[1].id, w[2]): r for w, r in zip(work, results)}


# --------------------------------------------------------------------------- CSV I/O

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path: Path, fields, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row[f]) for f in fields])


def _parse_cell(text: str):
    if text == "":
        return math.nan
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def trace_rows(trace: RegretTrace):
    for i in range(len(trace)):
        yield {"t": trace.t[i], "rep": trace.seed, "policy": trace.policy_id, "chosen_arm": trace.chosen_arm[i],
               "optimal_arm": trace.optimal_arm[i], "instant_regret": trace.instant_regret[i],
               "cum_regret": trace.cum_regret[i]}


def write_trace(path: Path, trace: RegretTrace) -> None:
    write_csv(path, TRACE_FIELDS, trace_rows(trace))


def read_trace(path) -> RegretTrace:
    rows = read_csv(path)
    if not rows:
        raise ConfigurationError(f"{path}: empty trace")
    trace = RegretTrace(str(rows[0]["policy"]), int(rows[0]["rep"]))
    for r in rows:
        trace.t.append(int(r["t"]))
        trace.chosen_arm.append(int(r["chosen_arm"]))
        trace.optimal_arm.append(int(r["optimal_arm"]))
        trace.instant_regret.append(float(r["instant_regret"]))
        trace.cum_regret.append(float(r["cum_regret"]))
    return trace


def trace_name(policy_id: str, rep: int) -> str:
    return f"{policy_id}_rep{rep:03d}"


def summarize(traces_by_policy: dict, points: list[int], value=lambda tr, t: tr.regret_at(t)) -> list[dict]:
    """Mean and sample sd across repetitions at each checkpoint, policies in insertion order."""
    rows = []
    for pid, traces in traces_by_policy.items():
        for t in points:
            vals = np.array([value(tr, t) for tr in traces])
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            rows.append({"t": t, "policy": pid, "mean": float(vals.mean()), "sd": sd, "n": int(vals.size)})
    return rows


def summary_series(rows) -> dict:
    series: dict = {}
    for r in rows:
        ts, ms = series.setdefault(str(r["policy"]), ([], []))
        ts.append(r["t"])
        ms.append(r["mean"])
    return series


def _write_events(out: Path, traces: list) -> None:
    rows = [{"policy": tr.policy_id, "rep": tr.seed, "t": t, "message": msg} for tr in traces for t, msg in tr.events]
    if rows:
        write_csv(out / "events.csv", ("policy", "rep", "t", "message"), rows)


# --------------------------------------------------------------------------- diagnostics files

DIAG_QP_ITERS = 500  # per-checkpoint budget; oracle-grade calls use the library default


def _truncate(trace: RegretTrace, t: int) -> RegretTrace:
    out = RegretTrace(trace.policy_id, trace.seed)
    out.t, out.chosen_arm, out.optimal_arm = trace.t[:t], trace.chosen_arm[:t], trace.optimal_arm[:t]
    out.instant_regret, out.cum_regret = trace.instant_regret[:t], trace.cum_regret[:t]
    return out


def diagnostics_rows(trace: RegretTrace, snapshot: dict | None = None, n_starts: int = 16) -> list[dict]:
    """Rows at ``t`` in {powers of two, T}: optimal-pull share over ``[t/2, t]`` and, when a
    snapshot is available, compatibility, sparse eigenvalues and ball coverage."""
    T = trace.t[-1]
    snaps = {}
    beta = None
    if snapshot is not None:
        beta = np.asarray(snapshot["beta_star"])
        for i, t in enumerate(np.asarray(snapshot["t"]).tolist()):
            snaps[int(t)] = i
    model = TrueModel(beta) if beta is not None and np.any(beta) else None
    rows = []
    for t in doubling_checkpoints(T):
        rep = DiagnosticsReport(t)
        rep.optimal_fraction = optimal_fraction(_truncate(trace, t), max(1, t // 2))
        if model is not None and t in snaps:
            i = snaps[t]
            sigma_hat = np.asarray(snapshot["gram"][i]) / t
            rep.phi_hat = compatibility_estimate(sigma_hat, model.support, n_starts=n_starts,
                                                 max_iter=DIAG_QP_ITERS, tol=1e-9, refine_rounds=3)
            rep.rho_min, rep.rho_max = sparse_eigen_probe(sigma_hat, model.s0)
            center, radius = np.asarray(snapshot["center"][i]), float(snapshot["radius"][i])
            if not math.isnan(radius):
                rep.coverage = float(coverage_check(center, model, radius))
        rows.append(rep.row())
    return rows


def diagnose_dir(run_dir, n_starts: int = 16) -> list[Path]:
    """Write ``diagnostics/<trace>.csv`` for every trace under ``run_dir/traces``."""
    run_dir = Path(run_dir)
    trace_files = sorted((run_dir / "traces").glob("*.csv"))
    if not trace_files:
        raise ConfigurationError(f"no trace CSVs under {run_dir / 'traces'}")
    written = []
    for tf in trace_files:
        trace = read_trace(tf)
        snap_file = run_dir / "snapshots" / (tf.stem + ".npz")
        snapshot = dict(np.load(snap_file)) if snap_file.exists() else None
        path = run_dir / "diagnostics" / tf.name
        write_csv(path, DiagnosticsReport.FIELDS, diagnostics_rows(trace, snapshot, n_starts))
        written.append(path)
    return written


# --------------------------------------------------------------------------- entry points

def run_experiment(config: ExperimentConfig, out: str | Path | None = None, jobs: int = 1) -> Path:
    """Simulate every (policy, rep) and write traces, summary, optional diagnostics and chart."""
    if config.environment_kind == "replay":
        raise ConfigurationError("environment.kind = replay must be run with `replay`")
    out = Path(out or config.output)
    results = run_jobs(config, jobs)
    by_policy: dict = {p.id: [] for p in config.policies}
    for (pid, rep), (trace, snap) in results.items():
        write_trace(out / "traces" / f"{trace_name(pid, rep)}.csv", trace)
        by_policy[pid].append(trace)
        if snap is not None:
            (out / "snapshots").mkdir(parents=True, exist_ok=True)
            np.savez(out / "snapshots" / f"{trace_name(pid, rep)}.npz", **snap)
    rows = summarize(by_policy, checkpoints(config.T, config.checkpoint_every))
    write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    _write_events(out, [tr for trs in by_policy.values() for tr in trs])
    if config.diagnostics:
        diagnose_dir(out, n_starts=config.diagnostics_starts)
    if config.chart:
        emit_chart(summary_series(rows), out / "regret.svg", ylabel="cumulative regret")
    return out


def replay_traces(config: ExperimentConfig, dataset=None) -> dict:
    """``{policy_id: [trace per permutation]}``; instant regret is the 0/1 misclassification."""
    if config.environment_kind != "replay":
        raise ConfigurationError("replay needs environment.kind = replay")
    env = config.environment
    data = dataset if dataset is not None else replay_load(env["path"], env["K"])
    out: dict = {p.id: [] for p in config.policies}
    for perm in range(config.permutations):
        order = np.random.default_rng(np.random.SeedSequence([config.master_seed, _ENV_TAG, perm])).permutation(data.n)
        for pcfg in config.policies:
            rng = np.random.default_rng(policy_seed(config.master_seed, pcfg.id, perm))
            x_max = float(np.abs(data.contexts).max()) or 1.0
            policy = build_policy(pcfg, d=data.d, K=data.K, mode=config.constant_mode, model=None, rng=rng,
                                  x_max=x_max)
            trace = RegretTrace(pcfg.id, perm)
            for t, i in enumerate(order[:config.T] if config.T < data.n else order, start=1):
                label = int(data.labels[i])
                rnd = ContextRound(t, data.embed(data.contexts[i]))
                if isinstance(policy, P.LabelOraclePolicy):
                    policy.reveal(label)
                chosen = policy.select(rnd)
                reward = 1.0 if chosen == label else 0.0
                trace.record(t, chosen, label, 1.0 - reward)
                policy.update(Observation.from_round(rnd, chosen, reward))
            trace.events.extend(getattr(policy, "events", []))
            out[pcfg.id].append(trace)
    return out


def misclassification(trace: RegretTrace, t: int | None = None) -> float:
    t = t or len(trace)
    return trace.regret_at(t) / t


def run_replay(config: ExperimentConfig, out: str | Path | None = None, dataset=None) -> Path:
    out = Path(out or config.output)
    traces = replay_traces(config, dataset)
    n = len(next(iter(traces.values()))[0])
    for pid, trs in traces.items():
        for tr in trs:
            write_trace(out / "traces" / f"{trace_name(pid, tr.seed)}.csv", tr)
    rows = summarize(traces, checkpoints(n, config.checkpoint_every), value=misclassification)
    write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    final = [{"policy": pid, "misclassification": float(np.mean([misclassification(tr) for tr in trs])),
              "permutations": len(trs)} for pid, trs in traces.items()]
    write_csv(out / "final.csv", ("policy", "misclassification", "permutations"), final)
    _write_events(out, [tr for trs in traces.values() for tr in trs])
    if config.chart:
        emit_chart(summary_series(rows), out / "misclassification.svg", ylabel="misclassification rate")
    return out
