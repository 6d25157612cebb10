import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from l1bandit.chart import emit_chart, render_svg
from l1bandit.cli import main
from l1bandit.config import load_config, parse_config
from l1bandit.core import ConfigurationError
from l1bandit.runner import (TRACE_FIELDS, checkpoints, default_jobs, doubling_checkpoints, environment_seed,
                             policy_seed, read_csv, read_trace, replay_traces, run_experiment, simulate,
                             write_csv)

SVG = "{http://www.w3.org/2000/svg}"

BASE = """
[experiment]
T = {T}
repetitions = {reps}
master_seed = 3
checkpoint_every = 5

[environment]
kind = synthetic
K = 3
d = 12
s0 = 2

[policy l1ball]
[policy oful]
[policy rand]
type = random
"""


def _config(tmp_path, T=30, reps=2, extra=""):
    p = tmp_path / "exp.ini"
    p.write_text(BASE.format(T=T, reps=reps) + extra, encoding="utf-8")
    return p


class TestConfig:
    def test_parse_defaults(self, tmp_path):
        cfg = load_config(_config(tmp_path))
        assert [p.id for p in cfg.policies] == ["l1ball", "oful", "rand"]
        assert cfg.policies[2].type == "random"
        assert cfg.constant_mode == "practical" and cfg.repetitions == 2 and cfg.T == 30

    @pytest.mark.parametrize("text,key", [
        ("[experiment]\nT = 5\nbogus = 1\n[environment]\nkind = synthetic\n[policy l1ball]\n", "experiment.bogus"),
        ("[experiment]\nT = 5\n[environment]\nkind = synthetic\nrho = 1\n[policy l1ball]\n", "environment.rho"),
        ("[experiment]\nT = 5\n[environment]\nkind = synthetic\n[policy l1ball]\nh = 2\n", "policy l1ball.h"),
        ("[experiment]\nT = 0\n[environment]\nkind = synthetic\n[policy l1ball]\n", "experiment.T"),
        ("[experiment]\nT = x\n[environment]\nkind = synthetic\n[policy l1ball]\n", "experiment.T"),
        ("[experiment]\nT = 5\n[environment]\nkind = synthetic\n", "policy"),
        ("[experiment]\nT = 5\n[environment]\nkind = moon\n[policy l1ball]\n", "environment.kind"),
        ("[experiment]\nT = 5\nconstant_mode = wild\n[environment]\nkind = synthetic\n[policy l1ball]\n",
         "experiment.constant_mode"),
    ])
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigurationError, match=re.escape(key)):
            parse_config(text)

    def test_environment_ranges_validated_at_load(self):
        with pytest.raises(ConfigurationError, match="s0"):
            parse_config("[experiment]\nT = 5\n[environment]\nkind = synthetic\nd = 4\ns0 = 9\n[policy l1ball]\n")

    def test_hard_horizon_defaults_to_T(self):
        cfg = parse_config("[experiment]\nT = 777\n[environment]\nkind = hard\nd = 10\n[policy l1ball]\n")
        assert cfg.environment_spec().T == 777

    def test_shipped_configs_parse(self):
        from pathlib import Path
        for path in sorted((Path(__file__).parents[1] / "configs").glob("*.ini")):
            load_config(path)


class TestSeedsAndCheckpoints:
    def test_checkpoints(self):
        assert checkpoints(25, 10) == [10, 20, 25]
        assert checkpoints(20, 10) == [10, 20]
        assert checkpoints(3, 10) == [3]
        assert doubling_checkpoints(10) == [1, 2, 4, 8, 10]

    def test_seed_streams_differ(self):
        a = np.random.default_rng(policy_seed(0, "x", 0)).random()
        b = np.random.default_rng(policy_seed(0, "y", 0)).random()
        c = np.random.default_rng(environment_seed(0, 1)).random()
        d = np.random.default_rng(environment_seed(0, 0)).random()
        assert len({a, b, c, d}) == 4

    def test_default_jobs_env(self, monkeypatch):
        monkeypatch.setenv("L1BANDIT_JOBS", "3")
        assert default_jobs() == 3
        monkeypatch.setenv("L1BANDIT_JOBS", "zero")
        assert default_jobs() >= 1


class TestRun:
    def test_single_round(self, tmp_path):
        p = tmp_path / "one.ini"
        p.write_text("[experiment]\nT = 1\n[environment]\nkind = synthetic\nK = 2\nd = 3\ns0 = 1\n"
                     "[policy random]\n", encoding="utf-8")
        assert main(["run", str(p), "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0
        rows = read_csv(tmp_path / "o" / "traces" / "random_rep000.csv")
        assert len(rows) == 1 and list(rows[0]) == list(TRACE_FIELDS)

    def test_outputs_and_summary_means(self, tmp_path):
        out = run_experiment(load_config(_config(tmp_path)), tmp_path / "run")
        for name in ("summary.csv", "regret.svg"):
            assert (out / name).exists()
        summary = read_csv(out / "summary.csv")
        traces = {rep: read_trace(out / "traces" / f"l1ball_rep{rep:03d}.csv") for rep in range(2)}
        for row in summary:
            if row["policy"] != "l1ball":
                continue
            vals = [traces[r].regret_at(row["t"]) for r in range(2)]
            assert row["mean"] == pytest.approx(np.mean(vals), rel=1e-12)
            assert row["sd"] == pytest.approx(np.std(vals, ddof=1), rel=1e-9, abs=1e-12)
        assert {r["t"] for r in summary} == {5, 10, 15, 20, 25, 30}

    def test_trace_roundtrip(self, tmp_path):
        cfg = load_config(_config(tmp_path))
        trace, _ = simulate(cfg, cfg.policies[0], 1)
        out = run_experiment(cfg, tmp_path / "run")
        back = read_trace(out / "traces" / "l1ball_rep001.csv")
        assert back.t == trace.t and back.chosen_arm == trace.chosen_arm
        assert back.instant_regret == trace.instant_regret and back.cum_regret == trace.cum_regret

    def test_csv_roundtrip_special_values(self, tmp_path):
        rows = [{"a": 0.1 + 0.2, "b": 1e-300, "c": 7, "d": float("nan"), "e": "x y"}]
        write_csv(tmp_path / "x.csv", list(rows[0]), rows)
        back = read_csv(tmp_path / "x.csv")[0]
        assert back["a"] == 0.1 + 0.2 and back["b"] == 1e-300 and back["c"] == 7 and back["e"] == "x y"
        assert np.isnan(back["d"])

    def test_determinism_byte_identical(self, tmp_path):
        cfg = _config(tmp_path)
        for name in ("a", "b"):
            assert main(["run", str(cfg), "--out", str(tmp_path / name), "--jobs", "1"]) == 0
        for f in sorted((tmp_path / "a" / "traces").glob("*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / "traces" / f.name).read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        cfg = _config(tmp_path, T=20)
        assert main(["run", str(cfg), "--out", str(tmp_path / "s"), "--jobs", "1"]) == 0
        assert main(["run", str(cfg), "--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
        for f in sorted((tmp_path / "s" / "traces").glob("*.csv")):
            assert f.read_bytes() == (tmp_path / "p" / "traces" / f.name).read_bytes()
        assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()

    def test_repetition_independence(self, tmp_path):
        # rep 1 computed alone equals rep 1 computed after rep 0
        cfg = load_config(_config(tmp_path))
        alone, _ = simulate(cfg, cfg.policies[0], 1)
        simulate(cfg, cfg.policies[0], 0)
        again, _ = simulate(cfg, cfg.policies[0], 1)
        assert alone.cum_regret == again.cum_regret

    def test_policies_share_contexts(self, tmp_path):
        cfg = load_config(_config(tmp_path))
        a, _ = simulate(cfg, cfg.policies[0], 0)
        b, _ = simulate(cfg, cfg.policies[1], 0)
        assert a.optimal_arm == b.optimal_arm

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = _config(tmp_path)
        main(["run", str(cfg), "--out", str(tmp_path / "a"), "--jobs", "1"])
        main(["run", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "1", "--seed", "99"])
        f = "l1ball_rep000.csv"
        assert (tmp_path / "a" / "traces" / f).read_bytes() != (tmp_path / "b" / "traces" / f).read_bytes()

    def test_diagnostics_files(self, tmp_path):
        cfg = _config(tmp_path, T=16, reps=1, extra="")
        text = cfg.read_text().replace("checkpoint_every = 5", "checkpoint_every = 5\ndiagnostics = true\n"
                                       "diagnostics_starts = 4")
        cfg.write_text(text)
        assert main(["run", str(cfg), "--out", str(tmp_path / "d"), "--jobs", "1"]) == 0
        rows = read_csv(tmp_path / "d" / "diagnostics" / "l1ball_rep000.csv")
        assert [r["t"] for r in rows] == [1, 2, 4, 8, 16]
        assert list(rows[0]) == ["t", "phi_hat", "rho_min", "rho_max", "coverage", "optimal_fraction"]
        # the diagnose subcommand regenerates the same files
        before = (tmp_path / "d" / "diagnostics" / "l1ball_rep000.csv").read_bytes()
        assert main(["diagnose", str(tmp_path / "d"), "--starts", "4"]) == 0
        assert (tmp_path / "d" / "diagnostics" / "l1ball_rep000.csv").read_bytes() == before


class TestExitCodes:
    def test_bad_key_exit_2(self, tmp_path, capsys):
        p = _config(tmp_path, extra="[policy greedy]\nwidth = 3\n")
        assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "policy greedy.width" in capsys.readouterr().err

    def test_missing_file_exit_3(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.ini")]) == 3

    def test_unwritable_output_exit_3(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["run", str(_config(tmp_path)), "--out", str(blocker / "sub"), "--jobs", "1"]) == 3

    def test_diagnose_empty_dir_exit_2(self, tmp_path):
        assert main(["diagnose", str(tmp_path)]) == 2

    def test_replay_on_synthetic_exit_2(self, tmp_path):
        assert main(["replay", str(_config(tmp_path))]) == 2


class TestReplay:
    def _dataset(self, tmp_path, n=400, K=4, p=3, seed=0):
        rng = np.random.default_rng(seed)
        labels = rng.choice(K, size=n, p=[0.55, 0.2, 0.15, 0.1])
        lines = ["label," + ",".join(f"x{j}" for j in range(p))]
        for lab in labels:
            lines.append(f"{lab}," + ",".join(f"{v:.6f}" for v in rng.uniform(0, 1, p)))
        path = tmp_path / "data.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path, labels

    def _cfg(self, tmp_path, path, perms=10):
        text = (f"[experiment]\nT = 100000\npermutations = {perms}\nmaster_seed = 1\n"
                f"[environment]\nkind = replay\npath = {path.name}\nK = 4\n"
                "[policy label_oracle]\n[policy random]\n[policy majority]\ntype = constant\narm = 0\n"
                "[policy l1ball]\n")
        cfgp = tmp_path / "replay.ini"
        cfgp.write_text(text, encoding="utf-8")
        return cfgp

    def test_controls(self, tmp_path):
        path, labels = self._dataset(tmp_path)
        cfg = load_config(self._cfg(tmp_path, path))
        traces = replay_traces(cfg)
        mis = {pid: np.mean([tr.final_regret / len(tr) for tr in trs]) for pid, trs in traces.items()}
        assert mis["label_oracle"] == 0.0
        assert mis["majority"] == pytest.approx(1 - np.mean(labels == 0), abs=1e-12)
        n_draws = 10 * len(labels)
        assert abs(mis["random"] - 0.75) < 3 * np.sqrt(0.75 * 0.25 / n_draws)
        assert all(len(trs) == 10 for trs in traces.values())

    def test_cli_outputs(self, tmp_path):
        path, _ = self._dataset(tmp_path, n=60)
        cfgp = self._cfg(tmp_path, path, perms=2)
        assert main(["replay", str(cfgp), "--out", str(tmp_path / "r")]) == 0
        final = read_csv(tmp_path / "r" / "final.csv")
        assert [r["policy"] for r in final] == ["label_oracle", "random", "majority", "l1ball"]
        assert (tmp_path / "r" / "misclassification.svg").exists()
        assert len(list((tmp_path / "r" / "traces").glob("*.csv"))) == 8

    def test_bad_file_exit_2(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("label,x\n9,1.0\n", encoding="utf-8")
        assert main(["replay", str(self._cfg(tmp_path, path))]) == 2


class TestChart:
    def test_single_policy_two_points(self, tmp_path):
        path = emit_chart({"only": ([1, 2], [0.0, 1.0])}, tmp_path / "c.svg")
        root = ET.parse(path).getroot()
        lines = root.findall(f"{SVG}polyline")
        assert len(lines) == 1 and len(lines[0].get("points").split()) == 2

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            emit_chart({}, tmp_path / "c.svg")
        with pytest.raises(ConfigurationError):
            emit_chart({"a": ([], [])}, tmp_path / "c.svg")

    def test_legend_order_axes_and_determinism(self):
        names = ["l1ball", "lasso_bandit", "ols_bandit", "oful", "greedy"]
        series = {n: ([10, 20, 30], [i, 2 * i, 3 * i + 1]) for i, n in enumerate(names)}
        text = render_svg(series)
        assert text == render_svg(series)
        root = ET.fromstring(text)
        assert [pl.get("data-label") for pl in root.findall(f"{SVG}polyline")] == names
        assert [t.text for t in root.findall(f"{SVG}text[@class='legend']")] == names
        labels = [t.text for t in root.findall(f"{SVG}text")]
        assert "t" in labels and "cumulative regret" in labels

    def test_chart_subcommand(self, tmp_path):
        out = run_experiment(load_config(_config(tmp_path)), tmp_path / "run")
        assert main(["chart", str(out / "summary.csv"), str(tmp_path / "x.svg")]) == 0
        root = ET.parse(tmp_path / "x.svg").getroot()
        assert len(root.findall(f"{SVG}polyline")) == 3

    def test_chart_bad_summary(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,b\n1,2\n")
        assert main(["chart", str(p), str(tmp_path / "x.svg")]) == 2
        assert main(["chart", str(tmp_path / "missing.csv"), str(tmp_path / "x.svg")]) == 3
