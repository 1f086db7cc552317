import json
import math
import os

import numpy as np
import pytest

import lowrank_lab.cli as cli
from lowrank_lab.cli import (
    ExperimentConfig,
    build_instance,
    cmd_oracle_compare,
    cmd_report,
    cmd_run,
    cmd_sweep,
    cmd_verify_lemmas,
    config_hash,
    load_config,
    main,
    parse_config_text,
)
from lowrank_lab.errors import ValidationError

PRACTICAL = """
m = 6
n = 5
d = 2
singular_values = 2.0, 1.0
mode = practical
epsilon = 0.05
eta = 0.05
seed = 3
T_max = 3000
delta = 1e-12
record_every = 10
snapshot_every = 50
"""


def _write(tmp_path, text, name="cfg.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_round_trip(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        assert cfg.m == 6 and cfg.d == 2
        assert cfg.singular_values == (2.0, 1.0)
        assert cfg.mode == "practical" and cfg.eta == 0.05

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            parse_config_text("learning_rate = 0.1")

    def test_lambda_alias(self):
        raw = parse_config_text("lambda = 1.0")
        assert raw == {"lam": 1.0}

    def test_theory_mode_forbids_explicit_eta(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(kappa=2.0, mode="theory", eta=0.1, epsilon=0.1)

    def test_override_flag_allows_explicit_eta(self):
        cfg = ExperimentConfig(kappa=2.0, mode="theory", eta=0.1,
                               epsilon=0.1, override_theory=True)
        assert cfg.eta == 0.1

    def test_practical_requires_scales(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(kappa=2.0, mode="practical")

    def test_exactly_one_spectrum_source(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="practical", epsilon=0.1, eta=0.1)
        with pytest.raises(ValidationError):
            ExperimentConfig(singular_values=(2.0, 1.0), kappa=2.0,
                             mode="practical", epsilon=0.1, eta=0.1)

    def test_kappa_generator(self):
        cfg = ExperimentConfig(kappa=10.0, d=3, mode="practical",
                               epsilon=0.1, eta=0.1)
        inst = build_instance(cfg)
        assert inst.kappa == pytest.approx(10.0)
        cfg1 = ExperimentConfig(kappa=10.0, d=1, mode="practical",
                                epsilon=0.1, eta=0.1)
        assert build_instance(cfg1).singular_values[0] == 10.0

    def test_hash_stable_and_sensitive(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        assert config_hash(cfg) == config_hash(cfg)
        other = load_config(_write(tmp_path, PRACTICAL.replace(
            "seed = 3", "seed = 4"), name="cfg2.txt"))
        assert config_hash(cfg) != config_hash(other)


class TestCmdRun:
    def test_smoke_artifacts(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        out = tmp_path / "out"
        assert cmd_run(cfg, str(out), no_plots=False) == 0
        for name in ("trajectory.csv", "phase_report.json",
                     "conditions.json", "run_meta.json", "loss.svg"):
            assert (out / name).exists(), name
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["config_hash"] == config_hash(cfg)
        phase = json.loads((out / "phase_report.json").read_text())
        assert phase["Tf"] is not None

    def test_byte_identical_reruns(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cmd_run(cfg, str(out1))
        cmd_run(cfg, str(out2))
        for name in ("trajectory.csv", "phase_report.json",
                     "conditions.json", "run_meta.json", "loss.svg",
                     "Delta.svg"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_lambda_comparison_artifacts(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL + "lambda = 1.0\n"))
        out = tmp_path / "cmp"
        assert cmd_run(cfg, str(out)) == 0
        assert (out / "trajectory_lambda0.csv").exists()
        assert (out / "balance_compare.svg").exists()

    def test_divergence_exit_code_with_partial(self, tmp_path):
        text = PRACTICAL.replace("eta = 0.05", "eta = 5.0")
        cfg = load_config(_write(tmp_path, text))
        out = tmp_path / "div"
        assert cmd_run(cfg, str(out)) == cli.EXIT_DIVERGENCE
        assert (out / "run_meta.json").exists()
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["diverged"] is True


class TestCmdSweep:
    def test_single_point_matches_run(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        out = tmp_path / "sw"
        assert cmd_sweep(cfg, str(out)) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        header = lines[1].split(",")
        row = dict(zip(header, lines[2].split(",")))
        run_out = tmp_path / "single"
        cmd_run(cfg, str(run_out))
        phase = json.loads((run_out / "phase_report.json").read_text())
        assert int(row["Tf"]) == phase["Tf"]

    def test_seed_axis_success_rate(self, tmp_path):
        text = PRACTICAL.replace("seed = 3", "seed = 1, 2, 3, 4")
        cfg = load_config(_write(tmp_path, text))
        out = tmp_path / "seeds"
        assert cmd_sweep(cfg, str(out)) == 0
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert summary["rows"] == 4
        assert summary["success_rate"] == 1.0

    def test_seeds_count_expansion(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL + "seeds = 3\n"))
        out = tmp_path / "seedcount"
        cmd_sweep(cfg, str(out))
        lines = (out / "sweep.csv").read_text().splitlines()[2:]
        seeds = [int(line.split(",")[1]) for line in lines]
        assert seeds == [3, 4, 5]

    def test_eta_grid_slope_ratio(self, tmp_path):
        text = """
m = 2
n = 2
d = 2
singular_values = 2.0, 1.0
mode = practical
epsilon = 0.05
eta = 0.05, 0.025
seed = 11
delta = 1e-4, 1e-6, 1e-8, 1e-10
T_max = 100000
record_every = 1
"""
        cfg = load_config(_write(tmp_path, text))
        out = tmp_path / "grid"
        assert cmd_sweep(cfg, str(out)) == 0
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert len(summary["scaling_fits"]) == 2
        for fit in summary["scaling_fits"].values():
            assert fit["r_squared"] >= 0.99
        assert summary["slope_ratio_eta_halved"] == pytest.approx(2.0,
                                                                  rel=0.15)


class TestCmdVerifyLemmas:
    def test_small_clean_sweep(self, capsys, tmp_path):
        code = cmd_verify_lemmas(60, 4, seed=5, out=str(tmp_path / "lem"))
        assert code == 0
        report = json.loads((tmp_path / "lem" / "lemma_report.json")
                            .read_text())
        assert report["S_recursion"]["violations"] == 0
        assert report["P_recursion"]["violations"] == 0
        assert report["commuting_identity"]["violations"] == 0

    def test_zero_samples(self, capsys):
        assert cmd_verify_lemmas(0, 3, seed=0) == 0

    def test_bad_beta_rejected(self):
        with pytest.raises(ValidationError):
            cmd_verify_lemmas(10, 3, seed=0, betas=(1.5,))

    def test_violations_exit_code(self, monkeypatch, capsys):
        from lowrank_lab.verification import SweepResult

        fake = SweepResult(checked=1, skipped=0, violations=1,
                           worst_slack=-1.0)
        monkeypatch.setattr(cli, "sweep_lemma_S", lambda *a, **k: fake)
        assert cmd_verify_lemmas(1, 2, seed=0) == cli.EXIT_VIOLATION


class TestCmdOracleCompare:
    def test_default_passes(self, capsys, tmp_path):
        assert cmd_oracle_compare(out=str(tmp_path / "oc")) == 0
        report = json.loads((tmp_path / "oc" / "oracle_report.json")
                            .read_text())
        assert report["pass"] is True

    def test_zero_horizon(self, capsys):
        assert cmd_oracle_compare(t_end=0.0) == 0

    def test_coarse_dt_relaxed_tolerance(self, capsys):
        # 4th-order comparison error grows ~(dt)^4; tolerance follows.
        assert cmd_oracle_compare(dt=0.1 / 2.0, kappa=2.0) == 0
        out = capsys.readouterr().out
        report = json.loads(out)
        assert report["closed_form_S_vs_rk4"]["tolerance"] > 1e-6


class TestCmdReport:
    def test_recompute_from_artifacts(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        run_dir = tmp_path / "run"
        cmd_run(cfg, str(run_dir))
        rep_dir = tmp_path / "rep"
        assert cmd_report(str(run_dir), out=str(rep_dir)) == 0
        orig = json.loads((run_dir / "phase_report.json").read_text())
        redo = json.loads((rep_dir / "phase_report.json").read_text())
        assert orig["T1"] == redo["T1"] and orig["Tf"] == redo["Tf"]

    def test_hash_mismatch_rejected(self, tmp_path):
        cfg = load_config(_write(tmp_path, PRACTICAL))
        run_dir = tmp_path / "run"
        cmd_run(cfg, str(run_dir))
        csv_path = run_dir / "trajectory.csv"
        lines = csv_path.read_text().splitlines()
        lines[0] = "# config_hash=deadbeef"
        csv_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError):
            cmd_report(str(run_dir), out=str(tmp_path / "rep"))


class TestMainEntry:
    def test_run_and_exit_codes(self, tmp_path):
        cfg_path = _write(tmp_path, PRACTICAL)
        out = str(tmp_path / "main_out")
        assert main(["run", "--config", cfg_path, "--out", out,
                     "--no-plots"]) == 0
        assert main(["report", "--run", out, "--no-plots"]) == 0

    def test_validation_exit_code(self, tmp_path):
        bad = _write(tmp_path, "mode = practical\nkappa = 2.0\n")
        assert main(["run", "--config", bad,
                     "--out", str(tmp_path / "x")]) == cli.EXIT_VALIDATION

    def test_seed_override(self, tmp_path):
        cfg_path = _write(tmp_path, PRACTICAL)
        out1 = tmp_path / "s1"
        out2 = tmp_path / "s2"
        main(["run", "--config", cfg_path, "--out", str(out1), "--seed",
              "5", "--no-plots"])
        main(["run", "--config", cfg_path, "--out", str(out2), "--seed",
              "5", "--no-plots"])
        assert (out1 / "trajectory.csv").read_bytes() == \
            (out2 / "trajectory.csv").read_bytes()
