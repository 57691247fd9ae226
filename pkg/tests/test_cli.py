import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from reservoir_hjb.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from reservoir_hjb.config import estimate_bins, load_config, parse_config
from reservoir_hjb.errors import ConfigError, InputError
from reservoir_hjb.regime import synthetic_inflow_record, synthetic_transition_matrix, write_inflow_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_case(tmp_path, **overrides) -> Path:
    data = json.loads((CONFIGS / "test_case.json").read_text())
    data["solver"].update(K=20, T_days=30.0)
    data["verify"] = {"K_values": [20, 40], "residual_samples": 50}
    data["simulate"].update(n_paths=4, horizon_days=5.0)
    for key, value in overrides.items():
        data[key] = value
    path = tmp_path / "case.json"
    path.write_text(json.dumps(data))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.json")):
            cfg = load_config(path)
            cfg.problem()

    def test_synthetic_units(self):
        cfg = load_config(CONFIGS / "synthetic_application.json")
        prob = cfg.problem()
        assert prob.num_regimes == 41
        assert prob.time_scale == 86400.0 and prob.rate_factor == 24.0
        assert prob.costs.band == pytest.approx((0.2 * 6.08e7, 0.8 * 6.08e7))
        assert prob.costs.y == pytest.approx(50.0)

    @pytest.mark.parametrize("data, match", [
        ({"bogus": 1}, "unknown keys"),
        ({"time_unit": "week"}, "time_unit"),
        ({"costs": {"band": [0.3, 0.7], "q_max": 3}}, "unknown keys in costs"),
        ({"solver": {"K": 3}}, "K must"),
        ({"verify": {"K_values": [2]}}, "K_values"),
        ({"simulate": {"n_paths": 1}}, "n_paths"),
    ])
    def test_rejects(self, tmp_path, data, match):
        with pytest.raises(ConfigError, match=match):
            cfg = parse_config(data, tmp_path)
            cfg.problem()

    def test_both_band_forms_rejected(self, tmp_path):
        cfg = parse_config({"costs": {"band": [0.3, 0.7], "band_fraction": [0.3, 0.7]}}, tmp_path)
        with pytest.raises(ConfigError):
            cfg.problem()

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "a": 1,\n  oops\n}')
        with pytest.raises(InputError, match="line 3"):
            load_config(path)

    def test_capacity_assumption(self, tmp_path):
        cfg = parse_config({"costs": {"band": [0.3, 0.7], "q_max_m3s": 0.5}}, tmp_path)
        with pytest.raises(ConfigError, match="capacity assumption"):
            cfg.problem()

    def test_estimate_bins_midpoints(self):
        from reservoir_hjb.config import EstimateBlock

        edges, reps = estimate_bins(EstimateBlock(bin_edges_m3s=[0, 10, 30]))
        assert reps.tolist() == [5, 20, 30]
        with pytest.raises(ConfigError):
            estimate_bins(EstimateBlock())


class TestCommands:
    def test_solve_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", str(small_case(tmp_path)), "--output-dir", str(out), "--quiet"]) == 0
        value = read_rows(out / "value.csv")
        policy = read_rows(out / "policy.csv")
        assert value[0] == ["regime", "k", "v", "phi"] and len(value) == 22
        assert policy[0] == ["regime", "k", "v", "q_star"]
        assert float(value[-1][2]) == 1.0
        assert read_rows(out / "convergence.csv")[0] == ["step", "t", "residual"]
        assert json.loads((out / "regime_model.json").read_text())["bin_edges"] == [0.0]
        assert (out / "value.csv").read_bytes().count(b"\r") == 0

    def test_solve_normalize(self, tmp_path):
        case = small_case(tmp_path)
        main(["solve", str(case), "--output-dir", str(tmp_path / "a"), "--quiet"])
        main(["solve", str(case), "--output-dir", str(tmp_path / "b"), "--quiet", "--normalize"])
        a = np.array([float(r[3]) for r in read_rows(tmp_path / "a" / "value.csv")[1:]])
        b = np.array([float(r[3]) for r in read_rows(tmp_path / "b" / "value.csv")[1:]])
        assert np.allclose(b, a * 0.1 / 0.5)

    def test_verify_outputs(self, tmp_path):
        out = tmp_path / "v"
        assert main(["verify", str(small_case(tmp_path)), "--output-dir", str(out), "--quiet"]) == 0
        rows = read_rows(out / "table1.csv")
        assert rows[0][:5] == ["K", "weno_l1", "weno_linf", "llxf_l1", "llxf_linf"]
        assert [r[0] for r in rows[1:]] == ["20", "40"]
        assert rows[1][5] == "nan" and 0.5 < float(rows[2][5]) < 1.5
        validity = json.loads((out / "validity.json").read_text())
        assert validity["valid"] is False and validity["admissible"] is True
        assert len(read_rows(out / "residual_profile.csv")) == 151

    def test_verify_refuses_non_closed_form(self, tmp_path):
        data = json.loads(small_case(tmp_path).read_text())
        data["costs"]["m"] = 2
        path = tmp_path / "m2.json"
        path.write_text(json.dumps(data))
        assert main(["verify", str(path), "--output-dir", str(tmp_path), "--quiet"]) == EXIT_INPUT

    def test_simulate_round_trip(self, tmp_path):
        case = small_case(tmp_path)
        out = tmp_path / "out"
        main(["solve", str(case), "--output-dir", str(out), "--quiet"])
        rc = main(["simulate", str(case), "--output-dir", str(out), "--quiet",
                   "--policy", str(out / "policy.csv"), "--seed", "5"])
        assert rc == EXIT_OK
        traj = read_rows(out / "trajectory.csv")
        assert traj[0] == ["t", "regime", "v", "q", "cost_increment"]
        ens = read_rows(out / "ensemble.csv")
        assert ens[0] == ["n_paths", "mean", "stderr"] and ens[1][0] == "4"

    def test_simulate_rejects_mismatched_policy(self, tmp_path):
        case = small_case(tmp_path)
        out = tmp_path / "out"
        main(["solve", str(case), "--output-dir", str(out), "--quiet"])
        data = json.loads(case.read_text())
        data["solver"]["K"] = 40
        other = tmp_path / "k40.json"
        other.write_text(json.dumps(data))
        rc = main(["simulate", str(other), "--output-dir", str(out), "--quiet",
                   "--policy", str(out / "policy.csv")])
        assert rc == EXIT_INPUT

    def test_estimate(self, tmp_path):
        p = synthetic_transition_matrix(4, seed=1)
        edges = [0.0, 10.0, 20.0, 30.0]
        _, q = synthetic_inflow_record(p, edges, n_hours=5000, seed=2)
        write_inflow_csv(tmp_path / "inflow.csv", q)
        cfg = tmp_path / "est.json"
        cfg.write_text(json.dumps({"estimate": {"inflow_csv": "inflow.csv",
                                                "bin_edges_m3s": edges}}))
        out = tmp_path / "e"
        assert main(["estimate", str(cfg), "--output-dir", str(out), "--quiet"]) == EXIT_OK
        pij = read_rows(out / "pij.csv")
        assert pij[0] == ["i", "j", "p"] and len(pij) == 17
        pi = np.array([float(r[1]) for r in read_rows(out / "stationary.csv")[1:]])
        assert pi.sum() == pytest.approx(1.0)
        model = json.loads((out / "regime_model.json").read_text())
        assert model["representatives"] == [5.0, 15.0, 25.0, 30.0]

    def test_estimate_bad_record(self, tmp_path):
        (tmp_path / "inflow.csv").write_text("timestamp,discharge_m3s\n2016-01-01T00:00:00,x\n")
        cfg = tmp_path / "est.json"
        cfg.write_text(json.dumps({"estimate": {"inflow_csv": "inflow.csv", "bin_edges_m3s": [0]}}))
        assert main(["estimate", str(cfg), "--quiet"]) == EXIT_INPUT

    @pytest.mark.parametrize("argv", [["solve", "missing.json"], ["bogus"], []])
    def test_input_errors(self, argv):
        assert main(argv) == EXIT_INPUT

    @pytest.mark.filterwarnings("ignore::reservoir_hjb.solver.ValueBoundWarning")
    def test_numerical_failure_exit_code(self, tmp_path):
        data = json.loads(small_case(tmp_path).read_text())
        data["solver"].update(dt_factor=40.0, T_days=3000.0)  # far beyond the stable step
        path = tmp_path / "unstable.json"
        path.write_text(json.dumps(data))
        assert main(["solve", str(path), "--output-dir", str(tmp_path), "--quiet"]) == EXIT_NUMERICAL

    def test_console_script(self, tmp_path):
        exe = shutil.which("reservoir-hjb")
        if exe is None:
            pytest.skip("package not installed")
        import subprocess

        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "solve" in proc.stdout
