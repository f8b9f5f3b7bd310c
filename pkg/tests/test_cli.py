import csv
import json

import numpy as np
import pytest

from singctrl.analysis import run_experiment
from singctrl.cli import fmt, main
from singctrl.config import load_config
from singctrl.errors import ConfigError

SMALL = ["--n", "60", "--tol", "1e-8", "--no-plots"]


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestValidation:
    def test_rho_out_of_range(self, tmp_path, capsys):
        code, out = _run(capsys, "solve", "--problem", "fishery", "--rho", "1.5", "--out", str(tmp_path))
        assert code == 2 and "rho" in out.err

    def test_empty_sweep_list(self, tmp_path, capsys):
        code, out = _run(capsys, "sweep", "--problem", "fishery", "--rhos", "", "--out", str(tmp_path))
        assert code == 2 and "rhos" in out.err

    def test_sir_has_no_oracle(self, tmp_path, capsys):
        code, out = _run(capsys, "compare", "--problem", "sir", "--out", str(tmp_path))
        assert code == 2 and "no analytic oracle" in out.err

    def test_sir_convergence_refused(self, tmp_path, capsys):
        code, _ = _run(capsys, "convergence", "--problem", "sir", "--out", str(tmp_path))
        assert code == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('problem = "fishery"\nbogus = 1\n')
        code, out = _run(capsys, "solve", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert code == 2 and "bogus" in out.err

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError) as info:
            load_config(problem="fishery", params={"zeta": 1.0})
        assert info.value.field == "params.zeta"

    def test_case_needs_plant(self):
        with pytest.raises(ConfigError) as info:
            load_config(problem="fishery", case="2a")
        assert info.value.field == "case"

    def test_defaults(self):
        cfg = load_config(problem="sir")
        assert cfg.tol == 1e-8 and cfg.rho == (0.0, 0.0) and cfg.n == 750
        cfg = load_config(problem="fishery")
        assert cfg.tol == 1e-10 and cfg.rho == (1e-2,)
        assert load_config(problem="sir", rho=(0.1,)).rho == (0.1, 0.0)

    def test_solver_failure_exit_code(self, tmp_path, capsys):
        code, _ = _run(capsys, "solve", "--problem", "fishery", "--max-iters", "1", *SMALL, "--out", str(tmp_path))
        assert code == 1


class TestSolve:
    def test_outputs_and_roundtrip(self, tmp_path, capsys):
        code, _ = _run(capsys, "solve", "--problem", "fishery", *SMALL, "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "solver.log").read_text().strip()
        rows = _read_csv(tmp_path / "trajectory.csv")
        assert rows[0] == ["t", "u_1", "x_1", "lambda_1", "phi_1"]
        assert len(rows) == 1 + 61
        assert rows[-1][1] == "" and rows[-1][2] != ""
        cfg = load_config(problem="fishery", n=60, tol=1e-8)
        p = cfg.build_problem()
        _, traj, _ = run_experiment(p, cfg.mesh(p), cfg.weights(), cfg.solver_config())
        u = np.array([float(r[1]) for r in rows[1:-1]])
        x = np.array([float(r[2]) for r in rows[1:]])
        assert np.array_equal(u, traj.u[0]) and np.array_equal(x, traj.x[0])
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["problem"] == "fishery" and report["solver"]["reason"] == "converged"

    def test_csv_is_deterministic(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert _run(capsys, "solve", "--problem", "plant", "--case", "2b", *SMALL, "--out", str(tmp_path / d))[0] == 0
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()

    def test_report_keys_are_the_same_for_every_problem(self, tmp_path, capsys):
        keys = []
        for prob in ("fishery", "sir"):
            _run(capsys, "solve", "--problem", prob, *SMALL, "--out", str(tmp_path / prob))
            keys.append(set(json.loads((tmp_path / prob / "report.json").read_text())))
        assert keys[0] == keys[1]

    def test_sir_columns(self, tmp_path, capsys):
        _run(capsys, "solve", "--problem", "sir", *SMALL, "--out", str(tmp_path))
        header = _read_csv(tmp_path / "trajectory.csv")[0]
        assert header == ["t", "u_1", "u_2", "x_1", "x_2", "x_3", "lambda_1", "lambda_2", "lambda_3",
                          "phi_1", "phi_2"]

    def test_plot_written(self, tmp_path, capsys):
        argv = [a for a in SMALL if a != "--no-plots"]
        assert _run(capsys, "solve", "--problem", "fishery", *argv, "--out", str(tmp_path))[0] == 0
        assert (tmp_path / "trajectory.png").read_bytes()[:4] == b"\x89PNG"

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('problem = "plant"\ncase = "2c"\nn = 40\ntol = 1e-8\n[params]\nx20 = 2.5\n')
        out = tmp_path / "o"
        code, _ = _run(capsys, "solve", "--config", str(cfg), "--n", "50", "--no-plots", "--out", str(out))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["N"] == 50 and report["case"] == "2c"
        assert load_config(cfg).build_params().x20 == 2.5


class TestOtherCommands:
    def test_sweep(self, tmp_path, capsys):
        code, _ = _run(capsys, "sweep", "--problem", "fishery", "--rhos", "0,0.01", *SMALL, "--out", str(tmp_path))
        assert code == 0
        rows = _read_csv(tmp_path / "sweep.csv")
        assert rows[0][:4] == ["rho", "l1_error", "linf_error", "switch"]
        assert [r[0] for r in rows[1:]] == ["0", "0.01"]
        assert (tmp_path / "rho_0.01" / "trajectory.csv").exists()

    def test_convergence_single_mesh_has_no_fit(self, tmp_path, capsys):
        code, _ = _run(capsys, "convergence", "--problem", "fishery", "--h", "0.2", "--tol", "1e-8",
                       "--no-plots", "--out", str(tmp_path))
        assert code == 0
        rows = _read_csv(tmp_path / "convergence.csv")
        assert rows[0] == ["h", "err_h", "ratio", "log2ratio", "outlier"] and len(rows) == 2
        assert not (tmp_path / "fit.json").exists()

    def test_convergence_fit(self, tmp_path, capsys):
        code, _ = _run(capsys, "convergence", "--problem", "fishery", "--h", "0.2,0.1,0.05", "--tol", "1e-8",
                       "--no-plots", "--out", str(tmp_path))
        assert code == 0
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert set(fit) == {"with_outliers", "without_outliers", "outlier_h"}
        rows = _read_csv(tmp_path / "convergence.csv")
        assert [float(r[0]) for r in rows[1:]] == [0.2, 0.1, 0.05]

    def test_compare_plant_2b(self, tmp_path, capsys):
        code, _ = _run(capsys, "compare", "--problem", "plant", "--case", "2b", "--n", "100", "--tol", "1e-8",
                       "--no-plots", "--out", str(tmp_path))
        assert code == 0
        errors = json.loads((tmp_path / "errors.json").read_text())
        assert errors["exact"]["t1"] == pytest.approx(0.2678, abs=1e-3)
        assert errors["l1_error"] < 0.2
        header = _read_csv(tmp_path / "compare.csv")[0]
        assert header == ["t", "u_num", "u_exact", "diff", "x_1_num", "x_1_exact", "x_2_num", "x_2_exact"]


def test_fmt_roundtrip():
    rng = np.random.default_rng(0)
    for v in rng.standard_normal(100) * 10.0 ** rng.integers(-12, 12, 100):
        assert float(fmt(v)) == v
    assert fmt(None) == ""
