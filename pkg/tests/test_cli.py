import csv
import json

import numpy as np
import pytest

from fastkm import cli
from fastkm.schemes import read_trace_csv


def run_cli(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def load(path):
    with open(path) as fh:
        return json.load(fh)


class TestExitCodes:
    def test_unknown_flag(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            cli.main(["rotation", "--nn", "3", "--out", str(tmp_path)])
        assert e.value.code == 2

    def test_no_abbreviation(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            cli.main(["rotation", "--km", "0.5", "--out", str(tmp_path)])
        assert e.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as e:
            cli.main([])
        assert e.value.code == 2

    def test_step_too_large(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, ["rotation", "--n", "2", "--methods", "fast-km", "--step", "2.5", "--kmax", "5", "--out", str(tmp_path)])
        assert code == 2 and "1/θ" in err
        assert not (tmp_path / "run.json").exists()

    def test_alpha_too_small(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, ["feasibility", "--alpha", "2", "--ntest", "1", "--ninit", "1", "--out", str(tmp_path)])
        assert code == 2 and "α > 2" in err

    def test_lambda_outside_window(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, ["diagnose", "--lambda", "1.9", "--n", "2", "--kmax", "20", "--out", str(tmp_path)])
        assert code == 2 and "λ̲ < λ < λ̄" in err

    def test_unknown_method(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, ["rotation", "--methods", "newton", "--out", str(tmp_path)])
        assert code == 2

    def test_check_passes(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, ["check", "--pairs", "200", "--out", str(tmp_path)])
        assert code == 0
        rep = load(tmp_path / "check.json")
        assert rep["violations"] == 0 and rep["failed_reductions"] == []

    def test_check_dr(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, ["check", "--operator", "dr-feasibility", "--n", "3", "--pairs", "200", "--out", str(tmp_path)])
        assert code == 0
        assert all(v <= 1e-12 for v in load(tmp_path / "check.json")["reductions"].values())

    def test_check_misdeclared_theta(self, capsys, tmp_path):
        # the rotation resolvent is not 0.1-averaged
        code, _, err = run_cli(capsys, ["check", "--theta", "0.1", "--pairs", "200", "--out", str(tmp_path)])
        assert code == 1 and "violations" in err
        assert load(tmp_path / "check.json")["violations"] > 0


class TestOutputs:
    def test_rotation_schema(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, ["rotation", "--n", "2", "--kmax", "30", "--methods", "bp,fast-km,fast-ogda", "--out", str(tmp_path)])
        assert code == 0
        cfg = load(tmp_path / "run.json")
        assert cfg["subcommand"] == "rotation" and cfg["kmax"] == 30 and cfg["alpha"] == "3.0"
        tr = read_trace_csv(tmp_path / "trace_fast-km.csv")
        assert tr.residual.shape == (31,) and tr.iterates.shape == (31, 4)
        with open(tmp_path / "trace_bp.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["k", "residual", "velocity", "k_times_residual", "x_0", "x_1", "x_2", "x_3"]

    def test_rotation_large_n_omits_coordinates(self, capsys, tmp_path):
        run_cli(capsys, ["rotation", "--n", "3", "--kmax", "5", "--methods", "bp", "--out", str(tmp_path)])
        with open(tmp_path / "trace_bp.csv") as fh:
            assert next(csv.reader(fh)) == ["k", "residual", "velocity", "k_times_residual"]

    def test_rotation_byte_identical(self, capsys, tmp_path):
        argv = ["rotation", "--n", "3", "--kmax", "200", "--alpha", "3,10"]
        run_cli(capsys, argv + ["--out", str(tmp_path / "a")])
        run_cli(capsys, argv + ["--out", str(tmp_path / "b")])
        for name in ["residuals.csv", "trace_fast-km_alpha3.csv", "trace_fast-km_alpha10.csv", "trace_halpern.csv"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_feasibility_rerun_from_run_json(self, capsys, tmp_path):
        argv = ["feasibility", "--ntest", "2", "--ninit", "5", "--kmax", "30", "--methods", "dr2,halpern,fast-km", "--alpha", "10,30", "--jobs", "1"]
        code, table, _ = run_cli(capsys, argv + ["--out", str(tmp_path / "a")])
        assert code == 0 and "fast-km[alpha=30,s=2]" in table
        cfg = load(tmp_path / "a" / "run.json")
        code, _, _ = run_cli(capsys, cli.argv_from_config(cfg, str(tmp_path / "b")))
        assert code == 0
        assert (tmp_path / "a" / "batch.csv").read_bytes() == (tmp_path / "b" / "batch.csv").read_bytes()
        assert load(tmp_path / "b" / "run.json") == {**cfg, "out": str(tmp_path / "b")}

    def test_feasibility_missing_marker(self, capsys, tmp_path):
        run_cli(capsys, ["feasibility", "--kmax", "0", "--ntest", "1", "--ninit", "3", "--methods", "dr2", "--out", str(tmp_path)])
        with open(tmp_path / "batch.csv") as fh:
            rows = list(csv.reader(fh))
        # a kmax of 0 succeeds only when x_0 is already feasible
        assert rows[1][2] in ("-//-", "0")

    def test_diagnose_fresh(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, ["diagnose", "--n", "5", "--kmax", "2000", "--out", str(tmp_path)])
        assert code == 0
        rep = load(tmp_path / "diagnostics.json")
        assert rep["k_lambda"] == 61
        assert rep["lambda_window"][1] == 1.75
        assert rep["descent_violations"] == 0 and rep["energy_min"] >= 0
        assert -1.7 < rep["loglog_slope"] < -1.3
        assert "S3" not in rep["plateau_ratios"]

    def test_diagnose_from_trace(self, capsys, tmp_path):
        run_cli(capsys, ["rotation", "--n", "2", "--kmax", "500", "--methods", "fast-km", "--out", str(tmp_path / "r")])
        argv = ["diagnose", "--trace", str(tmp_path / "r" / "trace_fast-km.csv"), "--out", str(tmp_path / "d")]
        code, _, _ = run_cli(capsys, argv)
        assert code == 2  # --step is required with --trace
        code, _, _ = run_cli(capsys, argv + ["--step", "2"])
        assert code == 0
        rep = load(tmp_path / "d" / "diagnostics.json")
        assert rep["energy_min"] is None and rep["sup_tail_k_res"] > 0
        tr = read_trace_csv(tmp_path / "r" / "trace_fast-km.csv")
        k = np.arange(100, 501)
        assert rep["sup_tail_k_res"] == pytest.approx(float(np.max(k * tr.residual[100:])), rel=1e-15)

    def test_default_out_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("FASTKM_OUT_DIR", str(tmp_path / "env"))
        code, _, _ = run_cli(capsys, ["rotation", "--n", "1", "--kmax", "3", "--methods", "bp"])
        assert code == 0 and (tmp_path / "env" / "run.json").exists()
