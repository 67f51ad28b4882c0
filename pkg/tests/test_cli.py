import json

import pytest

from spreadimpact.cli import main

BASE_FLAGS = ["--mu", "0.08", "--sigma", "0.16", "--gamma", "5"]


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSolveCommand:
    def test_csv_grid(self, capsys):
        code, out, _ = run(capsys, "solve", *BASE_FLAGS, "--epsilon", "0.001",
                           "--lambda", "0.0001", "--format", "csv",
                           "--grid-points", "51")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "y,q,u"
        assert len(lines) > 50
        y, q, u = (float(t) for t in lines[1].split(","))
        assert 0.0 < y < 1e-5 and u > 0.0

    def test_json_document(self, capsys):
        code, out, _ = run(capsys, "solve", *BASE_FLAGS, "--epsilon", "0.01",
                           "--lambda", "0.01", "--format", "json",
                           "--grid-points", "21")
        assert code == 0
        doc = json.loads(out)
        assert 0.016 <= doc["beta"] <= 0.025
        assert doc["params"]["lambda"] == 0.01

    def test_degenerate_dispatch(self, capsys):
        code, out, _ = run(capsys, "solve", "--mu", "0.2", "--sigma", "0.16",
                           "--gamma", "5", "--epsilon", "0.01",
                           "--lambda", "0.01")
        assert code == 0
        doc = json.loads(out)
        assert doc["regime"] == "FullRisky"
        assert doc["esr"] == pytest.approx(0.136)

    def test_missing_flag_is_usage_error(self, capsys):
        code, out, err = run(capsys, "solve", "--mu", "0.08")
        assert code == 1
        assert "usage" in err.lower()

    def test_invalid_params_exit_code(self, capsys):
        code, _, err = run(capsys, "solve", *BASE_FLAGS[:4], "--gamma", "1",
                           "--epsilon", "0.01", "--lambda", "0.01")
        assert code == 1
        assert "gamma" in err

    def test_no_match_exit_code(self, capsys):
        code, _, err = run(capsys, "solve", *BASE_FLAGS, "--epsilon", "0.95",
                           "--lambda", "2.0")
        assert code == 2

    def test_params_file(self, capsys, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps({"mu": 0.08, "sigma": 0.16, "gamma": 5,
                                    "epsilon": 0.01, "lambda": 0.01}))
        code, out, _ = run(capsys, "solve", "--params", str(path),
                           "--format", "json", "--grid-points", "11")
        assert code == 0
        assert json.loads(out)["params"]["epsilon"] == 0.01

    def test_params_file_conflicts_with_flags(self, capsys, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps({"mu": 0.08, "sigma": 0.16, "gamma": 5,
                                    "epsilon": 0.01, "lambda": 0.01}))
        code, _, err = run(capsys, "solve", "--params", str(path),
                           "--mu", "0.07")
        assert code == 1


class TestAsymptoticCommand:
    def test_constants_emitted(self, capsys):
        code, out, _ = run(capsys, "asymptotic", *BASE_FLAGS, "--epsilon", "0.01",
                           "--lambda", "0.01")
        assert code == 0
        doc = json.loads(out)
        for key in ("z_minus", "l", "a", "c", "k", "x_minus", "D", "E", "F"):
            assert key in doc
        assert doc["z_minus"] < 0.0
        assert doc["l"] > 0.0


class TestPolicyCommand:
    def test_csv(self, capsys):
        code, out, _ = run(capsys, "policy", *BASE_FLAGS, "--epsilon", "0.001",
                           "--lambda", "0.0001", "--grid-points", "41")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "y,u"
        assert len(lines) == 42


class TestSimulateCommand:
    def test_hold_policy_report(self, capsys):
        code, out, _ = run(capsys, "simulate", *BASE_FLAGS, "--epsilon", "0",
                           "--lambda", "0", "--policy", "hold",
                           "--paths", "500", "--horizon", "2",
                           "--burn-in", "0.5", "--dt", "0.01",
                           "--y0", "0.999", "--seed", "9")
        assert code == 0
        doc = json.loads(out)
        assert set(doc) == {"esr_estimate", "esr_stderr", "mean_turnover",
                            "fraction_time_in_NT", "y_range_violations"}
        assert doc["fraction_time_in_NT"] == 1.0

    def test_path_summary_file(self, capsys, tmp_path):
        out_file = tmp_path / "paths.csv"
        code, _, _ = run(capsys, "simulate", *BASE_FLAGS, "--epsilon", "0",
                         "--lambda", "0", "--policy", "hold",
                         "--paths", "50", "--horizon", "1",
                         "--burn-in", "0.2", "--dt", "0.01",
                         "--y0", "0.5", "--paths-csv", str(out_file))
        assert code == 0
        lines = out_file.read_text().strip().splitlines()
        assert lines[0] == "path_id,logX_T,time_in_NT,turnover_avg"
        assert len(lines) == 51


class TestSweepCommand:
    def test_long_format(self, capsys):
        code, out, _ = run(capsys, "sweep", *BASE_FLAGS, "--epsilon", "0.001",
                           "--lambda", "0.0001",
                           "--sweep-lambda", "1e-4,1e-3",
                           "--grid-points", "11")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "epsilon,lambda,y,q,u"
        lams = {line.split(",")[1] for line in lines[1:]}
        assert lams == {"0.0001", "0.001"}

    def test_empty_grid_is_usage_error(self, capsys):
        code, _, err = run(capsys, "sweep", *BASE_FLAGS, "--epsilon", "0.001",
                           "--lambda", "0.0001", "--sweep-lambda", ",")
        assert code == 1

    def test_no_axis_is_usage_error(self, capsys):
        code, _, _ = run(capsys, "sweep", *BASE_FLAGS, "--epsilon", "0.001",
                         "--lambda", "0.0001")
        assert code == 1


class TestCompareCommand:
    def test_table_and_summary(self, capsys):
        code, out, _ = run(capsys, "compare", *BASE_FLAGS, "--epsilon", "0.01",
                           "--lambda", "0.01", "--points", "21")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("# beta_exact=")
        assert lines[1] == "y,u_exact,u_asym,abs_err,rel_err"
        assert len(lines) == 23

    def test_bit_identical_reruns(self, capsys):
        args = ("compare", *BASE_FLAGS, "--epsilon", "0.01", "--lambda", "0.01",
                "--points", "11")
        _, first, _ = run(capsys, *args)
        _, second, _ = run(capsys, *args)
        assert first == second
