import csv
import io
import json
import subprocess
import sys

import pytest

from signcongruence.cli import batch_test, run
from signcongruence.calibration import CalibrationConfig


def call(argv, capsys):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestSingle:
    def test_recommended_json(self, capsys):
        code, out, _ = call(["test", "--mu1", "2.0", "--mu2", "-1.7"], capsys)
        rec = json.loads(out)
        assert code == 0 and rec["reject"] is True
        assert float(rec["p_value"]) == pytest.approx(0.04456546276, abs=1e-10)

    def test_all_tests_csv(self, capsys):
        code, out, _ = call(["test", "--mu1", "2.0", "--mu2", "-2.1", "--test", "all", "--format", "csv"], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert [r["test"] for r in rows] == ["recommended", "bmw", "heuristic", "fractal"]

    def test_bad_alpha_is_usage_error(self, capsys):
        code, _, err = call(["test", "--mu1", "1", "--mu2", "-1", "--alpha", "banana"], capsys)
        assert code == 1 and "alpha" in err

    def test_bad_rho(self, capsys):
        code, _, err = call(["test", "--mu1", "1", "--mu2", "-1", "--rho", "1.5"], capsys)
        assert code == 1 and "error" in err

    def test_resamples_need_seed(self, capsys):
        code, _, _ = call(["test", "--mu1", "1", "--mu2", "-1", "--test", "heuristic", "--resamples", "100"], capsys)
        assert code == 1

    def test_missing_estimates(self, capsys):
        assert call(["test"], capsys)[0] == 1


class TestBatch:
    def test_order_and_errors(self, tmp_path, capsys):
        p = tmp_path / "in.csv"
        p.write_text("mu1,mu2,sigma1,sigma2,rho\n2,-2,1,1,0\n1,1,1,1,1.4\n0.5,x,1,1,0\n3,-3,1,1,-0.5\n")
        code, out, _ = call(["test", "--input", str(p)], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert [r["row"] for r in rows] == ["0", "1", "2", "3"]
        assert [r["error"] for r in rows] == ["", "invalid_correlation", "invalid_input", ""]
        assert rows[0]["reject"] == "true"

    def test_empty_file(self, tmp_path, capsys):
        p = tmp_path / "in.csv"
        p.write_text("")
        code, _, err = call(["test", "--input", str(p)], capsys)
        assert code == 0 and "no records" in err

    def test_threads_preserve_order(self):
        recs = [{"mu1": m, "mu2": -m, "rho": -0.5} for m in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)]
        a = batch_test(recs, "recommended", 0.05, "congruent", CalibrationConfig())
        b = batch_test(recs, "recommended", 0.05, "congruent", CalibrationConfig(), workers=3)
        assert a == b

    def test_json_batch(self, tmp_path, capsys):
        p = tmp_path / "in.json"
        p.write_text(json.dumps([{"mu1": 0.2, "mu2": -0.2, "n": 100}]))
        code, out, _ = call(["test", "--input", str(p), "--format", "json"], capsys)
        assert code == 0 and json.loads(out)[0]["test"] == "feasible"


class TestOtherCommands:
    def test_calibrate(self, capsys):
        code, out, _ = call(["calibrate", "--alpha", "0.05", "--rho", "-0.9"], capsys)
        assert code == 0 and json.loads(out)["c"] == pytest.approx(1.74893328, abs=1e-6)

    def test_calibration_failure_exit_code(self, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bracket_low": 2.5, "bracket_high": 3.0}))
        monkeypatch.setenv("SIGNCONGRUENCE_CONFIG", str(cfg))
        code, _, err = call(["calibrate", "--alpha", "0.05", "--rho", "-0.8"], capsys)
        assert code == 2 and "calibration failure" in err

    def test_table_small(self, capsys):
        code, out, _ = call(["table", "--alphas", "0.05", "--rhos", "0,-1"], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 2
        assert float(rows[1]["c"]) == pytest.approx(1.95996398, abs=1e-6)

    def test_cone(self, capsys):
        code, out, _ = call(["cone-test", "--mu1", "1", "--mu2", "1", "--cone", "2,1,1,2"], capsys)
        rec = json.loads(out)
        assert code == 0 and rec["diagnostics"]["rho_nu"] == pytest.approx(-0.8, abs=1e-12)

    def test_cone_degenerate(self, capsys):
        assert call(["cone-test", "--mu1", "1", "--mu2", "1", "--cone", "1,2,2,4"], capsys)[0] == 1

    def test_boot_corr(self, tmp_path, capsys):
        p = tmp_path / "reps.csv"
        p.write_text("\n".join(f"{i},{2 * i + (i % 3)}" for i in range(20)))
        code, out, _ = call(["boot-corr", str(p), "--trim-frac", "0.05"], capsys)
        rec = json.loads(out)
        assert code == 0 and rec["trimmed"] == 1 and 0.9 < rec["rho"] <= 1

    def test_boot_corr_parse_error(self, tmp_path, capsys):
        p = tmp_path / "reps.csv"
        p.write_text("1,2\n" * 5 + "1,oops\n" + "1,2\n" * 5)
        code, _, err = call(["boot-corr", str(p)], capsys)
        assert code == 1 and "line 6" in err

    def test_simulate_requires_seed(self, capsys):
        assert call(["simulate", "--kind", "containment", "--count", "100"], capsys)[0] == 1

    def test_simulate_rate(self, capsys):
        code, out, err = call(["simulate", "--test-id", "bmw", "--mu-grid", "0,0;0,3", "--reps", "20000",
                               "--seed", "4"], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 2 and "seed=4" in err

    def test_simulate_monotone(self, capsys):
        code, out, _ = call(["simulate", "--kind", "monotone", "--test-id", "fractal", "--grid-step-audit", "0.1"],
                            capsys)
        assert code == 0 and json.loads(out)["violations"] > 0

    def test_delta_demo(self, capsys):
        code, out, err = call(["delta-demo", "--reps", "20000", "--bins", "10", "--seed", "1"], capsys)
        assert code == 0 and len(out.splitlines()) == 11 and "ks_distance" in err

    def test_output_file(self, tmp_path, capsys):
        dest = tmp_path / "o.json"
        assert call(["calibrate", "--alpha", "0.1", "--rho", "0", "--out", str(dest)], capsys)[0] == 0
        assert json.loads(dest.read_text())["one_sided_flag"] is True


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "signcongruence", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "calibrate" in res.stdout
