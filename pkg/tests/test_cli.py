import io
import json
import subprocess
import sys

import pytest

from fracbs.cli import run_cli


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def scenario_doc(**changes):
    d = {
        "id": "user",
        "initial_condition": "max(2*s1 + 3*s2 - 50, 0)",
        "space_mode": "asset",
        "coordinates": "asset",
        "maturity_months": 6,
        "params": {"sigma1": 0.3, "sigma2": 0.2, "r": 0.05, "rho": 0.4, "alpha": 0.7},
        "grid": {"s1": [10, 20], "s2": [30, 40, 50]},
    }
    d.update(changes)
    return d


def test_scenario_writes_long_csv(tmp_path):
    out = tmp_path / "ex1.csv"
    code, stdout, _ = run("scenario", "ex1", "--terms", "25", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s1,s2,price"
    assert len(lines) == 26
    assert "reconciliation: ex1-logprice" in stdout


def test_scenario_matrix_and_precision():
    code, stdout, stderr = run("scenario", "ex3", "--matrix", "--precision", "3")
    assert code == 0
    assert stdout.splitlines()[0] == "s2/s1,20,40,70,100,150"
    assert stdout.splitlines()[1].startswith("50,1.93e+04,")
    assert "INCONSISTENT" in stderr


def test_report_json(tmp_path):
    rep = tmp_path / "rep.json"
    code, _, _ = run("scenario", "ex4", "--report", str(rep), "--report-format", "json")
    assert code == 0
    assert json.loads(rep.read_text())["scenario"] == "ex4"


def test_byte_identical_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("scenario", "ex2", "--out", str(a))
    run("scenario", "ex2", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_divergent_scenario_warns():
    code, _, stderr = run("scenario", "ex5")
    assert code == 0
    assert "not converged" in stderr


def test_price_config(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(scenario_doc()))
    code, stdout, _ = run("price", "--config", str(cfg))
    assert code == 0
    assert len(stdout.splitlines()) == 1 + 6


def test_alpha_out_of_range_is_validation_error(tmp_path):
    cfg = tmp_path / "s.json"
    d = scenario_doc()
    d["params"]["alpha"] = 1.5
    cfg.write_text(json.dumps(d))
    code, _, stderr = run("price", "--config", str(cfg))
    assert code == 2
    assert "0 < alpha <= 1" in stderr


@pytest.mark.parametrize(
    "argv",
    [
        ("bogus",),
        ("scenario", "ex9"),
        ("scenario", "ex1", "--terms", "0"),
        ("price",),
        ("price", "--config", "/nonexistent/file.json"),
    ],
)
def test_invalid_input_exit_code(argv):
    assert run(*argv)[0] == 2


def test_malformed_config_names_field(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(scenario_doc(grid={"s1": "wide", "s2": [1]})))
    code, _, stderr = run("price", "--config", str(cfg))
    assert code == 2
    assert "grid.s1" in stderr


def test_unwritable_output():
    code, _, stderr = run("scenario", "ex3", "--out", "/nonexistent/dir/x.csv")
    assert code == 2
    assert "cannot write" in stderr


def test_numerical_failure_exit_code(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(scenario_doc(initial_condition="max(ln(s1 - 15), 0)")))
    code, _, stderr = run("price", "--config", str(cfg))
    assert code == 3
    assert "numerical failure" in stderr


def oracle_doc(**changes):
    d = {
        "params": {"sigma1": 0.4, "sigma2": 0.25, "r": 0.08, "rho": 0.75, "alpha": 0.5},
        "initial_condition": "exp(0.5*u + 0.5*v)",
        "t_final": 8 / 12,
        "grid": {"nu": 17, "nv": 17, "steps": 100},
    }
    d.update(changes)
    return d


def test_oracle_diffusive(tmp_path):
    cfg, out = tmp_path / "o.json", tmp_path / "field.csv"
    cfg.write_text(json.dumps(oracle_doc(direction="diffusive")))
    code, stdout, _ = run("oracle", "--config", str(cfg), "--out", str(out))
    assert code == 0
    dev = float(stdout.rsplit(":", 1)[1])
    assert dev < 2e-2
    lines = out.read_text().splitlines()
    assert lines[0] == "u,v,value"
    assert len(lines) == 1 + 19 * 19


def test_oracle_series_direction_reports_failure(tmp_path):
    cfg = tmp_path / "o.json"
    cfg.write_text(json.dumps(oracle_doc(grid={"nu": 33, "nv": 33, "steps": 200})))
    code, _, stderr = run("oracle", "--config", str(cfg))
    assert code == 3
    assert "ill-posed" in stderr or "not finite" in stderr


def test_oracle_config_validation(tmp_path):
    cfg = tmp_path / "o.json"
    cfg.write_text(json.dumps(oracle_doc(scheme="explicit")))
    code, _, stderr = run("oracle", "--config", str(cfg))
    assert code == 2
    assert "scheme" in stderr


def test_sumudu_check():
    code, stdout, _ = run("sumudu-check")
    assert code == 0
    rows = [l for l in stdout.splitlines() if l.endswith("PASS") or l.endswith("FAIL")]
    assert len(rows) >= 9
    assert all(r.endswith("PASS") for r in rows)


def test_plot_data():
    code, stdout, _ = run("plot-data", "ex3", "--points", "4")
    assert code == 0
    lines = stdout.splitlines()
    assert lines[0] == "s1,s2,price"
    assert len(lines) == 1 + 16


def test_space_mode_override_runs():
    code, stdout, _ = run("scenario", "ex1", "--space-mode", "asset")
    assert code == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracbs", "plot-data", "ex3", "--points", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("s1,s2,price")
