import csv
import json

import pytest

from pamlab.harness.cli import main


def test_run_single_experiment(capsys):
    assert main(["run", "tauberian"]) == 0
    out = capsys.readouterr().out
    assert "PASS  tauberian/" in out and "checks passed" in out


def test_group_command_with_flags(capsys):
    assert main(["ageing", "--gamma", "3", "--t", "1e6", "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_global_flags_before_command(tmp_path):
    out = tmp_path / "r.json"
    assert main(["--samples", "2000", "--seed", "5", "--out", str(out), "corr"]) == 0
    d = json.loads(out.read_text())
    assert d["params"]["samples"] == 2000 and d["seed"] == 5


def test_csv_export(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["tails", "--samples", "300", "--quiet", "--format", "csv", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["name", "pass", "lhs", "rhs", "tol"]
    assert any(r[0].startswith("conditional-tail/") for r in rows[1:])


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "moments", "params": {"samples": 3000, "t": 0.5}}))
    out = tmp_path / "r.json"
    assert main(["run", "moments", "--config", str(cfg), "--t", "1.0", "--quiet", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["params"]["samples"] == 3000 and d["params"]["t"] == 1.0


@pytest.mark.parametrize("argv", [
    ["run", "tauberian", "--tol-scale", "-1"],
    ["moments", "--a", "1"],
    ["frobnicate"],
    ["run", "tauberian", "--bogus"],
    ["verify", "--bc", "periodic"],
    ["run", "moments", "--threads", "0"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "pamlab" in capsys.readouterr().err


def test_config_name_mismatch(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "sandwich", "params": {}}))
    assert main(["run", "tauberian", "--config", str(cfg)]) == 2
    assert main(["run", "tauberian", "--config", str(tmp_path / "none.json")]) == 2


def test_infeasible_parameters(capsys):
    assert main(["moments", "--t", "20", "--samples", "100", "--p", "2"]) == 2
    assert "predicted log-stderr" in capsys.readouterr().err


def test_check_failure_exit_code(capsys):
    assert main(["run", "tauberian", "--tol-scale", "0"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_unwritable_output(tmp_path):
    assert main(["run", "tauberian", "--quiet", "--out", str(tmp_path / "no" / "r.json")]) == 1
