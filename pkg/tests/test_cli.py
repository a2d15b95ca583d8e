import csv
import json
import subprocess
import sys

import pytest

from weakkam.cli import (EXIT_ERROR, EXIT_OK, EXIT_TOLERANCE, RunConfig, UsageError, build_parser,
                         config_from_args, main, parse_values)


def rows(path):
    return list(csv.reader(open(path)))


def test_value_syntax():
    assert parse_values("0,0.5") == [[0.0], [0.5]]
    assert parse_values("-1:1:3") == [[-1.0], [0.0], [1.0]]
    assert parse_values("0.5;1") == [[0.5, 1.0]]
    assert parse_values("") == []
    with pytest.raises(UsageError):
        parse_values("0:1:0")
    with pytest.raises(UsageError):
        parse_values("0:1")


def test_config_round_trip():
    ns = build_parser().parse_args(["alpha-sweep", "--model", "free1d", "--c=-1:1:5", "--seed", "3"])
    cfg = config_from_args(ns)
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.c == [[-1.0], [-0.5], [0.0], [0.5], [1.0]]


def test_list_criteria(capsys):
    assert main(["regression", "--list"]) == EXIT_OK
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 12 and out[0].split()[:2] == ["1", "alpha-flat"]


def test_empty_range_is_an_error(tmp_path):
    assert main(["alpha-sweep", "--c", "0:1:0", "--out", str(tmp_path)]) == EXIT_ERROR


def test_unknown_model_and_route(tmp_path):
    assert main(["alpha-sweep", "--model", "nosuch", "--c", "0", "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["alpha-sweep", "--route", "nope", "--c", "0", "--out", str(tmp_path)]) == EXIT_ERROR


def test_wrong_vector_length(tmp_path):
    assert main(["alpha-sweep", "--model", "free2d", "--c", "1", "--out", str(tmp_path)]) == EXIT_ERROR


def test_alpha_sweep_writes_table_and_config(tmp_path):
    code = main(["alpha-sweep", "--model", "free1d", "--route", "critical-value", "--c", "0.5,1",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    r = rows(tmp_path / "alpha.csv")
    assert r[0] == ["c0", "alpha_critical-value", "disagreement"]
    assert float(r[2][1]) == pytest.approx(0.5, abs=1e-3)
    assert json.loads((tmp_path / "run.json").read_text())["model"] == "free1d"


def test_orbit_and_drift_breach(tmp_path):
    assert main(["orbit", "--x", "0", "--v0", "1", "--T", "1", "--out", str(tmp_path)]) == EXIT_OK
    r = rows(tmp_path / "orbit.csv")
    assert r[0] == ["t", "x_1", "v_1", "E"] and len(r) == 1002
    assert main(["orbit", "--x", "0", "--v0", "0.5", "--T", "20", "--dt", "0.2", "--out", str(tmp_path)]) \
        == EXIT_TOLERANCE


def test_weak_kam_budget_breach_exits_3(tmp_path, monkeypatch):
    import weakkam.weak_kam as wk
    from weakkam.errors import NotConverged

    def fail(*a, **k):
        raise NotConverged("budget", [1.0])

    monkeypatch.setattr(wk, "solve_weak_kam", fail)
    assert main(["weak-kam", "--out", str(tmp_path)]) == EXIT_TOLERANCE


def test_weak_kam_command(tmp_path):
    assert main(["weak-kam", "--c", "0", "--grid", "64", "--out", str(tmp_path)]) == EXIT_OK
    r = rows(tmp_path / "weak-kam.csv")
    assert r[0] == ["x", "u", "residual", "kink"] and len(r) == 65
    s = json.loads((tmp_path / "weak-kam-summary.json").read_text())
    assert abs(s["alpha_estimate"]) < 2e-3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "weakkam", "regression", "--list"], capture_output=True, text=True)
    assert out.returncode == 0 and "weak-kam" in out.stdout


def test_coarse_grid_regression_fails_in_a_controlled_way(tmp_path, capsys):
    code = main(["regression", "--grid", "16", "--criteria", "7,9", "--out", str(tmp_path)])
    assert code == EXIT_TOLERANCE
    rep = json.loads((tmp_path / "regression.json").read_text())
    assert rep["n"] == 2 and not rep["pass"]
    for c in rep["criteria"]:
        assert c["error"] is None
        assert any(not ch["pass"] for ch in c["checks"])


def test_sets_export_at_zero_class(tmp_path):
    assert main(["sets", "--c", "0", "--out", str(tmp_path)]) == EXIT_OK
    m = rows(tmp_path / "mather.csv")
    assert len(m) == 2 and abs(float(m[1][0])) < 1e-9 and abs(float(m[1][1])) < 0.02
    rep = json.loads((tmp_path / "sets-report.json").read_text())
    assert rep["inclusions"]["pass"]


def test_csv_bodies_are_deterministic(tmp_path):
    args = ["alpha-sweep", "--model", "free1d", "--route", "critical-value", "--c", "0.5,1.5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "alpha.csv").read_bytes() == (tmp_path / "b" / "alpha.csv").read_bytes()
