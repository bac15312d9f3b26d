import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ddesolve import cli

SNAPSHOTS = Path(__file__).parent / "snapshots"
COMMANDS = ["", "solve", "datagen", "validate", "order-study"]


def run(*args, cwd=None, env=None):
    return subprocess.run([sys.executable, "-m", "ddesolve", *args], capture_output=True,
                          text=True, cwd=cwd, env=env)


def test_solve_logistic(tmp_path):
    out = tmp_path / "traj.csv"
    rc = cli.main(["solve", "--system", "time_dependent_logistic", "--x0", "1.0", "--tf", "20",
                   "--num-steps", "200", "--output", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,y_0" and len(lines) == 201
    assert float(lines[1].split(",")[1]) == 1.0
    stats = json.loads((tmp_path / "traj_stats.json").read_text())
    assert stats["stats"]["n_steps"] > 0
    assert stats["breaking_points"][0] == {"order": 1, "t": 0.0}


def test_solve_custom_ode_spec(tmp_path):
    spec = tmp_path / "custom.json"
    spec.write_text(json.dumps({"name": "custom", "parameters": {"rhs": "-y[0]", "tF": 1.0},
                                "history_family": "constant", "history_params": {"x0": 1.0}}))
    out = tmp_path / "ode.csv"
    assert cli.main(["solve", "--spec", str(spec), "--num-steps", "11", "-o", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 1], np.exp(-data[:, 0]), atol=1e-7)


def test_solve_history_params(tmp_path):
    out = tmp_path / "step.csv"
    rc = cli.main(["solve", "--system", "time_dependent", "--history-family", "step",
                   "--history-param", "y0=0.5", "--history-param", "y1=1.5",
                   "--history-param", "t_jump=-1.0", "--tf", "5", "--num-steps", "6",
                   "-o", str(out)])
    assert rc == 0
    assert np.loadtxt(out, delimiter=",", skiprows=1)[0, 1] == 1.5


def test_missing_required_flag():
    res = run("solve")
    assert res.returncode == 2
    assert "usage:" in res.stderr


def test_unknown_flag_rejected():
    res = run("solve", "--system", "time_dependent", "--bogus")
    assert res.returncode == 2
    res = run("datagen", "--preset", "time_dependent", "--n-trian", "2")
    assert res.returncode == 2


def test_solver_failure_error_line(tmp_path):
    res = run("solve", "--system", "state_dependent", "--x0", "0.5", "--max-steps", "3",
              "-o", str(tmp_path / "x.csv"))
    assert res.returncode == 1
    line = res.stderr.strip().splitlines()[-1]
    assert line.startswith("error: max-steps-exceeded: ")


def test_invalid_spec_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "nope"}))
    res = run("solve", "--spec", str(bad))
    assert res.returncode == 1 and res.stderr.startswith("error: invalid-input: ")


def test_datagen_smoke(tmp_path, capsys):
    rc = cli.main(["datagen", "--preset", "time_dependent", "--n-train", "2", "--n-test", "1",
                   "--seed", "3", "--outdir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "2 train / 1 test" in out and "rejected" in out and "wall time" in out
    for suffix in ("train.csv", "test.csv", "meta.json"):
        assert (tmp_path / f"time_dependent_{suffix}").exists()


def test_datagen_deterministic_across_jobs(tmp_path):
    base = ["datagen", "--preset", "state_dependent", "--n-train", "3", "--n-test", "2",
            "--noise-alpha", "0.05", "--seed", "8"]
    assert cli.main(base + ["--outdir", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert cli.main(base + ["--outdir", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for f in ("train.csv", "test.csv", "meta.json"):
        a = (tmp_path / "a" / f"state_dependent_{f}").read_bytes()
        assert a == (tmp_path / "b" / f"state_dependent_{f}").read_bytes()


def test_datagen_failure_names_trajectory(tmp_path):
    spec = tmp_path / "vanish.json"
    spec.write_text(json.dumps({
        "name": "custom",
        "parameters": {"rhs": "-yd[0][0]", "delays": [{"kind": "state", "expr": "0.5 + y[0]"}]},
        "history_family": "constant", "history_params": {"x0": -0.5}}))
    res = run("datagen", "--spec", str(spec), "--regime", "fixed", "--n-train", "2",
              "--n-test", "0", "--outdir", str(tmp_path))
    assert res.returncode == 1
    assert res.stderr.startswith("error: vanishing-delay: train trajectory 0")


def test_validate_subset(capsys):
    assert cli.main(["validate", "--only", "lattice", "tracking"]) == 0
    out = capsys.readouterr().out
    assert "PASS  lattice" in out and "2/2 checks passed" in out


def test_validate_forced_failure(capsys):
    rc = cli.main(["validate", "--only", "lattice", "--force-no-tracking", "--force-rtol", "1e-3"])
    assert rc == 1
    assert "FAIL  lattice" in capsys.readouterr().out


def test_validate_unknown_check():
    assert run("validate", "--only", "nonsense").returncode == 2


def test_order_study_json(tmp_path):
    path = tmp_path / "order.json"
    assert cli.main(["order-study", "--json", str(path)]) == 0
    doc = json.loads(path.read_text())
    assert doc["passed"] and len(doc["errors"]) == 3


def test_order_study_single_tolerance_fails():
    assert cli.main(["order-study", "--problem", "ode", "--tolerances", "1e-6"]) == 1


def test_log_level_env(tmp_path):
    env = dict(os.environ, DDE_SOLVE_LOG="INFO")
    res = run("solve", "--system", "time_dependent", "-o", str(tmp_path / "s.csv"), env=env)
    assert res.returncode == 0
    assert "INFO ddesolve" in res.stderr


def _help(cmd, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    parser = cli.build_parser()
    if not cmd:
        return parser.format_help()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    return sub.choices[cmd].format_help()


@pytest.mark.parametrize("cmd", COMMANDS, ids=[c or "main" for c in COMMANDS])
def test_help_snapshot(cmd, monkeypatch):
    text = _help(cmd, monkeypatch)
    path = SNAPSHOTS / f"help_{cmd or 'main'}.txt"
    if os.environ.get("UPDATE_SNAPSHOTS"):
        path.write_text(text)
    assert text == path.read_text()


@pytest.mark.parametrize("cmd", COMMANDS[1:])
def test_help_documents_every_flag(cmd, monkeypatch):
    text = _help(cmd, monkeypatch)
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for action in sub.choices[cmd]._actions:
        if action.help == "==SUPPRESS==":
            continue
        for opt in action.option_strings:
            assert opt in text
