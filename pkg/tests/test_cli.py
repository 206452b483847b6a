import json
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from jssa.cli import main
from jssa.scenarios import make
from jssa.sim import Scenario

REPO = Path(__file__).resolve().parents[1]


def write_scenario(tmp_path, scenario, name="scenario.json"):
    p = tmp_path / name
    scenario.to_json(p)
    return str(p)


def short(scenario, duration=0.8):
    return replace(scenario, duration_s=duration)


# ---------------------------------------------------------------------------
# run


def test_run_ok_writes_artifacts(tmp_path, capsys):
    path = write_scenario(tmp_path, short(make("head_on", 0, 0)))
    rc = main(["run", path, "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "telemetry.csv").exists()
    assert (tmp_path / "out" / "metrics.csv").exists()
    lines = (tmp_path / "out" / "metrics.csv").read_text().strip().splitlines()
    assert len(lines) == 2


def test_run_detects_violation_with_safeguard_off(tmp_path):
    # agent scripted straight through the robot, safeguard disabled
    agent = {
        "name": "bulldozer", "skeleton": "hand", "root": [1.5, 0.0, 0.74],
        "speed_bound": 1.5, "accel_bound": None, "driver": "scripted",
        "script": {"times": [0.0, 2.0], "points": [[1.5, 0, 0.74], [0.1, 0, 0.74]], "mode": "linear"},
    }
    sc = Scenario(name="collision", mode="off", duration_s=2.0, dynamic_agents=(agent,))
    path = write_scenario(tmp_path, sc)
    rc = main(["run", path, "--out", str(tmp_path / "out")])
    assert rc == 1


def test_run_malformed_json_is_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["run", str(bad), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_seed_env_override(tmp_path, monkeypatch):
    sc = short(make("head_on", 0, 0))
    path = write_scenario(tmp_path, sc)
    monkeypatch.setenv("JSSA_SEED", "777")
    rc = main(["run", path, "--out", str(tmp_path / "out")])
    assert rc == 0
    metrics = (tmp_path / "out" / "metrics.csv").read_text()
    assert ",777," in metrics


# ---------------------------------------------------------------------------
# sweep


def test_sweep_nine_rows_and_reproducible(tmp_path):
    path = write_scenario(tmp_path, short(make("sensitivity", 0), duration=1.2))
    rc = main(["sweep", path, "--l1", "6,7,8", "--l2", "6,7,8", "--out", str(tmp_path / "o1")])
    assert rc == 0
    lines = (tmp_path / "o1" / "metrics.csv").read_text().splitlines()
    assert len(lines) == 10  # header + 9 cells
    rc = main(["sweep", path, "--l1", "6,7,8", "--l2", "6,7,8", "--out", str(tmp_path / "o2")])
    assert rc == 0
    assert (tmp_path / "o1" / "metrics.csv").read_bytes() == (tmp_path / "o2" / "metrics.csv").read_bytes()


def test_sweep_empty_grid_is_config_error(tmp_path, capsys):
    path = write_scenario(tmp_path, short(make("sensitivity", 0)))
    rc = main(["sweep", path, "--l1", "", "--l2", "6", "--out", str(tmp_path / "out")])
    assert rc == 2


# ---------------------------------------------------------------------------
# verify


def test_verify_reference_parameters_pass(capsys):
    rc = main(["verify", str(REPO / "configs" / "verify_reference.json")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "pass" in out


def test_verify_complex_roots_fail(capsys):
    rc = main(["verify", str(REPO / "configs" / "verify_complex_roots.json")])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_verify_infeasible_reports_worst_sample(tmp_path, capsys):
    cfg = json.loads((REPO / "configs" / "verify_reference.json").read_text())
    cfg["lambda2"] = 2.25  # keeps the roots real (l1^2 >= 4 l2)
    cfg["jerk_bounds_deg"] = [0.02] * 6
    cfg["budget"] = 20000
    p = tmp_path / "params.json"
    p.write_text(json.dumps(cfg))
    rc = main(["verify", str(p)])
    out = capsys.readouterr().out
    assert rc == 1
    assert "worst sample" in out


def test_verify_missing_file_is_config_error(capsys):
    rc = main(["verify", "/nonexistent/params.json"])
    assert rc == 2


# ---------------------------------------------------------------------------
# preset loading


def test_preset_scenarios_load(tmp_path):
    rc = main(["run", "preset:hand_raise", "--out", str(tmp_path / "out")])
    assert rc == 0
