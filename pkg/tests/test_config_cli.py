import json
import subprocess
import sys

import numpy as np
import pytest

from ndeim import config
from ndeim.cli import main
from ndeim.vdp import default_r0

from conftest import VDP_RUN_DELAY

H1_WORKED = {"name": "H1", "M": 0.1, "M0": 0.0, "Mj": [1.0, 1.0], "k": 1, "r0": 0.2, "d": 1.0}


def write_config(tmp_path, body, name="cfg.json"):
    body = {"schema_version": 1, **body}
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


def run(tmp_path, command, body, out="out"):
    cfg = write_config(tmp_path, body)
    code = main([command, "--config", cfg, "--out", str(tmp_path / out)])
    return code, tmp_path / out


def test_validate_accepts_minimal_and_names_bad_path():
    assert config.validate({"schema_version": 1}) == {"schema_version": 1}
    with pytest.raises(config.ConfigError) as err:
        config.validate({"schema_version": 1, "hypothesis": {**H1_WORKED, "bogus": 1}})
    assert err.value.path == "$.hypothesis"
    with pytest.raises(config.ConfigError) as err:
        config.validate({"schema_version": 1, "problem": {"rhs": "affine", "r": -1.0}})
    assert err.value.path == "$.problem.r"


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(config.ConfigError):
        config.load(path)
    with pytest.raises(config.ConfigError):
        config.load(tmp_path / "missing.json")


def test_admissible_worked_example(tmp_path, capsys):
    code, out = run(tmp_path, "admissible", {"hypothesis": {**H1_WORKED, "x_star": 0.5}})
    assert code == 0
    rep = json.loads((out / "admissibility.json").read_text())
    assert rep["feasible"] and rep["kappa"] == pytest.approx(0.82436063535, abs=1e-10)
    assert rep["x1"] == pytest.approx(0.31906760104, abs=1e-10)
    assert "kappa" in capsys.readouterr().out
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert [a["name"] for a in manifest["artifacts"]] == ["admissibility.json"]


def test_admissible_infeasible_exit_code(tmp_path):
    code, out = run(tmp_path, "admissible", {"hypothesis": {**H1_WORKED, "M": 1.0}})
    assert code == 2
    rep = json.loads((out / "admissibility.json").read_text())
    assert not rep["feasible"] and rep["reasons"]


def test_unknown_key_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "admissible", {"hypothesis": H1_WORKED, "extra": 1})
    assert code == 64
    assert "$" in capsys.readouterr().err


def test_missing_block_exit_code(tmp_path):
    code, _ = run(tmp_path, "simulate", {"problem": {"rhs": "affine", "r": 0.01,
                                                     "params": {"A": [[0.0]], "B": [[0.0]],
                                                                "c": [1.0]}}})
    assert code == 64


def test_simulate_writes_trajectory(tmp_path):
    body = {"problem": {"rhs": "linear_scalar", "r": 0.1, "params": {"a": -1.0},
                        "neutral": [{"matrix": 0.2}]},
            "simulate": {"t_end": 0.4, "history": {"kind": "constant", "value": [1.0]}}}
    code, out = run(tmp_path, "simulate", body)
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1"
    last = [float(v) for v in lines[-1].split(",")]
    assert last[0] == pytest.approx(0.4) and last[1] == pytest.approx(0.61932340198, abs=1e-8)
    summary = json.loads((out / "simulate.json").read_text())
    assert all(c["ok"] for c in summary["certificates"])


def test_manifold_affine_closed_form(tmp_path):
    body = {"problem": {"rhs": "affine", "r": 0.01,
                        "params": {"A": [[0.0]], "B": [[0.0]], "c": [0.5]}},
            "hypothesis": {**H1_WORKED, "M": 1e-3, "Mj": [1e-3, 1e-3], "r0": 0.02, "M0": 0.5},
            "manifold": {"xi": [[0.2], [-0.7]]}}
    code, out = run(tmp_path, "manifold", body)
    assert code == 0, (out / "manifold.json").read_text()
    body = json.loads((out / "manifold.json").read_text())
    names = {c["name"]: c for c in body["certificates"]}
    assert names["closed_form"]["ok"] and names["closed_form"]["value"] < 1e-10
    assert (out / "chart.csv").exists()


def vdp_track_body(bounds, history):
    measured, inflated = bounds
    hyp = {"name": "H1", "M": 0.1, "M0": 0.025, "Mj": list(inflated), "k": 1,
           "r0": default_r0(0.1, inflated[0], 1, "H1"), "d": 1.0}
    return {"problem": {"rhs": "vdp_neutral", "r": VDP_RUN_DELAY,
                        "params": {"b": -0.5, "c": 0.1, "eps": 0.05}, "kappa_cutoff": 2.0},
            "hypothesis": hyp, "track": {"history": history, "tol": 1e-11}}


def test_track_chart_round_trip(tmp_path, vdp_bounds):
    body = vdp_track_body(vdp_bounds, {"kind": "chart", "xi": [0.3, -0.2]})
    code, out = run(tmp_path, "track", body)
    assert code == 0
    result = json.loads((out / "tracking.json").read_text())
    certs = {c["name"]: c for c in result["certificates"]}
    assert certs["round_trip"]["ok"] and certs["chart_agreement"]["ok"]
    assert np.allclose(result["xi"], [0.3, -0.2], atol=1e-10)


def test_outputs_are_deterministic(tmp_path, vdp_bounds):
    body = vdp_track_body(vdp_bounds, {"kind": "random", "seed": 4, "amplitude": 1.0})
    runs = []
    for name in ("a", "b"):
        code, out = run(tmp_path, "track", body, out=name)
        assert code == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert runs[0] == runs[1]
    manifest = json.loads(runs[0]["MANIFEST.json"])
    assert {a["name"] for a in manifest["artifacts"]} == {"tracking.json", "profile.csv"}


def test_fdb_check_command(tmp_path):
    code, out = run(tmp_path, "fdb-check", {"fdb": {"points": 1, "max_order": 3}})
    assert code == 0
    res = json.loads((out / "fdb_check.json").read_text())
    assert res["max_rel_error"] <= 1e-5


def test_console_entry_runs_as_module(tmp_path):
    cfg = write_config(tmp_path, {"hypothesis": H1_WORKED})
    proc = subprocess.run([sys.executable, "-m", "ndeim.cli", "admissible", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
