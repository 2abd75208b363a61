import json
import subprocess
import sys

import numpy as np
import pytest

from implicit_rcis.cli import (EXIT_ASSUMPTION, EXIT_BREACH, EXIT_CAP, EXIT_CONFIG, EXIT_IO, EXIT_OK,
                               RunConfig, main, preset_config)
from implicit_rcis.polytope import Polytope, vertices


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path, obj):
    path.write_text(json.dumps(obj, indent=1))
    return path


SMALL_N2 = {"plant": {"preset": "integrator", "n": 2},
            "machine": {"kind": "tree", "L": 4},
            "oracle": {"N_mc": 2000, "seed": 3, "audit_samples": 200}}


@pytest.fixture(scope="module")
def built_n2(tmp_path_factory):
    out = tmp_path_factory.mktemp("n2")
    assert main(["build", "--preset", "integrator:2", "--explicit", "--out", str(out)]) == EXIT_OK
    return out


def test_build_writes_artifacts(built_n2):
    rc = json.loads((built_n2 / "rcis.json").read_text())
    assert rc["kind"] == "SingleCsub"
    report = json.loads((built_n2 / "report.json").read_text())
    assert report["s_dom"] == "s0" and report["machine_states"] == 31
    assert report["explicit"]["rows"] > 0
    assert rc["provenance"]["lifted"] is False and rc["provenance"]["prefeedback_K"] == [[-1.0, -2.0]]
    assert (built_n2 / "explicit.json").exists()


def test_empty_set_is_success(tmp_path, capsys):
    cfg = {"plant": {"A": [[0.0]], "B": [[1.0]], "D": {"vertices": [[-0.1], [0.1]]},
                     "S": {"G": [[1, 0], [-1, 0], [0, 1], [0, -1]], "h": [0, 0, 0, 0]}},
           "machine": {"kind": "simple_loop", "L": 1}}
    code, out, _ = run(capsys, "build", "--config", write(tmp_path / "c.json", cfg), "--out", tmp_path)
    assert code == EXIT_OK and json.loads(out)["status"] == "empty"


def test_non_nilpotent_without_prefeedback(tmp_path, capsys):
    cfg = {"plant": {"A": [[1.0, 1.0], [0.0, 1.0]], "B": [[0.0], [1.0]],
                     "D": {"vertices": [[0.0, -0.1], [0.0, 0.1]]},
                     "S": {"G": [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
                           "h": [1, 1, 1, 1, 1, 1]}},
           "machine": {"kind": "tree", "L": 1},
           "pipeline": {"prefeedback": "none"}}
    code, _, err = run(capsys, "build", "--config", write(tmp_path / "c.json", cfg), "--out", tmp_path)
    assert code == EXIT_ASSUMPTION
    assert "nilpotency assumption" in err


def test_check_member_with_certificate(built_n2, capsys):
    code, out, _ = run(capsys, "check", built_n2 / "rcis.json", "0,0")
    res = json.loads(out)
    assert code == EXIT_OK and res["member"] and res["slack"] > 0
    assert len(res["theta"]) == 30


def test_check_non_member(built_n2, capsys):
    _, out, _ = run(capsys, "check", built_n2 / "rcis.json", "2 0")
    assert json.loads(out)["member"] is False


def test_explicit_vertex_is_implicit_member(built_n2, capsys):
    C = Polytope.from_dict(json.loads((built_n2 / "explicit.json").read_text()))
    for v in vertices(C):
        _, out, _ = run(capsys, "check", built_n2 / "rcis.json", "--", ",".join(f"{c:.17g}" for c in v))
        assert json.loads(out)["member"]


def test_check_dimension_mismatch(built_n2, capsys):
    code, _, err = run(capsys, "check", built_n2 / "rcis.json", "0")
    assert code == EXIT_CONFIG and "R^2" in err


def test_compare_matches_oracle(tmp_path, capsys):
    code, out, _ = run(capsys, "compare", "--config", write(tmp_path / "c.json", SMALL_N2),
                       "--out", tmp_path)
    assert code == EXIT_OK
    lines = out.strip().splitlines()
    assert lines[0] == "method,time_s,vol_pct"
    assert lines[2].startswith("implicit tree L=4,") and lines[2].endswith(",100.00")
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["violations"] == 0


def test_outputs_are_deterministic(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**SMALL_N2, "machine": {"kind": "tree", "L": 2},
                                      "oracle": {"N_mc": 500, "seed": 1, "audit_samples": 0}})
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run(capsys, "build", "--config", cfg, "--out", out)[0] == EXIT_OK
        assert run(capsys, "compare", "--config", cfg, "--out", out, "--no-timing")[0] == EXIT_OK
        blobs.append(((out / "rcis.json").read_bytes(), (out / "compare.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    assert b",," in blobs[0][1]


def test_simulate_zero_disturbance(tmp_path, capsys):
    scen = {"name": "calm", "T": 30, "x0": [0.2, -0.1], "policy": {"K": [[-0.5, -1.0]]},
            "disturbance": {"kind": "zero"}}
    code, out, _ = run(capsys, "simulate", "--preset", "integrator:2:2", "--out", tmp_path,
                       "--scenario", write(tmp_path / "s.json", scen), "--explicit")
    assert code == EXIT_OK
    summary = json.loads(out)
    assert [a["max_correction"] for a in summary["arms"]] == [0.0, 0.0]
    assert (tmp_path / "trajectory.csv").read_text().count("\n") == 31
    assert (tmp_path / "trajectory.svg").exists() and (tmp_path / "trajectory_explicit.csv").exists()


def test_simulate_outside_start_is_breach(tmp_path, capsys):
    scen = {"T": 5, "x0": [1.0, 1.0]}
    code, _, _ = run(capsys, "simulate", "--preset", "integrator:2:2", "--out", tmp_path,
                     "--scenario", write(tmp_path / "s.json", scen))
    assert code == EXIT_BREACH


@pytest.mark.parametrize("argv, expected", [
    (["--machine", "simple_loop:3", "--actions", "2"], "dominant: s1; |Q| = 3 (all mutually dominant)"),
    (["--machine", "tree:2", "--actions", "2"], "dominant: s0; |Q| = 7"),
    (["--config", "configs/no_dominance.json"], "no dominant state; Q0 = {a, b}, Lambda path will be used"),
])
def test_inspect_machine(argv, expected, capsys, monkeypatch, request):
    monkeypatch.chdir(request.config.rootpath)
    code, out, _ = run(capsys, "inspect-machine", *argv)
    assert code == EXIT_OK and out.strip() == expected


def test_schema_error_reports_line(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{\n  "plant": {"preset": "integrator", "n": 2},\n  "machine": {"kind": "tree", "L": 0}\n}\n')
    code, _, err = run(capsys, "build", "--config", path)
    assert code == EXIT_CONFIG
    assert f"{path}:3:" in err and "machine" in err


def test_unknown_key_rejected(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{\n  "plant": {"preset": "integrator", "n": 2},\n  "machine": {"kind": "tree", "L": 2},\n  "colour": 1\n}\n')
    code, _, err = run(capsys, "build", "--config", path)
    assert code == EXIT_CONFIG and ":4:" in err and "colour" in err


def test_bad_json_reports_position(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{\n  "plant": {"preset": "integrator",, "n": 2}\n}\n')
    code, _, err = run(capsys, "build", "--config", path)
    assert code == EXIT_CONFIG and f"{path}:2:" in err


def test_missing_file(capsys):
    assert run(capsys, "build", "--config", "/nonexistent/c.json")[0] == EXIT_IO


def test_row_cap_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RCIS_ROW_CAP", "10")
    cfg = {"plant": {"preset": "integrator", "n": 2}, "machine": {"kind": "tree", "L": 2},
           "pipeline": {"explicit": True, "projection": "fm"}}
    code, _, err = run(capsys, "build", "--config", write(tmp_path / "c.json", cfg), "--out", tmp_path)
    assert code == EXIT_CAP and "error" in err


def test_help_lists_exit_codes():
    res = subprocess.run([sys.executable, "-m", "implicit_rcis", "build", "--help"],
                         capture_output=True, text=True, check=True)
    assert "exit codes:" in res.stdout and "RCIS_ROW_CAP" in res.stdout
    for code in range(10):
        assert f"\n  {code}  " in res.stdout


def test_run_config_round_trip():
    cfg = preset_config("integrator:3:2")
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert cfg.machine == {"kind": "tree", "L": 2}
