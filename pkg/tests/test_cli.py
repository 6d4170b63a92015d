import json
import subprocess
import sys

import pytest

from katoklab.cli import main


def run(*argv):
    return subprocess.run([sys.executable, "-m", "katoklab.cli", *argv], capture_output=True, text=True)


def test_unknown_flag_exits_2():
    r = run("orbit", "--bogus")
    assert r.returncode == 2
    assert "usage" in r.stderr
    assert json.loads(r.stderr.strip().splitlines()[-1])["error"] == "usage"


def test_unknown_command_exits_2():
    assert main(["nope"]) == 2


def test_bad_config_exits_2(tmp_path, capsys):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"alpha": 2.0}))
    assert main(["orbit", "--config", str(f)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"
    assert main(["orbit", "--config", str(tmp_path / "missing.json")]) == 2


def test_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv("KATOKLAB_THREADS", "x")
    assert main(["orbit", "--n", "2", "--out", str(tmp_path / "o.csv")]) == 2
    monkeypatch.setenv("KATOKLAB_THREADS", "1")
    assert main(["orbit", "--n", "2", "--out", str(tmp_path / "o.csv")]) == 0


def test_csv_provenance_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for f in (a, b):
        assert main(["orbit", "--n", "5", "--seed", "4", "--out", str(f)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# ")
    for key in ("alpha=", "r0=", "ode_tol=", "rng_seed=4", 'command="orbit"'):
        assert key in lines[0]
    assert lines[1] == "j,x1,x2" and len(lines) == 8
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 2 and out[0].startswith("orbit:")


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["orbit", "--n", "3", "--seed", "1", "--out", str(a)])
    main(["orbit", "--n", "3", "--seed", "2", "--out", str(b)])
    assert a.read_text().splitlines()[2:] != b.read_text().splitlines()[2:]


def test_flags_after_options(tmp_path):
    f = tmp_path / "l.json"
    assert main(["lyapunov", "--iters", "2000", "--r0", "0.05", "--out", str(f)]) == 0
    doc = json.loads(f.read_text())
    assert doc["provenance"]["r0"] == 0.05 and doc["result"]["iters"] == 2000


def test_pressure_csv(tmp_path):
    f = tmp_path / "p.csv"
    assert main(["pressure", "--nmax", "4", "--steps", "3", "--out", str(f)]) == 0
    rows = f.read_text().splitlines()
    assert rows[1] == "t,P_1,P_2,P_3,P_4,P_extrap" and len(rows) == 5


def test_report_only_fast_criteria(tmp_path):
    f = tmp_path / "r.json"
    assert main(["report", "--quick", "--only", "AC1", "AC2", "--out", str(f)]) == 0
    doc = json.loads(f.read_text())
    assert doc["result"]["passed"] == ["AC1", "AC2"]
    assert main(["report", "--only", "AC99"]) == 2


def test_failed_check_exits_1(tmp_path):
    # the passage time estimate is violated for deep passages
    f = tmp_path / "v.json"
    assert main(["verify-lemmas", "--samples", "10", "--out", str(f)]) == 1
    assert json.loads(f.read_text())["result"]["passage"]["T_estimate_holds"] is False
