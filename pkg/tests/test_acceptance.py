"""Acceptance criteria, checked against two full ``katoklab report`` runs.

Set KATOKLAB_QUICK=1 for a reduced-size smoke run (sample-size checks are
then skipped). Wall-time budgets are checked from the timings on stderr.
"""
import json
import math
import os
import subprocess
import sys

import pytest

QUICK = os.environ.get("KATOKLAB_QUICK") == "1"
LOG_LAMBDA = math.log((3 + math.sqrt(5)) / 2)
BUDGET = {"AC1": 10, "AC2": 10, "AC3": 60, "AC4": 30, "AC5": 300, "AC6": 300, "AC7": 120,
          "AC8": 60, "AC9": 300, "AC10": 600, "AC11": 300, "AC12": 900, "AC14": 600}


def _report(path):
    cmd = [sys.executable, "-m", "katoklab.cli", "report", "--seed", "0", "--out", str(path)]
    if QUICK:
        cmd.append("--quick")
    r = subprocess.run(cmd, capture_output=True, text=True)
    timings = {}
    for line in r.stderr.splitlines():
        try:
            d = json.loads(line)
        except ValueError:
            continue
        if "timing" in d:
            timings[d["timing"]] = d["seconds"]
    return r, timings


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("report")
    a, b = d / "first.json", d / "second.json"
    ra, ta = _report(a)
    rb, _ = _report(b)
    for r in (ra, rb):
        assert r.returncode in (0, 1), r.stderr
    doc = json.loads(a.read_text())
    return {"doc": doc, "res": doc["result"]["criteria"], "timings": ta, "code": ra.returncode,
            "bytes": (a.read_bytes(), b.read_bytes())}


def _timed(runs, key):
    if key in BUDGET:
        assert runs["timings"][key] < BUDGET[key], f"{key} took {runs['timings'][key]} s"


def _size(value, full):
    if not QUICK:
        assert value == full


def test_ac1_area_preservation(runs):
    r = runs["res"]["AC1"]
    _size(r["points"], 10_000)
    assert r["max_det_defect"] < 1e-7
    _timed(runs, "AC1")


def test_ac2_nu_invariance(runs):
    r = runs["res"]["AC2"]
    _size(r["points"], 10_000)
    assert r["max_residual"] < 1e-6
    _timed(runs, "AC2")


def test_ac3_cone_invariance(runs):
    r = runs["res"]["AC3"]
    assert r["mu0"] == pytest.approx(2 - math.sqrt(3), abs=1e-12)
    assert [s["mu"] for s in r["scans"]] == [0.5, 0.7, 0.9]
    for s in r["scans"]:
        _size(s["points"], 100_000)
        assert s["mu"] > r["mu0"]
        assert s["forward_failures"] == 0 and s["backward_failures"] == 0
    _timed(runs, "AC3")


def test_ac4_hessian_bound(runs):
    r = runs["res"]["AC4"]
    _size(r["points"], 10_000)
    assert r["worst_ratio"] <= 1.0
    _timed(runs, "AC4")


def test_ac5_passage_bounds(runs):
    r = runs["res"]["AC5"]
    _size(r["passages"] - r["skipped"], 1000)
    for k, v in r["worst_relative_margin"].items():
        assert v >= -1e-6, f"{k} violated by {v}"
    assert abs(r["slope"] - (-1.0)) <= 0.2
    _timed(runs, "AC5")


def test_ac6_pair_contraction(runs):
    r = runs["res"]["AC6"]
    _size(r["pairs"], 1000)
    assert r["hypotheses_met"] > 0
    assert r["worst_final_margin"] >= 0
    _timed(runs, "AC6")


def test_ac7_product_and_transit(runs):
    r = runs["res"]["AC7"]
    _size(r["product_samples"], 1000)
    _size(r["transit_samples"], 1000)
    assert r["product_violations"] == 0
    assert r["T0_star"] == pytest.approx(16 * 2 ** 0.5 / LOG_LAMBDA, rel=1e-12)
    assert r["transit_max"] <= r["T0_star"]
    _timed(runs, "AC7")


def test_ac8_symbolic(runs):
    r = runs["res"]["AC8"]
    assert r["perron_error"] < 1e-9
    assert r["dp_equals_brute_force"] and len(r["S_n"]) == 12
    assert r["h"] < LOG_LAMBDA and r["h_margin"] > 0
    _timed(runs, "AC8")


def test_ac9_kac(runs):
    r = runs["res"]["AC9"]
    _size(r["samples"], 10_000)
    assert abs(r["mean_tau"] - r["inverse_area"]) / r["inverse_area"] < 0.02
    _timed(runs, "AC9")


def test_ac10_tower(runs):
    r = runs["res"]["AC10"]
    assert r["log_a_stable"] < 0 and r["log_a_unstable"] < 0
    assert r["Y4_ok"] and r["kappa"] < 1
    assert r["K_relative_change"] <= 0.2
    _timed(runs, "AC10")


def test_ac11_lyapunov(runs):
    r = runs["res"]["AC11"]
    chi = [r["by_r0"][k]["chi"] for k in ("0.1", "0.05", "0.01")]
    assert abs(chi[-1] - LOG_LAMBDA) < 0.05
    assert chi[0] < chi[1] < chi[2]
    _timed(runs, "AC11")


def test_ac12_pressure(runs):
    r = runs["res"]["AC12"]
    P = dict(zip(r["t"], r["extrapolated"]))
    assert abs(P[0.0] - LOG_LAMBDA) < 0.05
    assert abs(P[1.0]) < 0.05 and abs(P[2.0]) < 0.05
    d1 = [b - a for a, b in zip(r["extrapolated"], r["extrapolated"][1:])]
    assert max(d1) <= 1e-3
    assert min(b - a for a, b in zip(d1, d1[1:])) >= -1e-3   # uniform grid
    for n in range(1, min(10, max(r["levels"])) + 1):
        found, exact = r["counts"][str(n)]
        assert found == exact == round(((3 + 5 ** 0.5) / 2) ** n + ((3 - 5 ** 0.5) / 2) ** n - 2)
    if not QUICK:
        assert max(r["levels"]) == 12
    _timed(runs, "AC12")


def test_ac13_t0(runs):
    r = runs["res"]["AC13"]
    t0 = [r["by_r0"][k]["t0"] for k in ("0.1", "0.05", "0.01")]
    assert all(x < 0 for x in t0), f"t0 = {t0}"
    assert t0[0] > t0[1] > t0[2], f"t0 = {t0}"


def test_ac14_correlations_and_clt(runs):
    r = runs["res"]["AC14"]
    bad = {k: c["max_ratio_from_50"] for k, c in r["correlations"].items()
           if c["max_ratio_from_50"] >= 3.0}
    last = {k: rows[-1] for k, rows in r["clt"].items()}
    if not QUICK:
        assert all(x["n"] == 10_000 for x in last.values())
    far = {k: x["distance"] for k, x in last.items() if x["distance"] >= 0.03}
    assert not bad and not far, f"correlation ratio {bad}, CLT distance {far}"
    _timed(runs, "AC14")


def test_ac15_determinism(runs):
    a, b = runs["bytes"]
    assert a == b
    assert b'"timing"' not in a and b'"seconds"' not in a
