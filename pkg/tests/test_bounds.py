import math

import numpy as np
import pytest

from katoklab import bounds as B
from katoklab.params import KatokParams

P = KatokParams()


def test_hessian_closed_form():
    s = np.array([0.05, 0.12])
    assert np.allclose(B.hessian_fd(s, P), B.hessian_exact(s, P), rtol=1e-5)


def test_hessian_bound_holds():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.2, 0.2, (200, 2))
    assert B.check_hessian_bound(pts, P)["margin"] >= 0


def test_passage_time_matches_flow():
    rec = B.make_passage(1.2, P)
    # the integrated endpoint sits on the exit circle
    assert rec.sT @ rec.sT == pytest.approx(P.r0 / 2, rel=1e-8)
    assert rec.sT[0] > rec.sT[1]


def test_passage_bounds_and_pairs():
    for th in B.passage_sample(P, 5):
        rec = B.make_passage(th, P)
        rep = B.check_passage_bounds(rec, P)
        lemma = {k: v for k, v in rep["checks"].items() if k != "T_estimate"}
        assert min(lemma.values()) >= -1e-6
        pr = B.check_pair_contraction(B.make_pair(rec, 0.5, 0.5, P), P)
        if pr["hypotheses_met"]:
            assert pr["checks"]["final"] >= 0


def test_entry_outside_quadrant():
    with pytest.raises(B.HypothesisViolation):
        B.make_passage(0.1, P)


def test_transit_axis_below_T0():
    assert B.transit_time_axis(P) < B.T0_star(P.alpha)
    th = np.linspace(math.pi / 4 + 0.01, math.pi / 2 - 0.01, 4)
    assert B.check_transit_bound(th, P)["margin"] >= 0
