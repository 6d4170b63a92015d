import numpy as np
import pytest

from katoklab.katok import (apply_G, apply_G_inv, apply_GT2, apply_GT2_inv, check_nu_invariance,
                            det_defect, kappa0, kappa0_monte_carlo, phi, phi_inv, torus_distance)
from katoklab.params import A, KatokParams

P = KatokParams()
rng = np.random.default_rng(5)
PTS = rng.random((300, 2))


def test_equals_A_far_from_origin():
    p = np.array([0.5, 0.5])
    assert np.allclose(apply_G(p, P).image, np.mod(np.array(A) @ p, 1.0), atol=1e-12)


def test_origin_fixed():
    assert np.allclose(apply_GT2(np.zeros(2), P).image % 1.0, 0.0, atol=1e-14)


def test_inverses():
    q = apply_G_inv(apply_G(PTS, P, jacobian=False).image, P, jacobian=False).image
    assert np.max(torus_distance(q, PTS)) < 1e-9
    q = apply_GT2_inv(apply_GT2(PTS[:50], P).image, P).image
    assert np.max(torus_distance(q, PTS[:50])) < 1e-9


def test_phi_roundtrip():
    q = phi_inv(phi(PTS[:50], P), P)
    assert np.max(torus_distance(q, PTS[:50])) < 1e-10


def test_area_and_nu():
    assert det_defect(PTS, P) < 1e-7
    assert check_nu_invariance(PTS, P) < 1e-6


def test_kappa0_mc():
    est, se = kappa0_monte_carlo(P, n=200_000, rng=np.random.default_rng(1))
    assert abs(est - kappa0(P)) < 4 * se
