import math

import numpy as np
import pytest

from katoklab.cones import (Cone, cone_margin, cone_scan, gamma_factor_from_jacobian, gamma_linear,
                            mu0_analytic, phi_quadratic, product_bound_samples)
from katoklab.params import LAMBDA, A, KatokParams

P = KatokParams()


def test_mu0():
    assert mu0_analytic(0.5) == pytest.approx(2 - math.sqrt(3), rel=1e-14)
    assert phi_quadratic(mu0_analytic(0.3), 0.3) == pytest.approx(0, abs=1e-14)


def test_linear_map_cones():
    J = np.array(A, dtype=float)
    from katoklab.params import R
    D = R @ J @ R.T
    assert cone_margin(D, 0.5) > 0
    assert cone_margin(np.linalg.inv(D), 0.5, orientation="-") > 0
    assert cone_margin(np.eye(2), 0.5) == pytest.approx(0, abs=1e-14)


def test_cone_contains():
    c = Cone(0.5)
    assert c.contains([1.0, 0.4]) and not c.contains([1.0, 0.6])
    assert Cone(0.5, "-").contains([0.4, 1.0])


def test_gamma_linear_matches_jacobian():
    D = np.diag([LAMBDA, 1 / LAMBDA])
    assert gamma_factor_from_jacobian(D, 0.5) == pytest.approx(gamma_linear(0.5), rel=1e-9)


def test_scan_no_failures():
    pts = P.rng(9).random((500, 2))
    r = cone_scan(pts, 0.5, P)
    assert r["forward_failures"] == 0 and r["backward_failures"] == 0


def test_product_bound():
    rows = product_bound_samples(P, 0.5, 20, np.random.default_rng(2))
    assert np.all(rows[:, 3] <= rows[:, 4] + 1e-9)
