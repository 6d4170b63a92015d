import math

import numpy as np
import pytest
from scipy import integrate

from katoklab.params import KatokParams
from katoklab.slowdown import flow, flow_with_jacobian, psi, psi_prime, trace, vector_field

P = KatokParams()


def test_psi_profile():
    u = np.array([1e-6, 1e-3, 0.02])
    assert np.allclose(psi(u, P), (u / P.r0) ** P.alpha, rtol=1e-12)
    assert np.allclose(psi(np.array([P.r0, 0.5]), P), 1.0)
    v = np.linspace(1e-4, 0.2, 400)
    assert np.all(np.diff(psi(v, P)) >= -1e-15)
    assert np.all(psi_prime(v, P) >= -1e-12)


def test_linear_outside_disk():
    s0 = np.array([0.4, 0.5])
    y = flow(s0, 1.0, P)
    assert np.allclose(y, [0.4 * P.lam, 0.5 / P.lam], rtol=1e-10)


def test_flow_against_scipy():
    s0 = np.array([0.02, 0.25])
    ref = integrate.solve_ivp(lambda t, s: vector_field(s, P), (0, 1), s0, rtol=1e-12, atol=1e-14).y[:, -1]
    assert np.allclose(flow(s0, 1.0, P), ref, atol=1e-9)


def test_hyperbola_invariant():
    # s1*s2 is conserved by the diagonal slowed field
    s0 = np.array([0.01, 0.3])
    y = flow(s0, 5.0, P)
    assert y[0] * y[1] == pytest.approx(s0[0] * s0[1], rel=1e-9)


def test_jacobian_finite_difference():
    s0 = np.array([0.05, 0.2])
    _, J = flow_with_jacobian(s0, 1.0, P)
    h = 1e-6
    fd = np.column_stack([(flow(s0 + h * e, 1.0, P) - flow(s0 - h * e, 1.0, P)) / (2 * h)
                          for e in np.eye(2)])
    assert np.allclose(J, fd, atol=1e-6)
    assert np.linalg.det(J) > 0


def test_trace_rows():
    out = trace(np.array([0.01, 0.2]), 1.0, 0.25, P)
    assert out.shape == (5, 3)
    assert np.allclose(out[:, 0], np.linspace(0, 1, 5))
    assert math.isclose(out[0, 1], 0.01)
