import json
import math

import numpy as np
import pytest

from katoklab.params import (LAMBDA, LOG_LAMBDA, A, R, KatokParams, ParameterError,
                             from_eigen, reduce_torus, to_eigen)


def test_eigenvalue():
    assert LAMBDA == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-15)
    assert LOG_LAMBDA == pytest.approx(0.962423650119206, rel=1e-12)


def test_eigen_chart_diagonalizes_A():
    D = R @ np.array(A, dtype=float) @ R.T
    assert np.allclose(D, np.diag([LAMBDA, 1 / LAMBDA]), atol=1e-13)


def test_chart_roundtrip():
    s = np.random.default_rng(0).uniform(-0.2, 0.2, (100, 2))
    assert np.allclose(to_eigen(from_eigen(s)), s, atol=1e-15)


def test_reduce_torus():
    assert np.allclose(reduce_torus(np.array([1.25, -0.5])), [0.25, 0.5])


def test_derived_constants():
    p = KatokParams()
    assert p.r1 == pytest.approx(2 * p.r0 * LOG_LAMBDA)
    assert p.C1 == pytest.approx(2 * p.alpha * LOG_LAMBDA / p.r0 ** p.alpha)
    # closed form of the inner integral
    assert p.I_a == pytest.approx(p.r0 ** 0.5 * (p.r0 / 2) ** 0.5 / 0.5)
    assert p.kappa0 > 1


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"r0": 0.2}, {"ode_tol": 0.1}])
def test_invalid(kw):
    with pytest.raises(ParameterError):
        KatokParams(**kw)


def test_json(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"alpha": 0.3, "r0": 0.05}))
    p = KatokParams.from_json(f)
    assert (p.alpha, p.r0) == (0.3, 0.05)
    f.write_text(json.dumps({"alpha": 0.3, "bogus": 1}))
    with pytest.raises(ParameterError):
        KatokParams.from_json(f)


def test_rng_streams_independent_and_reproducible():
    p = KatokParams(rng_seed=7)
    assert np.array_equal(p.rng(3).random(4), p.rng(3).random(4))
    assert not np.array_equal(p.rng(3).random(4), p.rng(4).random(4))
