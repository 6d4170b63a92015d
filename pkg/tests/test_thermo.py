import numpy as np
import pytest

from katoklab import thermo as TH
from katoklab.params import LOG_LAMBDA, KatokParams
from katoklab.symbolic import fixed_point_count

P = KatokParams()


def test_lyapunov_between_zero_and_log_lambda():
    chi, se = TH.lyapunov_exponent(np.array([0.3, 0.7]), 20_000, P)
    assert 0.5 < chi < LOG_LAMBDA + 3 * se


def test_unstable_direction_converges():
    r = TH.direction_residuals(np.array([0.37, 0.11]), [20, 40, 60], P)
    assert r[-1] < 1e-8


def test_log_ju_cocycle():
    rng = np.random.default_rng(8)
    from katoklab.katok import apply_GT2
    for _ in range(5):
        p = rng.random(2)
        n, m = rng.integers(1, 20, 2)
        q = p.copy()
        for _ in range(n):
            q = apply_GT2(q, P).image
        whole = TH.log_Ju_sum(p, n + m, P)
        parts = TH.log_Ju_sum(p, n, P) + TH.log_Ju_sum(q, m, P)
        assert whole == pytest.approx(parts, abs=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_periodic_orbit_counts(n):
    orbits = TH.periodic_orbits(n, P)
    assert TH.dedup_count(orbits) == fixed_point_count(n)


def test_fixed_point_is_neutral():
    (o,) = [o for o in TH.periodic_orbits(1, P) if not o.linear]
    assert o.log_multiplier == 0.0


def test_pressure_at_zero_counts_points():
    n = 5
    est = TH.pressure_estimate(0.0, n, P)
    assert est == pytest.approx(np.log(fixed_point_count(n)) / n, rel=1e-12)


def test_aitken_geometric():
    s = 1.0 + 0.5 ** np.arange(1, 6)
    assert TH.aitken(s) == pytest.approx(1.0, abs=1e-12)
    assert TH.aitken([1.0, 2.0]) == 2.0


def test_pressure_curve_shape():
    c = TH.pressure_curve(np.linspace(-1, 2, 7), 6, P)
    sh = TH.curve_shape(c)
    assert sh["monotone"] and sh["convex"]


def test_t0_formula():
    e = TH.t0_from(0.9, 0.95, 1.0)
    assert e.t0 == pytest.approx(-1.0)
    with pytest.raises(TH.InsufficientData):
        TH.t0_estimate(0.9, 0.95, [])


def test_autocorrelation_lag_zero_is_variance():
    lags, res = TH.autocorrelations(["cos_x", "zero"], 3, 4000, P, rng=np.random.default_rng(0))
    C, err = res["cos_x"]
    assert C[0] == pytest.approx(0.5, abs=4 * err[0] + 0.02)
    assert np.all(res["zero"][0] == 0)


def test_clt_degenerate_zero():
    r = TH.clt_diagnostic("zero", 10, 200, P, rng=np.random.default_rng(0))
    assert r["distance"] == 0.0 and r["sigma"] == 0.0


def test_decorrelation_lag():
    assert TH.decorrelation_lag(np.array([1.0, 0.5, 0.01, 0.0]), np.full(4, 0.1)) == 2
    assert TH.decorrelation_lag(np.array([1.0, 1.0]), np.full(2, 0.1)) == -1
