import functools
import math
import operator

import numpy as np
import pytest

from katoklab import symbolic as S
from katoklab.params import LOG_LAMBDA, A, KatokParams


@pytest.fixture(scope="module")
def part():
    return S.build_partition(params=KatokParams(r0=0.01))


def test_perron(part):
    assert S.perron(part.transition)[0] == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-9)


def test_markov_and_areas(part):
    assert part.diameters().max() < 0.05
    # exact in Z[φ]: the elements tile the two base squares
    total = functools.reduce(operator.add, (r.area() for r in part.rects))
    assert total == S.BASE[0].area() + S.BASE[1].area()
    assert part.areas().sum() == pytest.approx(1.0, abs=1e-9)
    assert S.check_markov(part)


def test_counts_dp_vs_brute(part):
    assert S.count_first_return_words(part, 10) == S.count_brute_force(part, 10)


def test_renewal_identity(part):
    Sn = S.count_first_return_words(part, 15)
    assert S.renewal_residual(Sn, S.loop_counts(part, 15)) == 0


def test_h_below_log_lambda(part):
    assert S.exact_h(part) < LOG_LAMBDA
    fit = S.estimate_h(S.count_first_return_words(part, 40))
    assert fit["margin"] > 0


def test_insufficient_data():
    with pytest.raises(S.InsufficientData):
        S.estimate_h([0, 0, 1, 2])


@pytest.mark.parametrize("n", range(1, 11))
def test_fixed_point_count(n):
    lam = (3 + math.sqrt(5)) / 2
    assert S.fixed_point_count(n) == round(lam ** n + lam ** -n - 2)
    num, N = S.periodic_points(n)
    assert len(num) == S.fixed_point_count(n)
    # exact rational check A^n p = p mod 1
    An = np.linalg.matrix_power(np.array(A, dtype=object), n)
    img = (num.astype(object) @ An.T) % N
    assert np.array_equal(img.astype(np.int64), num)


def test_locate(part):
    k = part.P_index
    pts = S.sample_element(part, k, 20, np.random.default_rng(0))
    assert np.all(part.locate(pts) == k)
