import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvephi4.covariance import matrix_model
from lvephi4.errors import DomainError, EnumerationLimitError
from lvephi4.wick import (
    contraction_patterns, direct_logZ, direct_logZ_derivatives, gaussian_moment, logZ_series,
    pair_partitions, pattern_of_pairing, quartic_moment_sum, series_exp, series_log, wick_order_quartic,
    wick_quartic_moment,
)


def test_pair_partition_count():
    for k in range(1, 6):
        assert len(list(pair_partitions(range(2 * k)))) == math.prod(range(2 * k - 1, 0, -2))


def test_fourth_moment_is_three_c_squared():
    C = np.array([[0.7]])
    assert gaussian_moment(C, [0, 0, 0, 0]) == pytest.approx(3 * 0.49)
    assert gaussian_moment(C, [0, 0, 0]) == 0.0


def test_moment_degree_cap():
    with pytest.raises(EnumerationLimitError):
        gaussian_moment(np.eye(1), [0] * 18)


def test_wick_ordered_quartic_has_zero_mean():
    C = np.array([[0.8]])
    assert wick_quartic_moment(C, [0], 0.8) == pytest.approx(0.0, abs=1e-14)
    assert wick_order_quartic(0.8) == pytest.approx((1.0, -4.8, 3 * 0.64))


def test_pattern_counts_match_brute_force():
    for n in (1, 2, 3):
        brute = {}
        for p in pair_partitions(range(4 * n)):
            key = pattern_of_pairing(p)
            brute[key] = brute.get(key, 0) + 1
        pats = {(p.loops, p.lines): p.count for p in contraction_patterns(n)}
        assert pats == brute


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_moment_sum_matches_brute_expansion(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    C = A @ A.T + 0.1 * np.eye(2)
    T = float(rng.random())
    for n in (1, 2):
        brute = sum(wick_quartic_moment(C, list(x), T) for x in itertools.product(range(2), repeat=n))
        assert quartic_moment_sum(C, T, n) == pytest.approx(brute, rel=1e-10, abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=6))
def test_series_log_inverts_exp(a):
    a = [0.0] + a
    back = series_log(series_exp(a))
    assert back[1:] == pytest.approx(a[1:], rel=1e-9, abs=1e-9)


def test_order_one_vanishes_and_two_site_order_two():
    m = matrix_model([[1.0, 0.3], [0.3, 1.0]])
    s = logZ_series(m, 2)
    assert s.coefficients[1] == pytest.approx(0.0, abs=1e-14)
    assert s.coefficients[2] == pytest.approx(3 * np.sum(m.covariance ** 4), rel=1e-12)


def test_one_site_series_against_quadrature_derivatives():
    m = matrix_model([[0.6]])
    s = logZ_series(m, 4)
    d = np.real(direct_logZ_derivatives(m, 0.0, 4, degree=80, rtol=1e-12))
    for n in range(1, 5):
        assert d[n] / math.factorial(n) == pytest.approx(s.coefficients[n], rel=1e-8, abs=1e-12)


def test_quadrature_small_coupling_matches_series():
    m = matrix_model([[1.0, 0.2], [0.2, 1.0]])
    lam = 1e-4
    s = logZ_series(m, 4)
    assert direct_logZ(m, lam, rtol=1e-12).real == pytest.approx(s(lam), rel=1e-5)


def test_quadrature_domain():
    m = matrix_model([[1.0]])
    with pytest.raises(DomainError):
        direct_logZ(m, 2.0)
    with pytest.raises(DomainError):
        direct_logZ(m, -0.1)


def test_oracle_cost_cap():
    m = matrix_model(np.eye(5))
    with pytest.raises(EnumerationLimitError):
        logZ_series(m, 4)


def test_series_json_is_deterministic():
    m = matrix_model([[1.0]])
    assert logZ_series(m, 3).to_json() == logZ_series(m, 3).to_json()
