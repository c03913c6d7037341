import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvephi4.bounds import (
    ClusterSet, RemainderReport, borel_partial_transform, cluster_sum, cluster_tree_length, factorial_bound_fit,
    nelson_check, nelson_scan, one_site_oracle, pressure_majorant, resolvent_norms, stirling_ratio_check,
    taylor_remainder,
)
from lvephi4.covariance import DEFAULT_M, site_model
from lvephi4.errors import DomainError, EnumerationLimitError

S = math.log(DEFAULT_M) / (2 * math.pi)


def _lam_for(x, K=2 * math.e, j_max=8):
    return x / (K * j_max * math.log(DEFAULT_M))


def test_majorant_converges_below_one():
    rep = pressure_majorant(_lam_for(0.5))
    assert rep["converges"]
    assert abs(rep["geometric_partial"] - rep["closed_form"]) <= 1e-12
    assert rep["tree_dominated"]


def test_majorant_flags_divergence():
    assert not pressure_majorant(_lam_for(1.2))["converges"]


def test_stirling_ratio():
    assert stirling_ratio_check(50)["holds"]


def test_nelson_examples():
    assert nelson_check(0.4, 0.1, 30, S)[1]
    assert nelson_check(1.0, 0.1, 0, S)[0] == 1.0
    lam = 0.1
    a = 2 * lam * S * S
    assert not nelson_check(a, lam, 40, S)[1]


@settings(max_examples=30)
@given(st.floats(0.01, 0.5))
def test_nelson_crossover(lam):
    above = nelson_scan(2 * lam * S * S + 0.1, lam, S, range(1, 200))
    assert above["crossover"] is not None
    below = nelson_scan(max(2 * lam * S * S - 0.1, 1e-4), lam, S, range(150, 200)) if 2 * lam * S * S > 0.1 else None
    if below is not None:
        assert not any(r["below_one"] for r in below["rows"])


def test_tree_length_examples():
    assert cluster_tree_length({(0, 0)}) == 0.0
    assert cluster_tree_length({(0, 0), (1, 0)}) == 1.0
    assert cluster_tree_length(ClusterSet(frozenset({(0, 0), (1, 0), (0, 1), (1, 1)}))) == pytest.approx(3.0)


def test_cluster_must_contain_origin():
    with pytest.raises(DomainError):
        ClusterSet(frozenset({(1, 0)}))
    with pytest.raises(EnumerationLimitError):
        cluster_tree_length({(0, i) for i in range(15)})


def test_tree_length_never_decreases_when_a_square_is_added():
    corners = {(0, 0), (2, 0), (0, 2), (2, 2)}
    assert cluster_tree_length(corners | {(1, 1)}) >= cluster_tree_length(corners)


@settings(max_examples=40)
@given(st.lists(st.sampled_from([(1, 0), (-1, 0), (0, 1), (0, -1)]), max_size=10), st.integers(0, 100))
def test_tree_length_is_monotone_on_connected_clusters(steps, pick):
    # grow an edge-connected cluster by a random walk, then attach one neighbour
    pos, g = (0, 0), {(0, 0)}
    for dx, dy in steps:
        pos = (pos[0] + dx, pos[1] + dy)
        g.add(pos)
    base = sorted(g)[pick % len(g)]
    extra = (base[0] + 1, base[1])
    assert cluster_tree_length(g | {extra}) >= cluster_tree_length(g) - 1e-12


def test_cluster_sum_basic():
    assert cluster_sum(2.0, 3, 1)["partial_sums"] == [1.0]
    assert cluster_sum(60.0, 3, 4)["partial_sums"][-1] == pytest.approx(1.0, abs=1e-20)


def test_cluster_increments_decay():
    rep = cluster_sum(2.0, 4, 5)
    assert all(r < 1 for r in rep["ratios"])
    assert rep["partial_sums"] == sorted(rep["partial_sums"])


def test_exhaustive_mode_dominates_connected():
    con = cluster_sum(2.0, 1, 3)
    allm = cluster_sum(2.0, 1, 3, mode="all")
    assert allm["partial_sums"][-1] >= con["partial_sums"][-1]
    assert allm["counts"] == [1, 8, 28]


@pytest.fixture(scope="module")
def oracle():
    return one_site_oracle()


def test_remainder_of_order_zero(oracle):
    rep = taylor_remainder(None, 0, 0.05, derivatives=oracle)
    f = oracle(0.05, 0)[0] - oracle(0.0, 0)[0]
    assert rep.direct == pytest.approx(f, rel=1e-12)


def test_remainder_of_polynomial_vanishes():
    rep = taylor_remainder(lambda x: 1 + 2 * x - x**2, 2, 0.3)
    assert abs(rep.direct) < 1e-10 and abs(rep.integral) < 1e-6


@pytest.mark.parametrize("N", [1, 2, 3])
def test_remainder_methods_agree(oracle, N):
    rep = taylor_remainder(None, N, 0.05, derivatives=oracle)
    assert rep.agreement <= 1e-5


def test_factorial_fit_recovers_synthetic_constants():
    reps = [RemainderReport(N, lam, 2 * 3**N * math.factorial(N) * lam ** (N + 1), 0.0)
            for lam in (0.02, 0.05) for N in range(5)]
    fit = factorial_bound_fit(reps)
    assert fit["A"] == pytest.approx(2, rel=1e-2)
    assert fit["B"] == pytest.approx(3, rel=1e-2)
    assert fit["violations"] == 0


def test_factorial_fit_needs_orders():
    with pytest.raises(DomainError):
        factorial_bound_fit([RemainderReport(1, 0.1, 1e-3, 0.0)])


def test_borel_of_factorials_is_geometric():
    u = np.array([0.0, 0.3, 0.5])
    rep = borel_partial_transform([math.factorial(n) for n in range(30)], u)
    assert rep["values"] == pytest.approx(list(1 / (1 - u)), rel=1e-8)
    assert borel_partial_transform([0, 0], u)["values"] == [0, 0, 0]
    with pytest.raises(DomainError):
        borel_partial_transform([1.0], u)


def test_resolvent_norms_on_positive_axis():
    rows = resolvent_norms(site_model(2, mode="slice", j_max=2), [0.05, 0.1, 0.05 + 0.05j])
    assert rows[0]["max_norm"] <= 1 + 1e-12
    assert all(np.isfinite(r["max_norm"]) for r in rows)
