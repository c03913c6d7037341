import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvephi4.errors import CapabilityError, ContractViolation
from lvephi4.forest import (
    PairFunction, PairPolynomial, bkar_decompose, exp_tree_sum, exponential_family, forest_sum, forests,
    ordered_simplex_integral, path_min_monomial_integral, random_pair_polynomial, tree_connected_part,
    w_quadrature,
)


def _forest_count(n):
    # number of labeled forests on n vertices
    return {1: 1, 2: 2, 3: 7, 4: 38, 5: 291}[n]


@pytest.mark.parametrize("n", range(1, 6))
def test_forest_census(n):
    assert len(forests(n)) == _forest_count(n)


def test_two_vertex_decomposition():
    # f(x) = 1 + 2x: empty forest gives f(0) = 1, the single line gives f' = 2
    poly = PairPolynomial(2, {frozenset(): 1.0, frozenset({(0, 1)}): 2.0})
    terms = bkar_decompose(poly)
    vals = sorted(t.value for t in terms)
    assert vals == pytest.approx([1.0, 2.0])
    assert forest_sum(terms) == pytest.approx(3.0)


def test_min_integral_of_three_vertex_chain():
    assert path_min_monomial_integral(3, ((0, 1), (1, 2)), {(0, 2): 1}) == Fraction(1, 3)


def test_pairs_in_different_trees_vanish():
    assert path_min_monomial_integral(4, ((0, 1),), {(0, 2): 1}) == 0


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4))
def test_simplex_integral_matches_quadrature(exps):
    exact = ordered_simplex_integral(exps)
    k = len(exps)

    def integrand(w):
        if not all(w[i] < w[i + 1] for i in range(k - 1)):
            return 0.0
        return math.prod(w[i] ** e for i, e in enumerate(exps))

    # sum over all orderings of the cube equals the symmetric integral
    sym = sum(ordered_simplex_integral([exps[p] for p in perm])
              for perm in __import__("itertools").permutations(range(k)))
    assert float(sym) == pytest.approx(math.prod(1 / (e + 1) for e in exps), rel=1e-12)
    assert exact > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_bkar_identity_on_random_polynomials(n, seed):
    poly = random_pair_polynomial(n, np.random.default_rng(seed))
    fs = forest_sum(bkar_decompose(poly))
    assert fs == pytest.approx(poly.value_at_ones(), rel=1e-9, abs=1e-12)


def test_bkar_with_numerical_derivatives():
    rng = np.random.default_rng(3)
    poly = random_pair_polynomial(3, rng)
    f = PairFunction(3, poly.eval)
    assert forest_sum(bkar_decompose(f)) == pytest.approx(poly.value_at_ones(), rel=1e-6, abs=1e-8)


def test_finite_difference_order_cap():
    f = PairFunction(4, lambda X: float(np.sum(X)), max_order=1)
    with pytest.raises(CapabilityError):
        f.partial(((0, 1), (1, 2)), np.ones((4, 4)))


def test_quadrature_of_constant():
    assert w_quadrature(3, lambda w: 1.0) == pytest.approx(1.0)
    assert w_quadrature(2, lambda w: min(w), split_simplices=True) == pytest.approx(1 / 3)


def test_tree_connected_part_reexponentiates():
    weights = [1.1, 0.9, 1.2]
    U = np.array([[0, 0.3, -0.2], [0.3, 0, 0.5], [-0.2, 0.5, 0]])
    family = exponential_family(weights, U)
    terms = tree_connected_part(family, 3)
    full = family((0, 1, 2))
    assert exp_tree_sum(terms, 3) == pytest.approx(full.eval(np.ones((3, 3))), rel=1e-10)


def test_non_factorizing_family_is_rejected():
    def family(block):
        block = tuple(block)
        return PairFunction(len(block), lambda X: float(len(block) ** 2 + np.sum(X)))

    with pytest.raises(ContractViolation):
        tree_connected_part(family, 3)
