"""Taylor forest interpolation on functions of pair couplings.

A pair function f(X) depends on a symmetric coupling matrix with unit
diagonal.  The forest formula writes f at all couplings one as a sum over
forests F of integrals over weakening parameters w of the F-derivative of f,
evaluated at the matrix of path minima of w inside each tree of F and zero
between trees.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import CapabilityError, ContractViolation, EnumerationLimitError
from .graphs import LabeledTree, path_infimum_matrix

FOREST_CAP = 6
QUAD_DIM_CAP = 5


def all_pairs(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def forests(n: int, cap: int = FOREST_CAP) -> list[tuple[tuple[int, int], ...]]:
    """All acyclic edge sets of the complete graph on n vertices."""
    if n > cap:
        raise EnumerationLimitError(f"forests on {n} vertices exceed cap {cap}")
    pairs = all_pairs(n)
    out = []
    for mask in range(1 << len(pairs)):
        edges = tuple(p for i, p in enumerate(pairs) if mask >> i & 1)
        if _acyclic(n, edges):
            out.append(edges)
    out.sort(key=lambda f: (len(f), f))
    return out


def _acyclic(n, edges) -> bool:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def components(n: int, edges) -> list[tuple[int, ...]]:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for a, b in edges:
        parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(tuple(g) for g in groups.values())


def forest_coupling_matrix(n: int, edges, w) -> np.ndarray:
    """Path minima of w inside each tree of the forest, zero across trees."""
    X = np.zeros((n, n))
    np.fill_diagonal(X, 1.0)
    for comp in components(n, edges):
        if len(comp) == 1:
            continue
        index = {v: i for i, v in enumerate(comp)}
        sub = [(index[a], index[b]) for a, b in edges if a in index]
        tree = LabeledTree(len(comp), tuple(sub))
        weights = {(index[a], index[b]): w[k] for k, (a, b) in enumerate(edges) if a in index}
        P = path_infimum_matrix(tree, weights)
        for i, a in enumerate(comp):
            for j, b in enumerate(comp):
                X[a, b] = P[i, j]
    return X


# ---------------------------------------------------------------------------
# exact integrals of path-minimum monomials


def ordered_simplex_integral(exponents) -> Fraction:
    """Integral of prod w_i^e_i over 0 < w_1 < ... < w_k < 1."""
    total = Fraction(1)
    acc = 0
    for m, e in enumerate(exponents, start=1):
        acc += e
        total /= acc + m
    return total


def path_min_monomial_integral(n: int, edges, pair_powers: dict) -> Fraction:
    """Exact integral over [0,1]^|F| of prod over pairs of (path-min w)^power.

    pair_powers maps vertex pairs to exponents.  Pairs in different trees of
    the forest make the integrand vanish.  The cube is cut into |F|! ordered
    simplices; in each one every path minimum is a single variable.
    """
    edges = tuple(edges)
    k = len(edges)
    comp_of = {}
    for ci, comp in enumerate(components(n, edges)):
        for v in comp:
            comp_of[v] = ci
    paths = {}
    for (a, b), p in pair_powers.items():
        if p == 0 or a == b:
            continue
        if comp_of[a] != comp_of[b]:
            return Fraction(0)
        paths[(a, b)] = (_forest_path(n, edges, a, b), p)
    if k == 0:
        return Fraction(1)
    total = Fraction(0)
    for order in itertools.permutations(range(k)):
        rank = {e: r for r, e in enumerate(order)}
        expo = [0] * k
        for path, p in paths.values():
            low = min(path, key=lambda e: rank[e])
            expo[rank[low]] += p
        total += ordered_simplex_integral(expo)
    return total


def _forest_path(n, edges, a, b) -> list[int]:
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(n)}
    for i, (u, v) in enumerate(edges):
        adj[u].append((v, i))
        adj[v].append((u, i))
    prev = {a: None}
    stack = [a]
    while stack:
        x = stack.pop()
        for y, i in adj[x]:
            if y not in prev:
                prev[y] = (x, i)
                stack.append(y)
    out = []
    x = b
    while prev[x] is not None:
        x, i = prev[x]
        out.append(i)
    return out


# ---------------------------------------------------------------------------
# quadrature on the w cube


def w_quadrature(dim: int, integrand: Callable, order: int = 16, split_simplices: bool = False) -> float:
    """Tensor Gauss-Legendre integral over [0,1]^dim.

    With split_simplices the cube is cut into ordered simplices so that
    integrands built from minima of the w's are smooth on each piece.
    """
    if dim > QUAD_DIM_CAP:
        raise EnumerationLimitError(f"dimension {dim} exceeds cap {QUAD_DIM_CAP}")
    if dim == 0:
        return float(integrand(np.zeros(0)))
    x, wt = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    wt = 0.5 * wt
    total = 0.0
    if not split_simplices:
        for idx in itertools.product(range(order), repeat=dim):
            total += np.prod(wt[list(idx)]) * integrand(x[list(idx)])
        return float(total)
    for perm in itertools.permutations(range(dim)):
        for idx in itertools.product(range(order), repeat=dim):
            u = x[list(idx)]
            # w_perm[-1] = u[-1], w_perm[i] = u[i] * w_perm[i+1]
            w = np.empty(dim)
            jac = 1.0
            cur = 1.0
            for i in range(dim - 1, -1, -1):
                cur = u[i] * cur
                w[perm[i]] = cur
                if i > 0:
                    jac *= cur
            total += np.prod(wt[list(idx)]) * jac * integrand(w)
    return float(total)


# ---------------------------------------------------------------------------
# pair functions


@dataclass
class PairFunction:
    """A function of the pair couplings of n vertices.

    derivative(edges, X) returns the mixed partial derivative along the given
    pairs.  When it is None, central differences with Richardson
    extrapolation are used up to max_order.
    """

    n: int
    eval: Callable[[np.ndarray], float]
    derivative: Callable | None = None
    max_order: int | None = None

    def partial(self, edges, X: np.ndarray) -> float:
        edges = tuple(edges)
        if not edges:
            return float(self.eval(X))
        if self.derivative is not None:
            return float(self.derivative(edges, X))
        limit = self.max_order if self.max_order is not None else 3
        if len(edges) > limit:
            raise CapabilityError(f"derivative of order {len(edges)} unavailable")
        return _richardson_partial(self.eval, edges, X)


def _central_partial(f, edges, X, h):
    total = 0.0
    for signs in itertools.product((1, -1), repeat=len(edges)):
        Y = X.copy()
        for (a, b), s in zip(edges, signs):
            Y[a, b] += s * h
            Y[b, a] += s * h
        total += np.prod(signs) * f(Y)
    return total / (2 * h) ** len(edges)


def _richardson_partial(f, edges, X, h=1e-4):
    d1 = _central_partial(f, edges, X, h)
    d2 = _central_partial(f, edges, X, h / 2)
    return (4 * d2 - d1) / 3


@dataclass
class PairPolynomial:
    """Multilinear polynomial in the pair variables: {frozenset of pairs: coefficient}."""

    n: int
    monomials: dict

    def eval(self, X: np.ndarray) -> float:
        total = 0.0
        for mono, c in self.monomials.items():
            total += c * math.prod(X[a, b] for a, b in mono)
        return total

    def derivative(self, edges, X: np.ndarray) -> float:
        need = set(edges)
        if len(need) != len(edges):
            return 0.0  # multilinear: repeated derivatives vanish
        total = 0.0
        for mono, c in self.monomials.items():
            if need <= mono:
                total += c * math.prod(X[a, b] for a, b in mono - need)
        return total

    def as_pair_function(self) -> PairFunction:
        return PairFunction(self.n, self.eval, self.derivative)

    def value_at_ones(self) -> float:
        return float(sum(self.monomials.values()))


def random_pair_polynomial(n: int, rng: np.random.Generator, n_terms: int = 8) -> PairPolynomial:
    pairs = all_pairs(n)
    monos: dict = {}
    for _ in range(n_terms):
        size = int(rng.integers(0, len(pairs) + 1))
        chosen = rng.choice(len(pairs), size=size, replace=False) if size else []
        key = frozenset(pairs[i] for i in chosen)
        monos[key] = monos.get(key, 0.0) + float(rng.normal())
    return PairPolynomial(n, monos)


# ---------------------------------------------------------------------------
# forest decomposition


@dataclass
class ForestTerm:
    forest: tuple[tuple[int, int], ...]
    integrand: Callable = field(repr=False)
    value: float = 0.0
    monomials: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "forest": [list(e) for e in self.forest],
            "w_monomials": [{"exponents": list(e), "weight": str(wt), "coefficient": c}
                            for e, wt, c in self.monomials],
            "value": self.value,
        }


def _polynomial_forest_value(poly: PairPolynomial, forest) -> tuple[float, list]:
    """Exact w-integral of the F-derivative of a multilinear polynomial."""
    need = set(forest)
    total = 0.0
    parts = []
    for mono, c in poly.monomials.items():
        if not need <= mono:
            continue
        powers = {p: 1 for p in mono - need}
        wt = path_min_monomial_integral(poly.n, forest, powers)
        if wt:
            parts.append((tuple(sorted(mono - need)), wt, c))
            total += c * float(wt)
    return total, parts


def bkar_decompose(f, order: int = 16) -> list[ForestTerm]:
    """One term per forest; the values add up to f at all couplings one."""
    poly = f if isinstance(f, PairPolynomial) else None
    func = poly.as_pair_function() if poly else f
    n = func.n
    terms = []
    for forest in forests(n):

        def integrand(w, forest=forest):
            X = forest_coupling_matrix(n, forest, w)
            return func.partial(forest, X)

        if poly is not None:
            value, parts = _polynomial_forest_value(poly, forest)
        else:
            value, parts = w_quadrature(len(forest), integrand, order, split_simplices=True), []
        terms.append(ForestTerm(forest, integrand, value, parts))
    return terms


def forest_sum(terms) -> float:
    return float(math.fsum(t.value for t in terms))


# ---------------------------------------------------------------------------
# connected (tree) parts of a multiplicative family


@dataclass
class TreeTerm:
    vertices: tuple[int, ...]
    tree: tuple[tuple[int, int], ...]
    value: float


def check_factorizes(family: Callable, n: int, rng: np.random.Generator, samples: int = 20,
                     rtol: float = 1e-9) -> None:
    """Sampled product test: f_S at forest couplings equals the product over blocks."""
    all_forests = forests(n)
    full = family(tuple(range(n)))
    for _ in range(samples):
        forest = all_forests[int(rng.integers(len(all_forests)))]
        w = rng.random(len(forest))
        X = forest_coupling_matrix(n, forest, w)
        lhs = full.eval(X)
        rhs = 1.0
        for comp in components(n, forest):
            rhs *= family(comp).eval(X[np.ix_(comp, comp)])
        if not np.isclose(lhs, rhs, rtol=rtol, atol=1e-12):
            raise ContractViolation(f"family does not factorize on forest {forest}")


def tree_connected_part(family: Callable, n: int, order: int = 16, seed: int = 0) -> list[TreeTerm]:
    """Tree terms of a factorizing family; family(block) returns a PairFunction.

    Only spanning trees of each vertex block contribute; the exponential of
    their sum (in the multilinear sense) is the full forest sum.
    """
    check_factorizes(family, n, np.random.default_rng(seed))
    out = []
    for size in range(1, n + 1):
        for block in itertools.combinations(range(n), size):
            f = family(block)
            for forest in forests(size):
                if len(forest) != size - 1:
                    continue

                def integrand(w, forest=forest):
                    return f.partial(forest, forest_coupling_matrix(size, forest, w))

                value = w_quadrature(len(forest), integrand, order, split_simplices=True)
                tree = tuple((block[a], block[b]) for a, b in forest)
                out.append(TreeTerm(block, tree, value))
    return out


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def exp_tree_sum(terms: list[TreeTerm], n: int) -> float:
    """Multilinear exponential: sum over set partitions of products of block tree sums."""
    block_sum: dict[tuple[int, ...], float] = {}
    for t in terms:
        block_sum[t.vertices] = block_sum.get(t.vertices, 0.0) + t.value
    total = 0.0
    for part in set_partitions(range(n)):
        total += math.prod(block_sum.get(tuple(sorted(b)), 0.0) for b in part)
    return total


def exponential_family(weights, couplings) -> Callable:
    """Toy multiplicative family f_S(X) = prod_i a_i * exp(sum_{ij in S} u_ij X_ij)."""
    weights = np.asarray(weights, float)
    U = np.asarray(couplings, float)

    def family(block):
        block = tuple(block)
        a = float(np.prod(weights[list(block)]))
        Ub = U[np.ix_(block, block)]
        iu = np.triu_indices(len(block), 1)

        def ev(X):
            return a * math.exp(float(np.sum(Ub[iu] * X[iu])))

        def der(edges, X):
            return ev(X) * math.prod(Ub[e] for e in edges)

        return PairFunction(len(block), ev, der)

    return family
