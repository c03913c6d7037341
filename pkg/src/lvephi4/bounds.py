"""Numerical diagnostics for the convergence and summability estimates.

Covers the tree-series majorant of the pressure, the trade-off between the
counterterm exponential and the convergent line factors, cluster sums with a
tree-length decay, Taylor remainders of log Z and their factorial bounds, and
truncated Borel transforms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from .covariance import DEFAULT_M, LatticeModel, site_model, square_root
from .errors import DomainError, EnumerationLimitError
from .wick import direct_logZ_derivatives

CLUSTER_SIZE_CAP = 14
CLUSTER_COUNT_CAP = 2_000_000


# ---------------------------------------------------------------------------
# pressure majorant


def tree_series_term(n: int, x: float) -> float:
    """n^(n-2)/n! 2^(n-1) x^n, computed in log space."""
    if n == 1:
        return x
    return math.exp((n - 2) * math.log(n) - math.lgamma(n + 1) + (n - 1) * math.log(2) + n * math.log(x))


def pressure_majorant(lam: float, K: float = 2 * math.e, j_max: int = 8, M: float = DEFAULT_M,
                      n_terms: int | None = None) -> dict:
    """Tree-series terms and their geometric majorant sum_n (lam K log Lambda)^n."""
    if lam <= 0 or K <= 0:
        raise DomainError("need lam > 0 and K > 0")
    log_cut = j_max * math.log(M)
    x = lam * K * log_cut
    converges = x < 1
    if n_terms is None:
        n_terms = int(min(400, math.ceil(math.log(1e-18) / math.log(x)))) if 0 < x < 1 else 50
    ns = list(range(1, n_terms + 1))
    geo = [x**n for n in ns]
    tree = [tree_series_term(n, lam * log_cut) for n in ns]
    out = {
        "lambda": lam, "K": K, "j_max": j_max, "M": M, "x": x, "converges": converges,
        "tree_terms": tree, "geometric_terms": geo, "geometric_partial": math.fsum(geo),
        "tree_dominated": all(t <= g * (1 + 1e-12) for t, g in zip(tree, geo)),
    }
    out["closed_form"] = x / (1 - x) if converges else math.inf
    return out


def stirling_ratio_check(n_max: int = 50) -> dict:
    """n^(n-2)/n! 2^(n-1) <= (2e)^n for n = 1..n_max."""
    ratios = [tree_series_term(n, 1.0) / (2 * math.e) ** n for n in range(1, n_max + 1)]
    return {"n_max": n_max, "max_ratio": max(ratios), "holds": max(ratios) <= 1.0}


# ---------------------------------------------------------------------------
# counterterm exponential against convergent factors


def nelson_log(a: float, lam: float, j: int, s: float) -> float:
    return -a * j * j + math.lgamma(j + 1) + 2 * lam * (s * j) ** 2


def nelson_check(a: float, lam: float, j: int, s: float) -> tuple[float, bool]:
    """exp(-a j^2) j! exp(2 lam (s j)^2) and whether it is below 1."""
    if a <= 0 or lam <= 0 or s <= 0 or j < 0:
        raise DomainError("need positive a, lam, s and j >= 0")
    v = nelson_log(a, lam, j, s)
    return (math.exp(v) if v < 700 else math.inf), v < 0


def nelson_scan(a: float, lam: float, s: float, js) -> dict:
    rows = [{"j": int(j), "log_value": nelson_log(a, lam, int(j), s), "below_one": nelson_log(a, lam, int(j), s) < 0}
            for j in js]
    crossover = None
    for i, r in enumerate(rows):
        if all(q["below_one"] for q in rows[i:]):
            crossover = r["j"]
            break
    return {"a": a, "lambda": lam, "s": s, "critical_a": 2 * lam * s * s, "rows": rows, "crossover": crossover}


# ---------------------------------------------------------------------------
# clusters of unit squares


@dataclass(frozen=True)
class ClusterSet:
    squares: frozenset

    def __post_init__(self):
        if (0, 0) not in self.squares:
            raise DomainError("a cluster must contain the origin square")


def cluster_tree_length(g) -> float:
    """Euclidean minimum spanning tree length over square centres."""
    squares = sorted(g.squares if isinstance(g, ClusterSet) else g)
    if len(squares) > CLUSTER_SIZE_CAP:
        raise EnumerationLimitError(f"cluster of {len(squares)} squares exceeds {CLUSTER_SIZE_CAP}")
    if len(squares) <= 1:
        return 0.0
    pts = np.array(squares, float)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return float(minimum_spanning_tree(dist).sum())


def _neighbours(sq):
    x, y = sq
    return ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))


def connected_clusters(R: int, k: int) -> dict:
    """Edge-connected sets of squares containing the origin, |x|,|y| <= R, by size."""
    by_size = {1: {frozenset([(0, 0)])}}
    total = 1
    for size in range(2, k + 1):
        nxt = set()
        for s in by_size[size - 1]:
            for sq in s:
                for nb in _neighbours(sq):
                    if nb in s or max(abs(nb[0]), abs(nb[1])) > R:
                        continue
                    nxt.add(s | {nb})
        total += len(nxt)
        if total > CLUSTER_COUNT_CAP:
            raise EnumerationLimitError("cluster enumeration cap exceeded")
        by_size[size] = nxt
    return by_size


def all_clusters(R: int, k: int) -> dict:
    """Every set of squares containing the origin within radius R, by size."""
    import itertools

    grid = [(x, y) for x in range(-R, R + 1) for y in range(-R, R + 1) if (x, y) != (0, 0)]
    count = sum(math.comb(len(grid), s - 1) for s in range(1, k + 1))
    if count > CLUSTER_COUNT_CAP:
        raise EnumerationLimitError(f"{count} clusters exceed the cap")
    return {s: {frozenset(((0, 0),) + c) for c in itertools.combinations(grid, s - 1)}
            for s in range(1, k + 1)}


def cluster_sum(c: float, R: int, k: int, mode: str = "connected") -> dict:
    """Partial sums over |Gamma| <= size of exp(-c tau(Gamma))."""
    if c <= 0:
        raise DomainError("decay rate must be positive")
    sets = connected_clusters(R, k) if mode == "connected" else all_clusters(R, k)
    increments = []
    counts = []
    for size in range(1, k + 1):
        vals = [math.exp(-c * cluster_tree_length(s)) for s in sets.get(size, ())]
        increments.append(math.fsum(vals))
        counts.append(len(vals))
    partial = list(np.cumsum(increments))
    ratios = [increments[i + 1] / increments[i] if increments[i] else 0.0 for i in range(len(increments) - 1)]
    last_change = increments[-1] / partial[-1] if k > 1 else 0.0
    return {"c": c, "R": R, "k": k, "mode": mode, "counts": counts, "increments": increments,
            "partial_sums": [float(p) for p in partial], "ratios": ratios, "last_relative_change": last_change}


# ---------------------------------------------------------------------------
# Taylor remainders and factorial bounds


def one_site_oracle(model: LatticeModel | None = None, rtol: float = 1e-11):
    """Derivatives [f, f', ...] of log Z on a one-site model, by quadrature."""
    model = model or site_model(1, mode="slice", j_max=4)

    def derivatives(lam: float, k: int) -> np.ndarray:
        return np.real(direct_logZ_derivatives(model, lam, k, degree=60, rtol=rtol))

    return derivatives


def _finite_difference(f, x: float, order: int, h: float) -> float:
    """Central difference of the given order with step h."""
    coeffs = [(-1) ** i * math.comb(order, i) for i in range(order + 1)]
    return sum(c * f(x + (order / 2 - i) * h) for i, c in enumerate(coeffs)) / h**order


@dataclass
class RemainderReport:
    N: int
    lam: float
    direct: float
    integral: float
    warnings: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.direct

    @property
    def agreement(self) -> float:
        return abs(self.direct - self.integral)

    def to_dict(self) -> dict:
        return {"N": self.N, "lambda": self.lam, "direct": self.direct, "integral": self.integral,
                "agreement": self.agreement, "warnings": self.warnings}


def taylor_remainder(f, N: int, lam: float, derivatives=None, nodes: int = 24) -> RemainderReport:
    """R^N f(lam) two ways: f(lam) minus its Taylor polynomial at 0, and
    lam^(N+1) int_0^1 (1-t)^N / N! f^(N+1)(t lam) dt by Gauss-Legendre.

    derivatives(x, k) -> [f(x), ..., f^(k)(x)] is used when given; otherwise
    derivatives come from central finite differences with h = 1e-3 lam and the
    report carries a warning.
    """
    if N < 0:
        raise DomainError("order must be non-negative")
    notes = []
    if derivatives is not None:
        at0 = derivatives(0.0, N)
        fl = float(derivatives(lam, 0)[0])

        def dN1(x):
            return float(derivatives(x, N + 1)[N + 1])
    else:
        h = 1e-3 * lam if lam else 1e-3
        notes.append(f"finite differences with h = {h:.3g}")
        at0 = [f(0.0)] + [_finite_difference(f, 0.0, n, h) for n in range(1, N + 1)]
        fl = f(lam)

        def dN1(x):
            return _finite_difference(f, x, N + 1, h)
    taylor = math.fsum(at0[n] * lam**n / math.factorial(n) for n in range(N + 1))
    direct = fl - taylor
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    vals = [(1 - ti) ** N / math.factorial(N) * dN1(ti * lam) for ti in t]
    integral = lam ** (N + 1) * math.fsum(wi * v for wi, v in zip(w, vals))
    rep = RemainderReport(N, lam, float(direct), float(integral), notes)
    if rep.agreement > 1e-5:
        rep.warnings.append("methods disagree beyond 1e-5; tolerance widened")
        warnings.warn(f"remainder methods disagree by {rep.agreement:.3g}")
    return rep


def factorial_bound_fit(reports) -> dict:
    """Fit log|R^N| - log(N! |lam|^(N+1)) = log A + N log B, then raise log A
    until no point lies above the line."""
    pts = [(r.N, r.lam, abs(r.value)) for r in reports] if not isinstance(reports[0], tuple) else list(reports)
    orders = sorted({p[0] for p in pts})
    if len(orders) < 3:
        raise DomainError("need at least three orders")
    N = np.array([p[0] for p in pts], float)
    y = np.array([math.log(p[2]) - math.lgamma(p[0] + 1) - (p[0] + 1) * math.log(abs(p[1])) for p in pts])
    slope, intercept = np.polyfit(N, y, 1)
    resid = y - (intercept + slope * N)
    shift = max(0.0, float(resid.max()))
    logA = intercept + shift
    violations = int(np.sum(y > logA + slope * N + 1e-9))
    return {"A": float(math.exp(logA)), "B": float(math.exp(slope)), "fit_A": float(math.exp(intercept)),
            "residuals": resid.tolist(), "shift": shift, "violations": violations,
            "finite": bool(np.isfinite(logA) and np.isfinite(slope))}


def borel_partial_transform(coeffs, u) -> dict:
    """sum_n a_n u^n / n! on a grid, with the last retained term as error estimate."""
    a = [float(c) for c in coeffs]
    if len(a) < 2:
        raise DomainError("need at least two coefficients")
    u = np.atleast_1d(np.asarray(u, float))
    terms = np.array([a[n] * u**n / math.factorial(n) for n in range(len(a))])
    return {"u": u.tolist(), "values": terms.sum(axis=0).tolist(),
            "truncation_estimate": np.abs(terms[-1]).tolist()}


# ---------------------------------------------------------------------------
# resolvent norms


def resolvent_norms(model: LatticeModel, lams, samples: int = 200, seed: int = 0) -> list[dict]:
    """Largest operator norm of (1 + 2 i sqrt(lam) C^1/2 sigma C^1/2)^-1 over sampled sigma.

    lams may be complex; the principal square root is used.
    """
    rng = np.random.default_rng(seed)
    S = square_root(model.covariance)
    n = S.shape[0]
    sig = rng.standard_normal((samples, n))
    out = []
    for lam in lams:
        k = 2j * np.sqrt(complex(lam))
        A = np.eye(n)[None] + k * np.einsum("ij,sj,jk->sik", S, sig, S)
        norms = np.linalg.norm(np.linalg.inv(A), ord=2, axis=(1, 2))
        out.append({"lambda": [float(np.real(lam)), float(np.imag(lam))],
                    "arg_sqrt": float(np.angle(np.sqrt(complex(lam)))), "max_norm": float(norms.max())})
    return out
