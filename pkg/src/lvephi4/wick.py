"""Brute-force Gaussian moments and the perturbative series of log Z.

The model is Z(lam) = < exp(-(lam/2) a^2 sum_x :phi_x^4:) > for a centred
Gaussian field with covariance C on a finite lattice, Wick ordered with
respect to a tadpole value T (default: the diagonal of C).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .covariance import LatticeModel, square_root
from .errors import DomainError, EnumerationLimitError, NumericError

MOMENT_DEGREE_CAP = 16


def pair_partitions(items):
    """All perfect matchings, pairing the first remaining item each time."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for tail in pair_partitions(rest[:i] + rest[i + 1:]):
            yield [(first, other)] + tail


def gaussian_moment(C, indices, cap: int = MOMENT_DEGREE_CAP) -> float:
    """< phi_i1 ... phi_ik > as a sum over pair partitions (odd degree gives 0)."""
    C = np.asarray(C)
    idx = tuple(int(i) for i in indices)
    k = len(idx)
    if k > cap:
        raise EnumerationLimitError(f"degree {k} exceeds cap {cap}")
    if k % 2:
        return 0.0
    if k == 0:
        return 1.0

    @lru_cache(maxsize=None)
    def haf(mask: int) -> float:
        if mask == 0:
            return 1.0
        first = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << first)
        total = 0.0
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            total += C[idx[first], idx[j]] * haf(rest & ~(1 << j))
            m &= m - 1
        return total

    return float(haf((1 << k) - 1))


def wick_order_quartic(T: float) -> tuple[float, float, float]:
    """Coefficients of phi^4, phi^2 and 1 in the Wick-ordered quartic."""
    if T < 0:
        raise DomainError("tadpole must be non-negative")
    return (1.0, -6.0 * T, 3.0 * T * T)


def wick_quartic_moment(C, sites, T: float) -> float:
    """< prod_i :phi_{x_i}^4: > by expanding every factor and using gaussian_moment."""
    coeffs = wick_order_quartic(T)
    degrees = (4, 2, 0)
    total = 0.0
    for choice in itertools.product(range(3), repeat=len(sites)):
        c = math.prod(coeffs[i] for i in choice)
        if c == 0:
            continue
        idx = [x for x, i in zip(sites, choice) for _ in range(degrees[i])]
        total += c * gaussian_moment(C, idx)
    return total


# ---------------------------------------------------------------------------
# contraction patterns of n quartic vertices


@dataclass(frozen=True)
class ContractionPattern:
    """Self-contractions per vertex and line multiplicities per vertex pair."""

    loops: tuple[int, ...]
    lines: tuple[tuple[tuple[int, int], int], ...]
    count: int  # number of leg pairings with this pattern


def contraction_patterns(n: int, degree: int = 4) -> list[ContractionPattern]:
    """All ways to contract n vertices of the given degree, with multiplicities."""
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    max_m = degree

    def rec(i, mults):
        if i == len(pairs):
            used = [0] * n
            for (a, b), m in zip(pairs, mults):
                used[a] += m
                used[b] += m
            loops = []
            for u in used:
                left = degree - u
                if left < 0 or left % 2:
                    return
                loops.append(left // 2)
            num = math.factorial(degree) ** n
            den = 1
            for l in loops:
                den *= math.factorial(l) * 2**l
            for m in mults:
                den *= math.factorial(m)
            lines = tuple((p, m) for p, m in zip(pairs, mults) if m)
            out.append(ContractionPattern(tuple(loops), lines, num // den))
            return
        for m in range(max_m + 1):
            rec(i + 1, mults + [m])

    rec(0, [])
    return out


def pattern_of_pairing(pairing, legs_per_vertex: int = 4) -> tuple:
    """Pattern key (loops, lines) for a pairing of legs numbered vertex-major."""
    n_legs = 2 * len(pairing)
    n = n_legs // legs_per_vertex
    loops = [0] * n
    lines: dict = {}
    for a, b in pairing:
        va, vb = a // legs_per_vertex, b // legs_per_vertex
        if va == vb:
            loops[va] += 1
        else:
            key = (min(va, vb), max(va, vb))
            lines[key] = lines.get(key, 0) + 1
    return tuple(loops), tuple(sorted(lines.items()))


def quartic_moment_sum(C, T: float, n: int) -> float:
    """sum over x_1..x_n of < prod :phi_{x_i}^4:_T >.

    Each pairing of the 4n legs weighs C(x_i, x_j) per line between vertices
    and C(x_i, x_i) - T per self-contraction.
    """
    C = np.asarray(C, float)
    if n == 0:
        return 1.0
    diag = np.diag(C) - T
    letters = "abcdefgh"[:n]
    total = 0.0
    for pat in contraction_patterns(n):
        operands = []
        subs = []
        for i, l in enumerate(pat.loops):
            if l:
                operands.append(diag**l)
                subs.append(letters[i])
        for (i, j), m in pat.lines:
            operands.append(C**m)
            subs.append(letters[i] + letters[j])
        # indices that appear nowhere are free sums over the sites
        present = set("".join(subs))
        free = sum(1 for ch in letters if ch not in present)
        if operands:
            val = np.einsum(",".join(subs) + "->", *operands, optimize=True)
        else:
            val = 1.0
        total += pat.count * float(val) * C.shape[0] ** free
    return total


# ---------------------------------------------------------------------------
# series of log Z


@dataclass
class SeriesCoefficients:
    coefficients: list
    model: dict
    method: str
    abs_err: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "method": self.method,
            "coefficients": [{"n": n, "value": float(v), "abs_err": float(e)}
                             for n, (v, e) in enumerate(zip(self.coefficients, self.abs_err))],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __call__(self, lam):
        return sum(c * lam**n for n, c in enumerate(self.coefficients))


def series_log(z) -> list:
    """Coefficients of log(1 + sum_{n>=1} z_n x^n); z[0] is ignored."""
    N = len(z) - 1
    a = [0.0] * (N + 1)
    for n in range(1, N + 1):
        a[n] = z[n] - sum((k / n) * a[k] * z[n - k] for k in range(1, n))
    return a


def series_exp(a) -> list:
    """Coefficients of exp(sum_{n>=1} a_n x^n)."""
    N = len(a) - 1
    z = [0.0] * (N + 1)
    z[0] = 1.0
    for n in range(1, N + 1):
        z[n] = sum(k * a[k] * z[n - k] for k in range(1, n + 1)) / n
    return z


def _check_cost(n_sites: int, N: int) -> None:
    if N > 4 or (N > 3 and n_sites > 4) or (N == 3 and n_sites > 16):
        raise EnumerationLimitError(f"order {N} on {n_sites} sites exceeds the oracle cap")


def _model_dict(model: LatticeModel, T: float) -> dict:
    return {"shape": list(model.shape), "a": model.a, "m": model.m, "mode": model.mode,
            "M": model.M, "j_max": model.j_max, "T": T}


def vacuum_moments(model: LatticeModel, N: int, T: float | None = None) -> list:
    """Coefficients z_n of Z(lam) = sum z_n lam^n."""
    C = model.covariance
    T = model.T if T is None else float(T)
    _check_cost(C.shape[0], N)
    vol = model.a**2
    z = [1.0]
    for n in range(1, N + 1):
        pref = float(Fraction(-1, 2) ** n / math.factorial(n)) * vol**n
        z.append(pref * quartic_moment_sum(C, T, n))
    return z


def logZ_series(model: LatticeModel, N: int, T: float | None = None) -> SeriesCoefficients:
    T = model.T if T is None else float(T)
    z = vacuum_moments(model, N, T)
    a = series_log(z)
    a[0] = 0.0
    scale = [abs(v) for v in z]
    err = [0.0] + [1e-15 * max(1.0, sum(scale[: n + 1])) * (n + 1) for n in range(1, N + 1)]
    return SeriesCoefficients([float(v) for v in a], _model_dict(model, T), "oracle", err)


# ---------------------------------------------------------------------------
# direct quadrature of Z


def _quartic_potential(phi: np.ndarray, T: float, vol: float) -> np.ndarray:
    p2 = phi * phi
    return vol * np.sum(p2 * p2 - 6 * T * p2 + 3 * T * T, axis=-1)


def _hermite_grid(d: int, degree: int):
    x, w = np.polynomial.hermite_e.hermegauss(degree)
    w = w / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wts = wts * g.ravel()
    return pts, wts


def _z_moments(model: LatticeModel, lam: complex, k_max: int, degree: int, T: float) -> np.ndarray:
    C = model.covariance
    d = C.shape[0]
    L = square_root(C)
    pts, wts = _hermite_grid(d, degree)
    phi = pts @ L.T
    V = _quartic_potential(phi, T, model.a**2)
    boltz = np.exp(-0.5 * lam * V)
    out = np.empty(k_max + 1, dtype=complex)
    power = np.ones_like(V)
    for k in range(k_max + 1):
        out[k] = np.sum(wts * power * boltz)
        power = power * (-0.5 * V)
    return out


def direct_logZ(model: LatticeModel, lam: complex, degree: int = 40, rtol: float = 1e-8,
                T: float | None = None, max_degree: int | None = None) -> complex:
    """log Z by tensor Gauss-Hermite quadrature, refined until two degrees agree."""
    return direct_logZ_derivatives(model, lam, 0, degree, rtol, T, max_degree)[0]


def direct_logZ_derivatives(model: LatticeModel, lam: complex, k_max: int, degree: int = 40,
                            rtol: float = 1e-8, T: float | None = None,
                            max_degree: int | None = None) -> np.ndarray:
    """[f, f', ..., f^(k_max)] of f = log Z, differentiating under the integral."""
    d = model.covariance.shape[0]
    if d > 4:
        raise DomainError("direct quadrature supports at most 4 sites")
    if abs(lam) > 1 or np.real(lam) < 0:
        raise DomainError("need |lam| <= 1 and Re lam >= 0")
    T = model.T if T is None else float(T)
    if max_degree is None:
        max_degree = {1: 400, 2: 160, 3: 80, 4: 56}[d]
    deg = degree if d <= 2 else min(degree, max_degree)
    prev = None
    while True:
        mom = _z_moments(model, lam, k_max, deg, T)
        logs = _log_derivatives(mom)
        if prev is not None and np.all(np.abs(logs - prev) <= rtol * np.maximum(np.abs(logs), 1e-300) + 1e-14):
            return logs
        if deg >= max_degree:
            if prev is not None and np.all(np.abs(logs - prev) <= 1e3 * rtol * np.maximum(np.abs(logs), 1e-12)):
                return logs
            raise NumericError(f"quadrature did not converge at degree {deg}")
        prev = logs
        deg = min(max_degree, deg + max(8, deg // 2))


def _log_derivatives(mom: np.ndarray) -> np.ndarray:
    """Derivatives of log Z from derivatives of Z (moment to cumulant recursion)."""
    z0 = mom[0]
    m = mom / z0
    k = np.empty_like(mom)
    k[0] = np.log(z0)
    for n in range(1, len(mom)):
        k[n] = m[n] - sum(math.comb(n - 1, j - 1) * k[j] * m[n - j] for j in range(1, n))
    return k
