"""Massive 2D propagator with an ultraviolet cutoff, its scale slices and lattice forms.

The cutoff covariance is the heat-kernel integral

    C(r) = 1/(4 pi) * int_{Lambda^-2}^inf dalpha/alpha exp(-alpha m^2 - r^2/(4 alpha))

with Lambda = M**j_max.  Slice j >= 1 covers alpha in [M^-2j, M^(-2j+2)] and
slice 0 takes the whole tail alpha >= 1, so the slices add up to C exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ConstructionError, DomainError, NumericError

DEFAULT_M = math.e * 1.01
ALPHA_TAIL = 800.0  # alpha * m^2 beyond which exp underflows


@dataclass(frozen=True)
class ContinuumCovariance:
    m: float = 1.0
    M: float = DEFAULT_M
    j_max: int = 8

    def __post_init__(self):
        if self.m <= 0 or self.M <= 1 or self.j_max < 0:
            raise DomainError("need m > 0, M > 1, j_max >= 0")

    @property
    def cutoff(self) -> float:
        return self.M ** self.j_max

    def slice_bounds(self, j: int) -> tuple[float, float]:
        """alpha range of slice j; slice 0 runs to the infrared tail."""
        if not 0 <= j <= self.j_max:
            raise DomainError(f"slice {j} outside 0..{self.j_max}")
        if j == 0:
            return 1.0, math.inf
        return self.M ** (-2 * j), self.M ** (-2 * j + 2)


def _heat_integral(lo: float, hi: float, m: float, r: float, rtol: float = 1e-12) -> float:
    """(1/4pi) int_lo^hi dalpha/alpha exp(-alpha m^2 - r^2/(4 alpha)), in t = log alpha."""
    if r == 0.0:
        upper = special.exp1(m * m * hi) if math.isfinite(hi) else 0.0
        return float((special.exp1(m * m * lo) - upper) / (4 * math.pi))
    hi_eff = min(hi, ALPHA_TAIL / (m * m))
    if hi_eff <= lo:
        return 0.0
    t0, t1 = math.log(lo), math.log(hi_eff)
    r2 = r * r

    def g(t):
        a = math.exp(t)
        return math.exp(-a * m * m - r2 / (4 * a))

    peak = math.log(r / (2 * m))
    points = [peak] if t0 < peak < t1 else None
    val, err = integrate.quad(g, t0, t1, points=points, epsabs=0.0, epsrel=rtol, limit=200)
    if not math.isfinite(val) or err > max(1e-10 * abs(val), 1e-300):
        raise NumericError(f"quadrature did not converge: r={r}, range=({lo}, {hi}), err={err}")
    return val / (4 * math.pi)


def kernel(c: ContinuumCovariance, r: float) -> float:
    if r < 0:
        raise DomainError("separation must be non-negative")
    return _heat_integral(c.cutoff ** -2, math.inf, c.m, float(r))


def slice_kernel(c: ContinuumCovariance, j: int, r: float) -> float:
    if r < 0:
        raise DomainError("separation must be non-negative")
    lo, hi = c.slice_bounds(j)
    return _heat_integral(lo, hi, c.m, float(r))


@dataclass
class TadpoleTable:
    per_slice: np.ndarray
    cumulative: np.ndarray

    def to_dict(self) -> dict:
        return {"per_slice": self.per_slice.tolist(), "cumulative": self.cumulative.tolist()}


def tadpole_table(c: ContinuumCovariance) -> TadpoleTable:
    """Diagonal slice values T_j and cumulative T up to each slice."""
    per = np.array([slice_kernel(c, j, 0.0) for j in range(c.j_max + 1)])
    return TadpoleTable(per, np.cumsum(per))


def tadpole_slope(m: float = 1.0, M: float = DEFAULT_M, j_range=range(4, 13)) -> dict:
    """Linear fit of the cumulative tadpole against j_max."""
    js = np.array(list(j_range), float)
    T = np.array([kernel(ContinuumCovariance(m, M, int(j)), 0.0) for j in js])
    slope, intercept = np.polyfit(js, T, 1)
    pred = slope * js + intercept
    r2 = 1.0 - np.sum((T - pred) ** 2) / np.sum((T - T.mean()) ** 2)
    return {"j_max": js.astype(int).tolist(), "T": T.tolist(), "slope": float(slope),
            "intercept": float(intercept), "r2": float(r2), "expected_slope": math.log(M) / (2 * math.pi)}


def fit_slice_decay(c: ContinuumCovariance, j: int, n_points: int = 12) -> dict:
    """Log-linear fit slice_kernel(j, r) ~ K exp(-rate r) over r in M^-j * [0.5, 6]."""
    scale = c.M ** (-j)
    rs = scale * np.linspace(0.5, 6.0, n_points)
    vals = np.array([slice_kernel(c, j, r) for r in rs])
    keep = vals > 1e-300
    slope, logk = np.polyfit(rs[keep], np.log(vals[keep]), 1)
    return {"j": j, "K": float(math.exp(logk)), "rate": float(-slope), "rate_over_Mj": float(-slope * scale)}


def kernel_table(c: ContinuumCovariance, rs) -> list[list[float]]:
    rows = []
    for r in rs:
        rows.append([float(r), kernel(c, r)] + [slice_kernel(c, j, r) for j in range(c.j_max + 1)])
    return rows


def kernel_table_csv(c: ContinuumCovariance, rs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "C_Lambda"] + [f"C_{j}" for j in range(c.j_max + 1)])
    for row in kernel_table(c, rs):
        w.writerow([repr(x) for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# lattice covariances on a torus


@dataclass
class LatticeModel:
    """Gaussian field on an n1 x n2 torus with spacing a.

    covariance[x, y] depends only on x - y; generator is its first row.
    """

    shape: tuple[int, int]
    a: float
    m: float
    mode: str
    M: float
    j_max: int
    covariance: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def generator(self) -> np.ndarray:
        return self.covariance[0]

    @property
    def T(self) -> float:
        return float(self.covariance[0, 0])

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "a": self.a, "m": self.m, "mode": self.mode,
                "M": self.M, "j_max": self.j_max, "generator": self.generator.tolist(), "T": self.T}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _coords(shape):
    n1, n2 = shape
    return np.array([(i, j) for i in range(n1) for j in range(n2)])


def _momentum_generator(shape, a, m, cutoff):
    n1, n2 = shape
    k1 = 2 * np.pi * np.arange(n1) / n1
    k2 = 2 * np.pi * np.arange(n2) / n2
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    p2 = (4.0 / a**2) * (np.sin(K1 / 2) ** 2 + np.sin(K2 / 2) ** 2)
    spectrum = np.where(p2 <= cutoff**2, 1.0 / (p2 + m * m), 0.0)
    # continuum normalisation: sum_x a^2 phi_x^2 pairs with a^-2 in the propagator
    gen = np.real(np.fft.ifft2(spectrum)) / a**2
    return gen


def _slice_generator(shape, a, m, M, j_max, images):
    n1, n2 = shape
    c = ContinuumCovariance(m, M, j_max)
    L1, L2 = n1 * a, n2 * a
    gen = np.zeros(shape)
    cache: dict[float, float] = {}
    for i in range(n1):
        for j in range(n2):
            total = 0.0
            for u in range(-images, images + 1):
                for v in range(-images, images + 1):
                    r2 = (i * a + u * L1) ** 2 + (j * a + v * L2) ** 2
                    key = round(r2, 12)
                    if key not in cache:
                        r = math.sqrt(r2)
                        cache[key] = kernel(c, r) if r * m < 40 else 0.0
                    total += cache[key]
            gen[i, j] = total
    return gen


def lattice_covariance(N, a: float = 1.0, m: float = 1.0, mode: str = "slice",
                       M: float = DEFAULT_M, j_max: int = 4) -> LatticeModel:
    """Circulant covariance on an N x N torus (or an (n1, n2) torus).

    mode "momentum": inverse lattice Laplacian plus m^2, modes with p <= M^j_max kept.
    mode "slice": the cutoff heat kernel summed over torus images.
    """
    shape = (int(N), int(N)) if np.isscalar(N) else tuple(int(x) for x in N)
    if min(shape) < 1 or max(shape) > 32:
        raise DomainError("torus sides must be in 1..32")
    if a <= 0 or m <= 0:
        raise DomainError("need a > 0 and m > 0")
    if mode == "momentum":
        gen = _momentum_generator(shape, a, m, M**j_max)
    elif mode == "slice":
        span = min(shape) * a
        images = max(1, int(math.ceil(40.0 / (m * span))))
        gen = _slice_generator(shape, a, m, M, j_max, images)
    else:
        raise DomainError(f"unknown cutoff mode {mode!r}")
    cov = circulant_from_generator(gen)
    if np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, abs(cov).max()):
        raise ConstructionError("covariance is not positive semidefinite")
    return LatticeModel(shape, float(a), float(m), mode, float(M), int(j_max), cov)


def circulant_from_generator(gen: np.ndarray) -> np.ndarray:
    n1, n2 = gen.shape
    xy = _coords((n1, n2))
    d1 = (xy[None, :, 0] - xy[:, None, 0]) % n1
    d2 = (xy[None, :, 1] - xy[:, None, 1]) % n2
    return gen[d1, d2].copy()


def site_model(n_sites: int, **kw) -> LatticeModel:
    """A ring of n_sites points, stored as an n_sites x 1 torus."""
    return lattice_covariance((n_sites, 1), **kw)


def matrix_model(C) -> LatticeModel:
    """Wrap an arbitrary symmetric PSD matrix for the oracles."""
    C = np.asarray(C, float)
    return LatticeModel((C.shape[0], 1), 1.0, 1.0, "matrix", DEFAULT_M, 0, C)


def square_root(matrix) -> np.ndarray:
    A = np.asarray(matrix, float)
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    if w.min() < -1e-10:
        raise DomainError(f"matrix has eigenvalue {w.min():.3g} < 0")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def lattice_slices(model: LatticeModel) -> list[np.ndarray]:
    """Per-slice lattice covariances for a slice-mode model; they add up to its covariance."""
    if model.mode != "slice":
        raise DomainError("slice decomposition needs a slice-mode model")
    c = ContinuumCovariance(model.m, model.M, model.j_max)
    n1, n2 = model.shape
    a = model.a
    span = min(model.shape) * a
    images = max(1, int(math.ceil(40.0 / (model.m * span))))
    out = []
    for j in range(model.j_max + 1):
        lo, hi = c.slice_bounds(j)
        gen = np.zeros(model.shape)
        for i in range(n1):
            for k in range(n2):
                total = 0.0
                for u in range(-images, images + 1):
                    for v in range(-images, images + 1):
                        r = math.hypot(i * a + u * n1 * a, k * a + v * n2 * a)
                        if r * model.m < 40:
                            total += _heat_integral(lo, hi, model.m, r)
                gen[i, k] = total
        out.append(circulant_from_generator(gen))
    return out
