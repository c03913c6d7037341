"""Scale-by-scale cleaning of resolvents along a dual cycle.

Words are products of kernels with named site indices:

    R j (a,b)   resolvent R^j = (1 + kappa sigma Cb^j)^-1,  R^-1 = 1
    D j (a,b)   single-slice propagator D^j
    Cb j (a,b)  propagator summed over slices 0..j
    s (z)       explicit intermediate field sigma(z)
    d (a,b)     Kronecker delta
    T j (z)     inner tadpole D^j(z,z)
    X j (z)     counterterm dot standing in for a tadpole, value -T_j

with kappa = 2 i sqrt(lam) and sigma a unit ultralocal Gaussian field.  A
record carries a word, a rational prefactor and a power of kappa.  Every
rewriting step is an exact identity under the Gaussian integral, so the
values of the final records add up to the value of the starting word.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .covariance import DEFAULT_M, LatticeModel, lattice_slices
from .errors import CancellationFailure, ContractViolation

CLASSES = ("inner-tadpole", "crossing", "nesting", "lower-scale", "remainder")


# ---------------------------------------------------------------------------
# words


def fmt_factor(f) -> str:
    kind, j, a, b = f
    if kind in ("R", "D", "Cb"):
        return f"{kind}{j}({a},{b})"
    if kind == "d":
        return f"d({a},{b})"
    if kind == "s":
        return f"s({a})"
    return f"{kind}{j}({a})"


def fmt_word(word) -> str:
    return " ".join(fmt_factor(f) for f in word)


def parse_word(text: str) -> tuple:
    """Inverse of fmt_word."""
    out = []
    for tok in text.split():
        head, args = tok[:-1].split("(")
        parts = args.split(",")
        if head == "s":
            out.append(("s", None, parts[0], None))
        elif head == "d":
            out.append(("d", None, parts[0], parts[1]))
        else:
            kind = head.rstrip("-0123456789")
            j = int(head[len(kind):])
            if kind in ("T", "X"):
                out.append((kind, j, parts[0], None))
            else:
                out.append((kind, j, parts[0], parts[1]))
    return tuple(out)


def two_resolvent_word(j_max: int) -> tuple:
    """Two resolvents joined by two propagators, with the tree line x1 = y1."""
    return (
        ("R", j_max, "x1", "x2"),
        ("Cb", j_max, "x2", "y1"),
        ("R", j_max, "y1", "y2"),
        ("Cb", j_max, "y2", "x1"),
        ("d", None, "x1", "y1"),
    )


def single_resolvent_word(j_max: int) -> tuple:
    """A loop vertex with one resolvent closed by one propagator."""
    return (("R", j_max, "x1", "x2"), ("Cb", j_max, "x2", "x1"))


# ---------------------------------------------------------------------------
# records and ledgers


@dataclass
class TermRecord:
    word: tuple
    prefactor: Fraction = Fraction(1)
    kappa_power: int = 0
    scale: int = 0
    classification: str | None = None
    bound_factor: float = 1.0
    counts: dict = field(default_factory=dict)
    stop_scale: int | None = None
    final: bool = False
    truncated: bool = False
    op: str = "start"
    id: int = 0
    parent: int | None = None
    history: tuple = ()
    sigma_origin: str | None = None  # "clean" or "split" while a sigma is explicit
    adjacent: tuple | None = None
    fresh: dict = field(default_factory=lambda: {"z": 0, "w": 0})
    twin_of: int | None = None
    chords: tuple = ()  # lines drawn on the cycle, as pairs of "just before factor p" anchors

    @property
    def sign(self) -> int:
        return 1 if self.prefactor >= 0 else -1

    def to_dict(self) -> dict:
        return {
            "id": self.id, "parent": self.parent, "op": self.op, "word": fmt_word(self.word),
            "prefactor": str(self.prefactor), "kappa_power": self.kappa_power, "scale": self.scale,
            "classification": self.classification, "sign": self.sign, "bound_factor": self.bound_factor,
            "counts": {str(k): v for k, v in sorted(self.counts.items())}, "stop_scale": self.stop_scale,
            "final": self.final, "truncated": self.truncated, "history": list(self.history),
            "twin_of": self.twin_of,
            # remainder branches keep their sigma pairings without weakening parameters
            "w_free": self.classification == "remainder",
        }


@dataclass
class TermLedger:
    records: list
    stop_scale: int | None = None
    truncated: bool = False
    params: dict = field(default_factory=dict)

    def finals(self) -> list:
        return [r for r in self.records if r.final]

    @property
    def counters(self) -> dict:
        """Largest j-line count reached at each scale over all branches."""
        out: dict = {}
        for r in self.records:
            for j, n in r.counts.items():
                out[j] = max(out.get(j, 0), n)
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)


def _fresh(rec: TermRecord, letter: str) -> tuple[str, dict]:
    fresh = dict(rec.fresh)
    fresh[letter] += 1
    return f"{letter}{fresh[letter]}", fresh


def _splice(word, chords, i: int, new: tuple):
    """Replace factor i by the factors in new; anchors after i shift."""
    shift = len(new) - 1
    chords = tuple((p + shift if p > i else p, q + shift if q > i else q) for p, q in chords)
    return word[:i] + tuple(new) + word[i + 1:], chords


def initial_chords(word) -> tuple:
    """Tree lines of a start word: each delta joins the corners where its indices enter."""
    out = []
    for kind, _, a, b in word:
        if kind != "d":
            continue
        ends = []
        for name in (a, b):
            ends.append(next(i for i, f in enumerate(word) if f[0] != "d" and f[2] == name))
        out.append(tuple(ends))
    return tuple(out)


def _crosses(chords, s: int, h: int) -> bool:
    """Does the line from factor s to factor h cross any existing chord?"""
    for p, q in chords:
        lo, hi = sorted((p - 0.5, q - 0.5))
        if (lo < s < hi) != (lo < h < hi):
            return True
    return False


def _child(rec: TermRecord, **kw) -> TermRecord:
    base = dict(final=False, classification=None, sigma_origin=None, adjacent=None,
                truncated=False, twin_of=None)
    base.update(kw)
    return replace(rec, counts=dict(rec.counts), parent=rec.id, **base)


# ---------------------------------------------------------------------------
# rewriting steps


def find_resolvent(word, j: int, clockwise: bool = True) -> int | None:
    order = range(len(word)) if clockwise else range(len(word) - 1, -1, -1)
    for i in order:
        if word[i][0] == "R" and word[i][1] == j:
            return i
    return None


def cleaning_step(t: TermRecord, j: int, clockwise: bool = True) -> list[TermRecord]:
    """R^j = R^(j-1) - kappa R^(j-1) sigma D^j R^j at the first scale-j resolvent.

    Without a scale-j resolvent the record is returned unchanged.  At j = 0
    the lower term is the identity, written as a delta.
    """
    i = find_resolvent(t.word, j, clockwise)
    if i is None:
        return [t]
    _, _, a, b = t.word[i]
    z1, fresh = _fresh(t, "z")
    z2, fresh2 = _fresh(replace(t, fresh=fresh), "z")
    lower_factor = ("R", j - 1, a, b) if j > 0 else ("d", None, a, b)
    left = ("R", j - 1, a, z1) if j > 0 else ("d", None, a, z1)
    lower = _child(t, word=t.word[:i] + (lower_factor,) + t.word[i + 1:], op="lower",
                   history=t.history + ("lower",))
    adjacent = ("R", j, z2, b)
    sig_word, chords = _splice(t.word, t.chords, i, (left, ("s", None, z1, None), ("D", j, z1, z2), adjacent))
    sig = _child(t, word=sig_word, chords=chords, prefactor=-t.prefactor, kappa_power=t.kappa_power + 1,
                 op="sigma", history=t.history + ("sigma",), fresh=fresh2, sigma_origin="clean",
                 adjacent=adjacent)
    return [lower, sig]


def _sigma_position(word) -> int:
    pos = [i for i, f in enumerate(word) if f[0] == "s"]
    if len(pos) != 1:
        raise ContractViolation(f"expected one explicit sigma, found {len(pos)}")
    return pos[0]


def _hit(t: TermRecord, i: int, z: str, s_pos: int):
    """Derivative of the resolvent at position i with respect to sigma(z).

    The sigma factor is removed and the new line is recorded as a chord from
    the factor that followed sigma to the inserted propagator.
    """
    kind, k, a, b = t.word[i]
    w, fresh = _fresh(t, "w")
    prop = ("Cb", k, z, w)
    word, chords = _splice(t.word, t.chords, i, (("R", k, a, z), prop, ("R", k, w, b)))
    s_now = s_pos + 2 if i < s_pos else s_pos
    follow = word[(s_now + 1) % len(word)]
    word = word[:s_now] + word[s_now + 1:]
    chords = tuple((p - 1 if p > s_now else p, q - 1 if q > s_now else q) for p, q in chords)
    chords = chords + ((word.index(follow), word.index(prop)),)
    return word, chords, fresh


def _substitute(word, old: str, new: str) -> tuple:
    out = []
    for kind, j, a, b in word:
        out.append((kind, j, new if a == old else a, new if b == old else b))
    return tuple(out)


def integrate_by_parts(t: TermRecord, clockwise: bool = True) -> list[tuple[str, TermRecord]]:
    """Contract the explicit sigma with every resolvent of the word.

    Returns (classification, record) pairs.  Hitting the resolvent next to a
    freshly cleaned propagator opens a potential tadpole, which is split at
    once into the inner tadpole and a new explicit-sigma term.
    """
    s_pos = _sigma_position(t.word)
    z = t.word[s_pos][2]
    n = len(t.word)
    order = [(s_pos + d) % n for d in range(1, n)] if clockwise else [(s_pos - d) % n for d in range(1, n)]
    j = t.scale
    out = []
    for i in order:
        f = t.word[i]
        if f[0] != "R":
            continue
        word, chords, fresh = _hit(t, i, z, s_pos)
        base = dict(prefactor=-t.prefactor, kappa_power=t.kappa_power + 1, fresh=fresh, chords=chords)
        if f[1] < j:
            out.append(("lower-scale", _child(t, word=word, op="lower-scale", **base)))
        elif t.sigma_origin == "clean" and f == t.adjacent:
            out.extend(_split_tadpole(t, word, f, z, base))
        elif _crosses(t.chords, s_pos, i):
            out.append(("crossing", _child(t, word=word, op="crossing", **base)))
        else:
            out.append(("nesting", _child(t, word=word, op="nesting", **base)))
    return out


def _split_tadpole(t, word, f, z, base):
    """R^j(z2, z) between D^j(z, z2) and Cb^j(z, w): delta term plus sigma term."""
    _, k, z2, _ = f
    i = word.index(("R", k, z2, z))
    chords = base["chords"]
    # the tadpole: z2 identified with z, D^j(z, z) becomes T^j(z)
    tad = _substitute(word[:i] + word[i + 1:], z2, z)
    tad = tuple(("T", g[1], g[2], None) if g[0] == "D" and g[2] == g[3] == z else g for g in tad)
    tad_chords = tuple((p - 1 if p > i else p, q - 1 if q > i else q) for p, q in chords)
    tadpole = _child(t, word=tad, op="tadpole", **dict(base, chords=tad_chords))
    w, fresh2 = _fresh(replace(t, fresh=base["fresh"]), "w")
    inner = ("R", k, w, z)
    sig_word, sig_chords = _splice(word, chords, i, (("s", None, z2, None), ("Cb", k, z2, w), inner))
    sig_base = dict(base, prefactor=-base["prefactor"], kappa_power=base["kappa_power"] + 1,
                    fresh=fresh2, chords=sig_chords)
    sig = _child(t, word=sig_word, op="split-sigma", sigma_origin="split", **sig_base)
    return [("inner-tadpole", tadpole), ("split-sigma", sig)]


# ---------------------------------------------------------------------------
# the full expansion


def stop_threshold(a: float, j: int) -> int:
    return int(math.ceil(a * j - 1e-12))


def run_cleaning(start, a: float, j_max: int, cap: int = 100_000, count_nesting: bool = True,
                 K: float = 1.0, M: float = DEFAULT_M, clockwise: bool = True) -> TermLedger:
    """Breadth-first cleaning from scale j_max down, with the stopping rule N_j = ceil(a j)."""
    if a <= 0:
        raise ContractViolation("a must be positive")
    start = tuple(start)
    root = TermRecord(word=start, scale=j_max, id=0, chords=initial_chords(start))
    records = [root]
    queue = deque([root])
    truncated = False

    def add(rec):
        rec.id = len(records)
        records.append(rec)
        if not rec.final:
            queue.append(rec)

    def finish(rec, cls, stop):
        rec.final = True
        rec.classification = cls
        rec.stop_scale = stop

    while queue:
        if len(records) >= cap:
            truncated = True
            for rec in queue:
                finish(rec, rec.classification or "remainder", rec.scale)
                rec.truncated = True
            break
        rec = queue.popleft()
        if rec.sigma_origin is not None:
            for cls, child in integrate_by_parts(rec, clockwise):
                j = rec.scale
                child.history = rec.history + (cls,)
                if cls == "inner-tadpole":
                    finish(child, cls, None)
                elif cls in ("crossing", "nesting", "lower-scale"):
                    if cls != "nesting" or count_nesting:
                        child.counts[j] = child.counts.get(j, 0) + 1
                        child.bound_factor = rec.bound_factor * K * M ** (-2 * j)
                    child.classification = cls
                    if child.counts.get(j, 0) >= stop_threshold(a, j):
                        finish(child, "remainder", j)
                add(child)
            continue
        j = rec.scale
        while True:
            if rec.counts.get(j, 0) >= stop_threshold(a, j):
                break
            if find_resolvent(rec.word, j, clockwise) is not None or j < 0:
                break
            j -= 1
        rec.scale = j
        if j < 0:
            finish(rec, rec.classification or "lower-scale", -1)
            continue
        if rec.counts.get(j, 0) >= stop_threshold(a, j):
            finish(rec, "remainder", j)
            continue
        for child in cleaning_step(rec, j, clockwise):
            child.scale = j
            add(child)
    # records finished in place keep their ids; the root may itself be final
    stops = [r.stop_scale for r in records if r.final and r.classification == "remainder"]
    ledger = TermLedger(records, max(stops) if stops else -1, truncated,
                        {"a": a, "j_max": j_max, "cap": cap, "count_nesting": count_nesting,
                         "K": K, "M": M, "clockwise": clockwise})
    return ledger


# ---------------------------------------------------------------------------
# tadpole-counterterm pairing


def _tadpoles(word):
    return [i for i, f in enumerate(word) if f[0] == "T"]


def pair_tadpoles(ledger: TermLedger, counterterm_scales=None) -> TermLedger:
    """Add, for every final record with tadpoles above its dividing scale, the
    counterterm twins obtained by replacing each nonempty subset of those
    tadpoles with counterdots.  Tadpoles at or below the dividing scale stay
    and are flagged in the ledger params.
    """
    records = list(ledger.records)
    unmatched = 0
    for rec in list(ledger.finals()):
        if rec.twin_of is not None:
            continue
        j0 = rec.stop_scale if rec.stop_scale is not None else -1
        pos = [i for i in _tadpoles(rec.word) if rec.word[i][1] > j0]
        unmatched += len(_tadpoles(rec.word)) - len(pos)
        for i in pos:
            j = rec.word[i][1]
            if counterterm_scales is not None and j not in counterterm_scales:
                raise CancellationFailure(f"no counterterm at scale {j} for record {rec.id}")
        for r in range(1, len(pos) + 1):
            for subset in _subsets(pos, r):
                word = list(rec.word)
                for i in subset:
                    _, j, z, _ = word[i]
                    word[i] = ("X", j, z, None)
                twin = replace(rec, word=tuple(word), counts=dict(rec.counts), id=len(records),
                               parent=rec.parent, twin_of=rec.id, op="counterterm-twin",
                               history=rec.history + ("counterterm-twin",))
                records.append(twin)
    params = dict(ledger.params, unmatched_low_scale_tadpoles=unmatched)
    return TermLedger(records, ledger.stop_scale, ledger.truncated, params)


def _subsets(items, r):
    import itertools

    return itertools.combinations(items, r)


def tadpole_weight(rec: TermRecord, T: dict) -> Fraction:
    """Prefactor times T_j per tadpole and -T_j per counterdot, exactly."""
    val = Fraction(rec.prefactor)
    for kind, j, _, _ in rec.word:
        if kind == "T":
            val *= Fraction(T[j])
        elif kind == "X":
            val *= -Fraction(T[j])
    return val


def net_tadpole_value(ledger: TermLedger, T: dict) -> dict:
    """Exact net tadpole weight per scale, grouping each record with its twins.

    Only tadpoles above each record's dividing scale are compensated; groups
    are keyed by the highest compensated scale.
    """
    groups: dict = {}
    for rec in ledger.finals():
        scales = [f[1] for f in rec.word if f[0] in ("T", "X")]
        if not scales:
            continue
        j0 = rec.stop_scale if rec.stop_scale is not None else -1
        if max(scales) <= j0:
            continue
        key = max(scales)
        groups[key] = groups.get(key, Fraction(0)) + tadpole_weight(rec, T)
    return groups


def primary_divergent_ledger(n: int, j: int, crossing: int = 0) -> TermLedger:
    """A single loop with n nearest-neighbour tadpoles of scale j.

    With crossing > 0 a spectator chain of resolvents is kept in the word;
    it is never touched by the pairing.
    """
    word = []
    for i in range(1, n + 1):
        nxt = f"x{i % n + 1}"
        word.append(("D", j, f"x{i}", nxt))
        word.append(("T", j, nxt, None))
    for c in range(crossing):
        word.append(("R", j, f"q{c}", f"q{c + 1}"))
    rec = TermRecord(word=tuple(word), prefactor=Fraction(1, 2 * n), scale=j, classification="inner-tadpole",
                     final=True, op="primary", id=0)
    return TermLedger([rec], -1, False, {"n": n, "j": j, "crossing": crossing})


# ---------------------------------------------------------------------------
# bounds


def log_line_factor(a: float, j: int, M: float = DEFAULT_M, K: float = 1.0) -> float:
    """log of (K M^-2j)^N N! with N = ceil(a j) lines of scale j."""
    N = stop_threshold(a, j)
    return N * (math.log(K) - 2 * j * math.log(M)) + math.lgamma(N + 1)


def line_factor(a: float, j: int, M: float = DEFAULT_M, K: float = 1.0) -> float:
    return math.exp(log_line_factor(a, j, M, K))


def bound_product(ledger: TermLedger, lam: float, M: float = DEFAULT_M, K: float = 1.0) -> dict:
    """Per remainder branch: prod_j (K M^-2j)^N_j N_j!, compared with exp(-j0^2)."""
    rows = []
    for rec in ledger.finals():
        if rec.classification != "remainder":
            continue
        j0 = rec.stop_scale
        logf = 0.0
        for j, N in rec.counts.items():
            logf += N * (math.log(K) - 2 * j * math.log(M)) + math.lgamma(N + 1)
        if j0 is None or j0 < 0:
            rows.append({"id": rec.id, "stop_scale": -1, "log_factor": 0.0, "ok": True})
            continue
        rows.append({"id": rec.id, "stop_scale": j0, "log_factor": logf, "log_target": -float(j0 * j0),
                     "ok": logf <= -float(j0 * j0) + 1e-12})
    worst = max((r["log_factor"] for r in rows), default=0.0)
    return {"lambda": lam, "M": M, "K": K, "branches": rows, "max_log_factor": worst,
            "all_ok": all(r["ok"] for r in rows)}


# ---------------------------------------------------------------------------
# numerical values of words on a small lattice


@dataclass
class WordContext:
    """Gauss-Hermite nodes for sigma and the lattice kernels of every scale."""

    slices: list
    lam: float
    nodes: np.ndarray
    weights: np.ndarray
    resolvents: dict
    cumulative: list

    @property
    def kappa(self) -> complex:
        return 2j * math.sqrt(self.lam)

    @property
    def tadpoles(self) -> dict:
        return {j: float(D[0, 0]) for j, D in enumerate(self.slices)}


def word_context(model: LatticeModel, lam: float, degree: int = 40) -> WordContext:
    slices = lattice_slices(model)
    n = model.n_sites
    x, w = np.polynomial.hermite_e.hermegauss(degree)
    w = w / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(len(nodes))
    for g in np.meshgrid(*([w] * n), indexing="ij"):
        weights = weights * g.ravel()
    cum = list(np.cumsum(np.array(slices), axis=0))
    kappa = 2j * math.sqrt(lam)
    res = {}
    eye = np.eye(n)
    for j, Cb in enumerate(cum):
        A = eye[None] + kappa * nodes[:, :, None] * Cb[None]
        res[j] = np.linalg.inv(A)
    return WordContext(slices, lam, nodes, weights, res, cum)


def word_value(rec: TermRecord, ctx: WordContext) -> complex:
    """Gaussian expectation of the word, summed over all site indices."""
    letters: dict = {}

    def L(name):
        if name not in letters:
            letters[name] = "abcdefghijklmnoprstuvwxyzABCDEFGHIJKLMNOPRSTUVWXYZ"[len(letters)]
        return letters[name]

    subs, ops = [], []
    n = ctx.nodes.shape[1]
    for kind, j, a, b in rec.word:
        if kind == "R":
            if j < 0:
                subs.append(L(a) + L(b))
                ops.append(np.eye(n))
            else:
                subs.append("q" + L(a) + L(b))
                ops.append(ctx.resolvents[j])
        elif kind == "D":
            subs.append(L(a) + L(b))
            ops.append(ctx.slices[j])
        elif kind == "Cb":
            subs.append(L(a) + L(b))
            ops.append(ctx.cumulative[j])
        elif kind == "d":
            subs.append(L(a) + L(b))
            ops.append(np.eye(n))
        elif kind == "s":
            subs.append("q" + L(a))
            ops.append(ctx.nodes)
        elif kind == "T":
            subs.append(L(a))
            ops.append(np.diag(ctx.slices[j]).copy())
        elif kind == "X":
            subs.append(L(a))
            ops.append(-np.full(n, ctx.tadpoles[j]))
    subs.append("q")
    ops.append(ctx.weights)
    val = np.einsum(",".join(subs) + "->", *ops, optimize=True)
    return complex(rec.prefactor) * ctx.kappa ** rec.kappa_power * complex(val)


def ledger_value(ledger: TermLedger, ctx: WordContext) -> complex:
    vals = [word_value(r, ctx) for r in ledger.finals() if r.twin_of is None]
    return complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
