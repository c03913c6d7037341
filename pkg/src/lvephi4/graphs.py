"""Labeled trees, decorated trees, dual cycle words and planar decoration counts."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, EnumerationLimitError, InvalidAssignmentError

DEFAULT_TREE_CAP = 9
DECORATION_CAP = 6


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class LabeledTree:
    """A tree on vertices 0..n_vertices-1 stored as a sorted tuple of edges."""

    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_vertices < 1:
            raise DomainError("a tree needs at least one vertex")
        edges = tuple(sorted(_edge(int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "edges", edges)
        if len(edges) != self.n_vertices - 1:
            raise DomainError(f"{len(edges)} edges for {self.n_vertices} vertices")
        parent = list(range(self.n_vertices))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in edges:
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices) or a == b:
                raise DomainError(f"bad edge {(a, b)}")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise DomainError("edge set contains a cycle")
            parent[ra] = rb

    def degree(self, v: int) -> int:
        return sum(v in e for e in self.edges)

    def neighbors(self, v: int) -> list[int]:
        return sorted(b if a == v else a for a, b in self.edges if v in (a, b))

    def leaves(self) -> list[int]:
        return [v for v in range(self.n_vertices) if self.degree(v) == 1]

    def path(self, u: int, v: int) -> list[tuple[int, int]]:
        """Edges on the unique path from u to v."""
        prev = {u: None}
        stack = [u]
        while stack:
            x = stack.pop()
            for y in self.neighbors(x):
                if y not in prev:
                    prev[y] = x
                    stack.append(y)
        out = []
        x = v
        while prev[x] is not None:
            out.append(_edge(x, prev[x]))
            x = prev[x]
        return out[::-1]

    def to_dict(self) -> dict:
        return {"n": self.n_vertices, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledTree":
        return cls(int(d["n"]), tuple(tuple(e) for e in d["edges"]))


def prufer_to_tree(code, n: int) -> LabeledTree:
    """Decode a Prufer sequence of length n-2 into a labeled tree."""
    if n == 1:
        return LabeledTree(1, ())
    if n == 2:
        return LabeledTree(2, ((0, 1),))
    code = list(code)
    degree = [1] * n
    for c in code:
        degree[c] += 1
    edges = []
    for c in code:
        leaf = min(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, c))
        degree[leaf] -= 1
        degree[c] -= 1
    u, v = [i for i in range(n) if degree[i] == 1]
    edges.append((u, v))
    return LabeledTree(n, tuple(edges))


def tree_to_prufer(tree: LabeledTree) -> tuple[int, ...]:
    n = tree.n_vertices
    if n <= 2:
        return ()
    adj = {v: set(tree.neighbors(v)) for v in range(n)}
    code = []
    for _ in range(n - 2):
        leaf = min(v for v in adj if len(adj[v]) == 1)
        (nb,) = adj[leaf]
        code.append(nb)
        adj[nb].discard(leaf)
        del adj[leaf]
    return tuple(code)


def enumerate_labeled_trees(n: int, cap: int = DEFAULT_TREE_CAP) -> list[LabeledTree]:
    """All labeled trees on n vertices, in lexicographic Prufer order."""
    if n < 1:
        raise DomainError("n must be positive")
    if n > cap:
        raise EnumerationLimitError(f"n={n} exceeds the tree cap {cap}")
    if n <= 2:
        return [prufer_to_tree((), n)]
    return [prufer_to_tree(code, n) for code in itertools.product(range(n), repeat=n - 2)]


def random_tree(n: int, rng: np.random.Generator) -> LabeledTree:
    if n <= 2:
        return prufer_to_tree((), n)
    return prufer_to_tree(rng.integers(0, n, size=n - 2).tolist(), n)


def path_infimum_matrix(tree: LabeledTree, w: dict) -> np.ndarray:
    """Matrix of path minima of the weakening parameters, unit diagonal."""
    weights = {}
    for key, val in w.items():
        e = _edge(*key)
        val = float(val)
        if not 0.0 <= val <= 1.0:
            raise InvalidAssignmentError(f"w{e}={val} outside [0, 1]")
        weights[e] = val
    missing = [e for e in tree.edges if e not in weights]
    if missing:
        raise InvalidAssignmentError(f"no weight for edges {missing}")
    n = tree.n_vertices
    out = np.ones((n, n))
    for root in range(n):
        best = {root: 1.0}
        stack = [root]
        while stack:
            x = stack.pop()
            for y in tree.neighbors(x):
                if y not in best:
                    best[y] = min(best[x], weights[_edge(x, y)])
                    stack.append(y)
        for v, val in best.items():
            out[root, v] = val
    return out


# ---------------------------------------------------------------------------
# planar decorations of a single loop vertex


def count_planar_decorations(n: int, k: int) -> int:
    """(2n-k)(n-1)!/(n-k)!, exact; the k=0 value is 2 for every n."""
    if n < 1 or k < 0 or k > n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    val = Fraction((2 * n - k) * math.factorial(n - 1), math.factorial(n - k))
    if val.denominator != 1:
        raise DomainError("non-integer decoration count")
    return int(val)


@dataclass(frozen=True)
class DecorationPattern:
    """n objects around a loop vertex with a marked line.

    objects[i] is 0 for a tadpole, or the label of a counterterm.  The marked
    line is one of the 2n-k sigma lines and carries counterterm 1 when k >= 1.
    """

    n: int
    k: int
    marked_line: int
    objects: tuple[int, ...]

    def to_string(self) -> str:
        body = "".join("T" if o == 0 else f"X{o}" for o in self.objects)
        return f"^{self.marked_line}:{body}"


def enumerate_planar_decorations(n: int, k: int, cap: int = DECORATION_CAP) -> list[DecorationPattern]:
    """Brute-force listing of decoration patterns under the marked-line convention."""
    if n > cap:
        raise EnumerationLimitError(f"n={n} exceeds decoration cap {cap}")
    if n < 1 or k < 0 or k > n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    if k == 0:
        # nothing to attach: the only arrangement is a ring of tadpoles
        return [DecorationPattern(n, 0, 0, (0,) * n)]
    out = []
    alphabet = [0] + list(range(2, k + 1))
    for marked in range(2 * n - k):
        for rest in itertools.product(alphabet, repeat=n - 1):
            labels = [o for o in rest if o]
            if sorted(labels) != list(range(2, k + 1)):
                continue
            out.append(DecorationPattern(n, k, marked, (1,) + rest))
    return out


def decoration_report(n_max: int = DECORATION_CAP) -> list[dict]:
    """Brute-force versus closed-form counts, with a flag per mismatch."""
    rows = []
    for n in range(1, n_max + 1):
        for k in range(0, n + 1):
            brute = len(enumerate_planar_decorations(n, k))
            closed = count_planar_decorations(n, k)
            rows.append({"n": n, "k": k, "brute_force": brute, "closed_form": closed,
                         "match": brute == closed})
    return rows


# ---------------------------------------------------------------------------
# decorated trees and their dual cycle words

LOOP, COUNTERTERM = 1, 0


@dataclass(frozen=True)
class DecoratedTree:
    """A tree whose vertices are loop vertices or counterterm leaves."""

    tree: LabeledTree
    counterterms: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "counterterms", frozenset(self.counterterms))
        for v in self.counterterms:
            if self.tree.degree(v) != 1:
                raise DomainError(f"counterterm {v} is not a leaf")

    def kind(self, v: int) -> int:
        return COUNTERTERM if v in self.counterterms else LOOP

    @property
    def n_loops(self) -> int:
        return self.tree.n_vertices - len(self.counterterms)


@dataclass(frozen=True)
class DualObject:
    kind: str  # "H", "L", "R" or "X"
    label: int  # owning vertex; for half-lines the vertex on the far side


@dataclass(frozen=True)
class DualCycleWord:
    """Cyclic word of half-lines (H), leaf resolvents (L), resolvents (R), counterdots (X)."""

    objects: tuple[DualObject, ...]
    pairing: tuple[tuple[int, int], ...]

    def kinds(self) -> str:
        return "".join(o.kind for o in self.objects)

    def count(self, kind: str) -> int:
        return sum(o.kind == kind for o in self.objects)

    def is_non_crossing(self) -> bool:
        return pairing_is_non_crossing(self.pairing)


def pairing_is_non_crossing(pairs) -> bool:
    for (a, b), (c, d) in itertools.combinations(pairs, 2):
        a, b = sorted((a, b))
        c, d = sorted((c, d))
        if a < c < b < d or c < a < d < b:
            return False
    return True


def dualize(t: DecoratedTree, root: int = 0) -> DualCycleWord:
    """Turn around the tree clockwise from the root, neighbours in label order."""
    objs: list[DualObject] = []
    pairs = []
    tree = t.tree

    def corner(v):
        objs.append(DualObject("L" if tree.degree(v) == 1 else "R", v))

    def visit(v, parent):
        nbs = tree.neighbors(v)
        if parent is not None:
            i = nbs.index(parent)
            nbs = nbs[i + 1:] + nbs[:i]
        for c in nbs:
            if parent is not None:
                corner(v)
            if t.kind(c) == COUNTERTERM:
                objs.append(DualObject("X", c))
            else:
                start = len(objs)
                objs.append(DualObject("H", c))
                visit(c, v)
                pairs.append((start, len(objs)))
                objs.append(DualObject("H", v))
            if parent is None:
                corner(v)
        if parent is not None:
            corner(v)

    if t.kind(root) == COUNTERTERM:
        raise DomainError("root must be a loop vertex")
    if tree.n_vertices > 1:
        visit(root, None)
    return DualCycleWord(tuple(objs), tuple(sorted(pairs)))


def primalize(word: DualCycleWord) -> DecoratedTree:
    """Rebuild the decorated tree; vertices are numbered in order of discovery."""
    partner = {}
    for a, b in word.pairing:
        partner[a], partner[b] = b, a
    edges = []
    cts = set()
    stack = [0]
    n = 1
    for i, obj in enumerate(word.objects):
        if obj.kind == "H":
            if partner[i] > i:
                edges.append((stack[-1], n))
                stack.append(n)
                n += 1
            else:
                stack.pop()
        elif obj.kind == "X":
            edges.append((stack[-1], n))
            cts.add(n)
            n += 1
    return DecoratedTree(LabeledTree(n, tuple(edges)), frozenset(cts))


def discovery_relabel(t: DecoratedTree, root: int = 0) -> DecoratedTree:
    """Relabel vertices in the order the clockwise tour first meets them."""
    order = [root]
    tree = t.tree

    def visit(v, parent):
        nbs = tree.neighbors(v)
        if parent is not None:
            i = nbs.index(parent)
            nbs = nbs[i + 1:] + nbs[:i]
        for c in nbs:
            order.append(c)
            if t.kind(c) != COUNTERTERM:
                visit(c, v)

    if tree.n_vertices > 1:
        visit(root, None)
    new = {old: i for i, old in enumerate(order)}
    edges = tuple((new[a], new[b]) for a, b in tree.edges)
    return DecoratedTree(LabeledTree(tree.n_vertices, edges), frozenset(new[c] for c in t.counterterms))


def dual_identities(word: DualCycleWord, t: DecoratedTree) -> dict:
    """Check the object counts of a dual word against its tree."""
    n = t.tree.n_vertices
    loop_edges = sum(1 for a, b in t.tree.edges if t.kind(a) == LOOP and t.kind(b) == LOOP)
    objects = word.count("L") + word.count("X") + word.count("R")
    return {
        "objects": objects,
        "expected_objects": 2 * (n - 1),
        "half_lines": word.count("H"),
        "expected_half_lines": 2 * loop_edges,
        "ok": objects == 2 * (n - 1) and word.count("H") == 2 * loop_edges,
    }


def random_decorated_tree(n: int, rng: np.random.Generator, p_counterterm: float = 0.4) -> DecoratedTree:
    tree = random_tree(n, rng)
    leaves = [v for v in tree.leaves() if v != 0]
    cts = {v for v in leaves if rng.random() < p_counterterm}
    # the root stays a loop vertex; a counterterm may not hang off another one
    for v in sorted(cts):
        (nb,) = tree.neighbors(v)
        if nb in cts:
            cts.discard(v)
    return DecoratedTree(tree, frozenset(cts))


def decorated_trees(tree: LabeledTree) -> list[DecoratedTree]:
    """Every way of marking some leaves of the tree as counterterms."""
    if tree.n_vertices == 1:
        return [DecoratedTree(tree)]
    leaves = tree.leaves()
    out = []
    for r in range(len(leaves) + 1):
        for subset in itertools.combinations(leaves, r):
            out.append(DecoratedTree(tree, frozenset(subset)))
    return out
