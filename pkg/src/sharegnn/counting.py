"""Exact substructure enumeration: cycles, triangles, tailed triangles, claws, cliques.

Cycle enumeration grows all simple paths whose first vertex is the
smallest on the path, vectorised over the whole frontier. A closed path
is reported once: the two traversal directions are told apart by
comparing the second and the last vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ContractViolation
from .graph import Graph

_FRONTIER_CHUNK = 1 << 18


@dataclass(frozen=True)
class SubstructureKind:
    """One of ``triangle``, ``tailed_triangle``, ``star3``, ``cycle`` or ``induced_cycle``."""

    kind: str
    length: int = 0

    def __post_init__(self):
        if self.kind not in ("triangle", "tailed_triangle", "star3", "cycle", "induced_cycle"):
            raise ContractViolation(f"unknown substructure kind {self.kind!r}")
        if self.kind in ("cycle", "induced_cycle") and not 4 <= self.length <= 6:
            raise ContractViolation("cycle length must be between 4 and 6")

    @classmethod
    def parse(cls, text: str) -> "SubstructureKind":
        text = text.strip().lower()
        for prefix, kind in (("induced_cycle", "induced_cycle"), ("cycle", "cycle")):
            if text.startswith(prefix):
                return cls(kind, int(text[len(prefix):]))
        return cls(text)

    def __str__(self):
        return f"{self.kind}{self.length}" if self.length else self.kind


BENCHMARK_KINDS = (
    SubstructureKind("triangle"),
    SubstructureKind("tailed_triangle"),
    SubstructureKind("star3"),
    SubstructureKind("cycle", 4),
    SubstructureKind("cycle", 5),
    SubstructureKind("cycle", 6),
)


def enumerate_cycles(g: Graph, max_len: int, min_len: int = 3, induced: bool = False) -> dict[int, np.ndarray]:
    """Every simple (or chordless) cycle with ``min_len <= length <= max_len``.

    Returns a map ``length -> (count, length)`` array of vertex sequences,
    each cycle listed once, starting at its smallest vertex.
    """
    if min_len < 3 or max_len < min_len:
        return {}
    n = g.num_nodes
    indptr, indices = g.csr
    deg = np.diff(indptr)
    adj = g.dense_adjacency() if induced else None
    found: dict[int, list[np.ndarray]] = {}
    stack = [np.arange(n, dtype=np.int64)[:, None]]
    while stack:
        paths = stack.pop()
        d = paths.shape[1]
        last = paths[:, -1]
        cnt = deg[last]
        total = int(cnt.sum())
        if total == 0:
            continue
        owner = np.repeat(np.arange(paths.shape[0]), cnt)
        base = np.repeat(indptr[last] - (np.cumsum(cnt) - cnt), cnt)
        nb = indices[base + np.arange(total)]
        start = paths[owner, 0]
        if d >= 3 and d >= min_len:
            close = (nb == start) & (paths[owner, 1] < paths[owner, -1])
            if np.any(close):
                cyc = paths[owner[close]]
                if induced:
                    cyc = cyc[_chordless(cyc, adj)]
                if cyc.shape[0]:
                    found.setdefault(d, []).append(cyc)
        if d >= max_len:
            continue
        ext = nb > start
        if not np.any(ext):
            continue
        owner, nb = owner[ext], nb[ext]
        grown = paths[owner]
        ext = ~np.any(grown == nb[:, None], axis=1)
        if induced and d >= 2:
            # a new vertex touching an interior path vertex would create a chord
            ext &= ~np.any(adj[grown[:, 1:-1], nb[:, None]], axis=1) if d > 2 else True
        grown = np.concatenate([grown[ext], nb[ext][:, None]], axis=1)
        for lo in range(0, grown.shape[0], _FRONTIER_CHUNK):
            stack.append(grown[lo:lo + _FRONTIER_CHUNK])
    out = {}
    for length in range(min_len, max_len + 1):
        parts = found.get(length)
        if parts:
            cyc = np.concatenate(parts, axis=0)
            out[length] = cyc[np.lexsort(cyc.T[::-1])]
        else:
            out[length] = np.zeros((0, length), dtype=np.int64)
    return out


def _chordless(cycles: np.ndarray, adj: np.ndarray) -> np.ndarray:
    length = cycles.shape[1]
    ok = np.ones(cycles.shape[0], dtype=bool)
    for a in range(length):
        for b in range(a + 2, length):
            if a == 0 and b == length - 1:
                continue
            ok &= ~adj[cycles[:, a], cycles[:, b]]
    return ok


def cycle_participation(g: Graph, max_len: int, min_len: int = 3, induced: bool = False) -> np.ndarray:
    """``(n, max_len - min_len + 1)`` counts of cycles of each length through each node."""
    cycles = enumerate_cycles(g, max_len, min_len, induced)
    width = max(max_len - min_len + 1, 0)
    out = np.zeros((g.num_nodes, width), dtype=np.int64)
    for length, cyc in cycles.items():
        if cyc.shape[0]:
            out[:, length - min_len] = np.bincount(cyc.ravel(), minlength=g.num_nodes)
    return out


def triangles(g: Graph) -> np.ndarray:
    """All triangles as sorted vertex triples ``(a < b < c)``."""
    adj = [set(nbrs) for nbrs in g.adjacency]
    out = []
    for u, v in g.edges.tolist():
        for w in sorted(adj[u] & adj[v]):
            if w > v:
                out.append((u, v, w))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def node_participation(g: Graph, kind: SubstructureKind) -> np.ndarray:
    """Per node, the number of occurrences of ``kind`` that contain it."""
    n = g.num_nodes
    deg = g.degrees
    if kind.kind == "triangle":
        tri = triangles(g)
        return np.bincount(tri.ravel(), minlength=n)
    if kind.kind == "tailed_triangle":
        out = np.zeros(n, dtype=np.int64)
        for tri in triangles(g).tolist():
            tails = sum(int(deg[x]) - 2 for x in tri)
            for x in tri:
                out[x] += tails
                for y in g.adjacency[x]:
                    if y not in tri:
                        out[y] += 1
        return out
    if kind.kind == "star3":
        out = np.array([comb(int(d), 3) for d in deg], dtype=np.int64)
        for v in range(n):
            out[v] += sum(comb(int(deg[c]) - 1, 2) for c in g.adjacency[v])
        return out
    induced = kind.kind == "induced_cycle"
    return cycle_participation(g, kind.length, kind.length, induced)[:, 0]


def count_substructures(g: Graph, kind: SubstructureKind) -> int:
    """Number of (not necessarily induced) occurrences of ``kind`` in ``g``.

    Induced cycles are the exception: they count chordless cycles only.
    """
    deg = g.degrees
    if kind.kind == "triangle":
        return int(triangles(g).shape[0])
    if kind.kind == "tailed_triangle":
        return int(sum(sum(int(deg[x]) - 2 for x in tri) for tri in triangles(g).tolist()))
    if kind.kind == "star3":
        return int(sum(comb(int(d), 3) for d in deg))
    induced = kind.kind == "induced_cycle"
    return int(enumerate_cycles(g, kind.length, kind.length, induced)[kind.length].shape[0])


def count_vector(g: Graph, kinds=BENCHMARK_KINDS) -> np.ndarray:
    return np.array([count_substructures(g, k) for k in kinds], dtype=np.float64)


# ---------------------------------------------------------------------------
# cliques


def maximal_cliques(g: Graph) -> list[tuple[int, ...]]:
    """Maximal cliques via Bron--Kerbosch with Tomita pivoting, deterministic order."""
    adj = [set(nbrs) for nbrs in g.adjacency]
    out: list[tuple[int, ...]] = []
    stack = [((), set(range(g.num_nodes)), set())]
    while stack:
        r, p, x = stack.pop()
        if not p and not x:
            if r:
                out.append(tuple(sorted(r)))
            continue
        pivot = max(p | x, key=lambda u: (len(p & adj[u]), -u))
        for v in sorted(p - adj[pivot], reverse=True):
            stack.append((r + (v,), p & adj[v], x & adj[v]))
            p = p - {v}
            x = x | {v}
    return sorted(out)


def clique_participation(g: Graph, max_size: int) -> np.ndarray:
    """Per node, the number of maximal cliques of each size ``1..max_size``.

    Maximal cliques larger than ``max_size`` are counted in the last column.
    """
    out = np.zeros((g.num_nodes, max_size), dtype=np.int64)
    for clique in maximal_cliques(g):
        col = min(len(clique), max_size) - 1
        for v in clique:
            out[v, col] += 1
    return out
