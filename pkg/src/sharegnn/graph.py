"""Graph and dataset containers, node permutations and hop distances."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import ContractViolation, DataError


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with integer node labels.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically; ``edge_labels`` (if present) is aligned with it.
    The node order is the fixed ordering every matrix built from the graph
    refers to.
    """

    num_nodes: int
    edges: np.ndarray
    node_labels: np.ndarray
    edge_labels: np.ndarray | None = None
    target: object = 0

    @classmethod
    def from_edges(cls, num_nodes, edges=(), node_labels=None, edge_labels=None, target=0):
        """Build a graph from an arbitrary undirected edge list.

        Edges may be given in either orientation; duplicates with the same
        label collapse. Self-loops and out-of-range endpoints are rejected.
        """
        n = int(num_nodes)
        if n < 0:
            raise ContractViolation("num_nodes must be non-negative")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ContractViolation("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ContractViolation("self-loops are not allowed")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        canon = np.stack([lo, hi], axis=1)
        labels = None
        if edge_labels is not None:
            labels = np.asarray(edge_labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != canon.shape[0]:
                raise ContractViolation("edge_labels must align with edges")
        order = np.lexsort((canon[:, 1], canon[:, 0]))
        canon = canon[order]
        if labels is not None:
            labels = labels[order]
        if canon.shape[0]:
            keep = np.ones(canon.shape[0], dtype=bool)
            keep[1:] = np.any(canon[1:] != canon[:-1], axis=1)
            if labels is not None:
                dup = ~keep
                if np.any(labels[1:][dup[1:]] != labels[:-1][dup[1:]]):
                    raise ContractViolation("conflicting labels on a repeated edge")
                labels = labels[keep]
            canon = canon[keep]
        if node_labels is None:
            nl = np.zeros(n, dtype=np.int64)
        else:
            nl = np.asarray(node_labels, dtype=np.int64).reshape(-1)
            if nl.shape[0] != n:
                raise ContractViolation("node_labels must have exactly num_nodes entries")
        return cls(n, canon, nl, labels, target)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """``(indptr, indices)`` of the symmetric adjacency, neighbors sorted."""
        n = self.num_nodes
        if self.num_edges == 0:
            return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return indptr, dst

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr[0])

    def neighbors(self, i: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[i]:indptr[i + 1]]

    @cached_property
    def adjacency(self) -> list[list[int]]:
        """Per-node sorted neighbor lists."""
        indptr, indices = self.csr
        return [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(self.num_nodes)]

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = True
            a[self.edges[:, 1], self.edges[:, 0]] = True
        return a

    @cached_property
    def edge_label_lookup(self) -> dict[tuple[int, int], int]:
        labels = self.edge_labels if self.edge_labels is not None else np.zeros(self.num_edges, np.int64)
        out = {}
        for (u, v), lab in zip(self.edges.tolist(), labels.tolist()):
            out[(u, v)] = lab
            out[(v, u)] = lab
        return out

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.num_nodes != other.num_nodes:
            return False
        if not np.array_equal(self.edges, other.edges):
            return False
        if not np.array_equal(self.node_labels, other.node_labels):
            return False
        if (self.edge_labels is None) != (other.edge_labels is None):
            return False
        if self.edge_labels is not None and not np.array_equal(self.edge_labels, other.edge_labels):
            return False
        return bool(np.all(np.asarray(self.target) == np.asarray(other.target)))

    __hash__ = None

    def __repr__(self):
        return f"Graph(n={self.num_nodes}, m={self.num_edges}, target={self.target!r})"


@dataclass(frozen=True)
class Split:
    train: tuple[int, ...]
    test: tuple[int, ...]
    validation: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        out = {"train": list(self.train), "test": list(self.test)}
        if self.validation is not None:
            out["validation"] = list(self.validation)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Split":
        val = obj.get("validation", obj.get("val"))
        return cls(
            tuple(int(i) for i in obj["train"]),
            tuple(int(i) for i in obj["test"]),
            None if val is None else tuple(int(i) for i in val),
        )


@dataclass
class Dataset:
    graphs: list[Graph]
    name: str
    task: str = "classification"
    num_classes: int = 0
    splits: list[Split] | None = None
    num_targets: int = 1

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ContractViolation(f"unknown task {self.task!r}")
        if self.task == "classification":
            for g in self.graphs:
                t = int(g.target)
                if not 0 <= t < self.num_classes:
                    raise ContractViolation(f"class target {t} outside [0, {self.num_classes})")
        if self.splits:
            for s in self.splits:
                check_split(s, len(self.graphs))

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def targets(self) -> np.ndarray:
        if self.task == "classification":
            return np.array([int(g.target) for g in self.graphs], dtype=np.int64)
        return np.array([np.atleast_1d(np.asarray(g.target, dtype=np.float64)) for g in self.graphs])

    def fingerprint(self) -> str:
        """Content hash of structure and labels (targets excluded)."""
        h = hashlib.sha1()
        for g in self.graphs:
            h.update(np.int64(g.num_nodes).tobytes())
            h.update(np.ascontiguousarray(g.edges).tobytes())
            h.update(np.ascontiguousarray(g.node_labels).tobytes())
            if g.edge_labels is not None:
                h.update(np.ascontiguousarray(g.edge_labels).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.task == other.task
            and self.num_classes == other.num_classes
            and len(self.graphs) == len(other.graphs)
            and all(a == b for a, b in zip(self.graphs, other.graphs))
        )


def check_split(split: Split, num_graphs: int) -> None:
    parts = [split.train, split.test] + ([split.validation] if split.validation is not None else [])
    seen: set[int] = set()
    for part in parts:
        for i in part:
            if not 0 <= i < num_graphs:
                raise ContractViolation(f"split index {i} out of range")
            if i in seen:
                raise ContractViolation(f"split index {i} appears in more than one part")
            seen.add(i)


# ---------------------------------------------------------------------------
# permutations


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on node indices: new node ``i`` is old node ``mapping[i]``."""

    mapping: np.ndarray = field()

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise ContractViolation("mapping is not a bijection")
        object.__setattr__(self, "mapping", m)

    @property
    def size(self) -> int:
        return int(self.mapping.size)

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.size)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """Permutation equivalent to applying ``self`` and then ``other``."""
        return Permutation(self.mapping[other.mapping])

    def apply_rows(self, x: np.ndarray) -> np.ndarray:
        """Permute rows of a node feature matrix the same way as the graph."""
        return np.asarray(x)[self.mapping]

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(rng.permutation(n))


def apply_permutation(g: Graph, p: Permutation) -> Graph:
    """Relabel nodes so that node ``i`` of the result is node ``p(i)`` of ``g``."""
    if p.size != g.num_nodes:
        raise ContractViolation(f"permutation of size {p.size} for a graph with {g.num_nodes} nodes")
    inv = p.inverse().mapping
    edges = inv[g.edges] if g.num_edges else g.edges
    return Graph.from_edges(
        g.num_nodes, edges, g.node_labels[p.mapping], g.edge_labels, g.target
    )


# ---------------------------------------------------------------------------
# distances


class PairDistances(NamedTuple):
    """Ordered node pairs of one graph with their hop distance, sorted by (src, dst)."""

    src: np.ndarray
    dst: np.ndarray
    dist: np.ndarray

    def __len__(self):
        return int(self.src.shape[0])


def bfs_distances(g: Graph, d_max: int) -> PairDistances:
    """All ordered pairs at hop distance ``<= d_max``, self pairs included.

    Pairs in different components are absent. Unweighted shortest paths
    cost O(n(n+m)).
    """
    if d_max < 0:
        raise ContractViolation("d_max must be non-negative")
    n = g.num_nodes
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PairDistances(empty, empty.copy(), empty.copy())
    if g.num_edges == 0:
        idx = np.arange(n, dtype=np.int64)
        return PairDistances(idx, idx.copy(), np.zeros(n, dtype=np.int64))
    indptr, indices = g.csr
    adj = csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(n, n))
    d = shortest_path(adj, method="D", directed=False, unweighted=True)
    src, dst = np.nonzero(d <= d_max)
    return PairDistances(
        src.astype(np.int64), dst.astype(np.int64), d[src, dst].astype(np.int64)
    )


@dataclass
class DistanceMap:
    d_max: int
    pairs: list[PairDistances]

    def __getitem__(self, i) -> PairDistances:
        return self.pairs[i]

    def __len__(self):
        return len(self.pairs)


def compute_distance_map(ds: Dataset | Sequence[Graph], d_max: int) -> DistanceMap:
    graphs = ds.graphs if isinstance(ds, Dataset) else ds
    return DistanceMap(d_max, [bfs_distances(g, d_max) for g in graphs])


def is_connected(g: Graph) -> bool:
    if g.num_nodes <= 1:
        return True
    pd = bfs_distances(g, g.num_nodes)
    return int(np.count_nonzero(pd.src == 0)) == g.num_nodes


def diameter(g: Graph) -> int:
    """Largest finite shortest-path distance (0 for graphs without edges)."""
    pd = bfs_distances(g, max(g.num_nodes, 1))
    return int(pd.dist.max()) if len(pd) else 0


def dataset_statistics(ds: Dataset) -> dict:
    """Graph, node, edge, diameter and label summaries, JSON-serialisable."""
    if not ds.graphs:
        raise DataError("empty dataset")
    nodes = np.array([g.num_nodes for g in ds.graphs])
    edges = np.array([g.num_edges for g in ds.graphs])
    diams = np.array([diameter(g) for g in ds.graphs])
    node_alphabet = np.unique(np.concatenate([g.node_labels for g in ds.graphs]))
    edge_sets = [g.edge_labels for g in ds.graphs if g.edge_labels is not None and g.edge_labels.size]
    edge_alphabet = np.unique(np.concatenate(edge_sets)) if edge_sets else np.zeros(0)

    def summary(a):
        return {"max": int(a.max()), "avg": round(float(a.mean()), 4), "min": int(a.min())}

    hist = np.bincount(diams)
    return {
        "name": ds.name,
        "num_graphs": len(ds.graphs),
        "task": ds.task,
        "num_classes": ds.num_classes,
        "nodes": summary(nodes),
        "edges": summary(edges),
        "diameter": summary(diams),
        "diameter_histogram": {str(d): int(c) for d, c in enumerate(hist) if c},
        "node_label_alphabet_size": int(node_alphabet.size),
        "edge_label_alphabet_size": int(edge_alphabet.size),
    }
