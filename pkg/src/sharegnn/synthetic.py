"""Generators for the synthetic benchmarks.

Every generator is a pure function of its parameters and seed. Graph ``i``
draws from its own stream seeded by ``(seed, i)``; class assignments come
from a separate stream seeded by ``seed`` alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .counting import BENCHMARK_KINDS, count_vector
from .errors import ConfigError
from .graph import Dataset, Graph, Permutation, apply_permutation, diameter, is_connected
from .tu import write_tu_dataset

CSL_SKIPS = (2, 3, 4, 5, 6, 9, 11, 12, 13, 16)


def _graph_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _balanced_classes(num_graphs: int, num_classes: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 2**31 - 1])
    return rng.permutation(np.arange(num_graphs) % num_classes)


def ring_edges(n: int, offset: int = 0) -> np.ndarray:
    i = np.arange(n)
    return np.stack([i, (i + 1) % n], axis=1) + offset


# ---------------------------------------------------------------------------
# ring transfer


def gen_ring_transfer1(num_graphs: int, ring_size: int, seed: int) -> Dataset:
    """Rings with four special nodes labelled 1..4 spaced a quarter ring apart.

    The class says which special sits opposite the node labelled 1: class 0
    for label 2, class 1 for label 3, class 2 for label 4.
    """
    if ring_size < 8 or ring_size % 4:
        raise ConfigError(f"ring size must be >= 8 and divisible by 4, got {ring_size}")
    if num_graphs < 0 or num_graphs % 3:
        raise ConfigError(f"number of graphs must be divisible by 3, got {num_graphs}")
    classes = _balanced_classes(num_graphs, 3, seed)
    q = ring_size // 4
    edges = ring_edges(ring_size)
    graphs = []
    for gi, cls in enumerate(classes.tolist()):
        rng = _graph_rng(seed, gi)
        start = int(rng.integers(ring_size))
        slots = [(start + k * q) % ring_size for k in range(4)]
        opposite = 2 + cls
        rest = [lab for lab in (2, 3, 4) if lab != opposite]
        rest = [rest[i] for i in rng.permutation(2)]
        labels = np.zeros(ring_size, dtype=np.int64)
        labels[slots[0]] = 1
        labels[slots[2]] = opposite
        labels[slots[1]], labels[slots[3]] = rest
        graphs.append(Graph.from_edges(ring_size, edges, labels, target=cls))
    return Dataset(graphs, "ring_transfer_1", "classification", 3)


def ring_transfer2_class(labels) -> int:
    """0 if more opposite-pair label sums are even than odd, else 1."""
    labels = np.asarray(labels)
    half = labels.shape[0] // 2
    sums = labels + np.roll(labels, half)
    even = int(np.count_nonzero(sums % 2 == 0))
    return 0 if even > labels.shape[0] - even else 1


def ring_transfer3_class(labels) -> int:
    """Class from the parities of x (opposite label 0) and y + z (a quarter ring away)."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    zero = int(np.flatnonzero(labels == 0)[0])
    x = labels[(zero + n // 2) % n]
    yz = labels[(zero + n // 4) % n] + labels[(zero - n // 4) % n]
    return 2 * int(x % 2) + int(yz % 2)


def _labelled_rings(num_graphs, num_classes, classify, seed, name):
    n = 16
    classes = _balanced_classes(num_graphs, num_classes, seed)
    edges = ring_edges(n)
    graphs = []
    for gi, cls in enumerate(classes.tolist()):
        rng = _graph_rng(seed, gi)
        while True:
            labels = rng.permutation(n).astype(np.int64)
            if classify(labels) == cls:
                break
        graphs.append(Graph.from_edges(n, edges, labels, target=cls))
    return Dataset(graphs, name, "classification", num_classes)


def gen_ring_transfer2(num_graphs: int, seed: int) -> Dataset:
    """16-rings labelled by a permutation of 0..15, classed by opposite-pair sum parity."""
    if num_graphs < 0 or num_graphs % 2:
        raise ConfigError(f"number of graphs must be even, got {num_graphs}")
    return _labelled_rings(num_graphs, 2, ring_transfer2_class, seed, "ring_transfer_2")


def gen_ring_transfer3(num_graphs: int, seed: int) -> Dataset:
    if num_graphs < 0 or num_graphs % 4:
        raise ConfigError(f"number of graphs must be divisible by 4, got {num_graphs}")
    return _labelled_rings(num_graphs, 4, ring_transfer3_class, seed, "ring_transfer_3")


# ---------------------------------------------------------------------------
# circulant skip-link graphs


def csl_graph(n: int, skip: int) -> Graph:
    i = np.arange(n)
    edges = np.concatenate([ring_edges(n), np.stack([i, (i + skip) % n], axis=1)])
    return Graph.from_edges(n, edges)


def gen_csl(seed: int, per_class: int = 15, num_nodes: int = 41) -> Dataset:
    """Circulant skip-link graphs, one class per skip length, node ids shuffled."""
    graphs = []
    gi = 0
    for cls, skip in enumerate(CSL_SKIPS):
        base = csl_graph(num_nodes, skip)
        for _ in range(per_class):
            perm = Permutation.random(num_nodes, _graph_rng(seed, gi))
            g = apply_permutation(base, perm)
            graphs.append(Graph(g.num_nodes, g.edges, g.node_labels, None, cls))
            gi += 1
    return Dataset(graphs, "csl", "classification", len(CSL_SKIPS))


# ---------------------------------------------------------------------------
# snowflakes


@dataclass(frozen=True)
class MotifSet:
    motifs: tuple[Graph, ...]
    attachments: tuple[int, ...]

    def __post_init__(self):
        if len(self.motifs) != len(self.attachments):
            raise ConfigError("one attachment node per motif is required")
        for m, a in zip(self.motifs, self.attachments):
            if not 0 <= a < m.num_nodes:
                raise ConfigError(f"attachment node {a} out of range for a {m.num_nodes}-node motif")
            if not is_connected(m):
                raise ConfigError("motifs must be connected")

    def __len__(self):
        return len(self.motifs)


def default_motifs() -> MotifSet:
    """Four 15-node motifs that rooted 1-WL cannot tell apart.

    Each has a root (the attachment node) joined to two hubs; every hub is
    joined to six of twelve outer nodes, and the outer nodes form a
    2-regular graph: one 12-cycle, two 6-cycles, three 4-cycles or four
    triangles. The partition {root}, {hubs}, {outer} is equitable with the
    same degrees in all four, so colour refinement assigns identical
    colours, while the outer cycles make them pairwise non-isomorphic.

    These are stand-ins chosen for that property, not a reproduction of any
    published motif family.
    """
    motifs = []
    for cycle_len in (12, 6, 4, 3):
        edges = [(0, 1), (0, 2)]
        outer = list(range(3, 15))
        for b in outer:
            edges.append((1 if b % 2 == 0 else 2, b))
        for lo in range(0, 12, cycle_len):
            block = outer[lo:lo + cycle_len]
            edges.extend((block[k], block[(k + 1) % cycle_len]) for k in range(cycle_len))
        motifs.append(Graph.from_edges(15, edges))
    return MotifSet(tuple(motifs), (0, 0, 0, 0))


def attach_motifs(ring_len: int, motifs: MotifSet, choice) -> tuple[int, np.ndarray]:
    """Ring of ``ring_len`` nodes with motif ``choice[k]`` glued onto ring node ``k``.

    The motif's attachment node is identified with the ring node. Returns
    the node count and the edge array.
    """
    edges = [ring_edges(ring_len)] if ring_len >= 3 else []
    nxt = ring_len
    for k, mi in enumerate(choice):
        m, a = motifs.motifs[mi], motifs.attachments[mi]
        mapping = np.empty(m.num_nodes, dtype=np.int64)
        others = [v for v in range(m.num_nodes) if v != a]
        mapping[others] = np.arange(nxt, nxt + len(others))
        mapping[a] = k
        nxt += len(others)
        if m.num_edges:
            edges.append(mapping[m.edges])
    return nxt, np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)


def gen_snowflakes(num_graphs: int, motifs: MotifSet | None, seed: int,
                   min_ring: int = 3, max_ring: int = 12) -> Dataset:
    """Rings with a motif glued onto every ring node; the class is the motif at the node labelled 1."""
    motifs = default_motifs() if motifs is None else motifs
    if len(motifs) < 2:
        raise ConfigError("snowflakes needs at least two motifs")
    if not 3 <= min_ring <= max_ring:
        raise ConfigError("ring length bounds must satisfy 3 <= min <= max")
    k = len(motifs)
    classes = _balanced_classes(num_graphs, k, seed)
    graphs = []
    for gi, cls in enumerate(classes.tolist()):
        rng = _graph_rng(seed, gi)
        ring_len = int(rng.integers(min_ring, max_ring + 1))
        choice = rng.integers(k, size=ring_len)
        marked = int(rng.integers(ring_len))
        choice[marked] = cls
        n, edges = attach_motifs(ring_len, motifs, choice.tolist())
        labels = np.zeros(n, dtype=np.int64)
        labels[marked] = 1
        graphs.append(Graph.from_edges(n, edges, labels, target=cls))
    return Dataset(graphs, "snowflakes", "classification", k)


# ---------------------------------------------------------------------------
# substructure counting


def random_connected_graph(rng: np.random.Generator, num_nodes: int, num_edges: int) -> Graph:
    """Uniform random spanning tree skeleton plus uniformly chosen extra edges."""
    order = rng.permutation(num_nodes)
    tree = [(int(order[i]), int(order[rng.integers(i)])) for i in range(1, num_nodes)]
    present = {tuple(sorted(e)) for e in tree}
    iu, ju = np.triu_indices(num_nodes, 1)
    free = [(int(a), int(b)) for a, b in zip(iu, ju) if (a, b) not in present]
    extra = max(0, min(num_edges - len(tree), len(free)))
    pick = rng.choice(len(free), size=extra, replace=False) if extra else []
    edges = tree + [free[i] for i in pick]
    return Graph.from_edges(num_nodes, edges)


def gen_counting(num_graphs: int, seed: int, min_nodes: int = 10, max_nodes: int = 30,
                 min_edges: int = 20, max_edges: int = 45, max_diameter: int = 10) -> Dataset:
    """Random connected graphs with their six substructure counts as regression targets.

    Targets are the raw counts; see :func:`normalize_targets`.
    """
    if not 1 <= min_nodes <= max_nodes:
        raise ConfigError("node count bounds must satisfy 1 <= min <= max")
    graphs = []
    for gi in range(num_graphs):
        rng = _graph_rng(seed, gi)
        while True:
            n = int(rng.integers(min_nodes, max_nodes + 1))
            lo = max(min_edges, n - 1)
            hi = min(max_edges, n * (n - 1) // 2)
            if lo > hi:
                continue
            g = random_connected_graph(rng, n, int(rng.integers(lo, hi + 1)))
            if diameter(g) <= max_diameter:
                break
        target = tuple(count_vector(g).tolist())
        graphs.append(Graph(g.num_nodes, g.edges, g.node_labels, None, target))
    return Dataset(graphs, "substructure_counting", "regression", 0, None, len(BENCHMARK_KINDS))


def normalize_targets(ds: Dataset) -> tuple[Dataset, np.ndarray]:
    """Divide every regression target column by its dataset standard deviation."""
    y = np.asarray(ds.targets, dtype=np.float64).reshape(len(ds), -1)
    std = y.std(axis=0)
    std[std == 0] = 1.0
    scaled = y / std
    graphs = []
    for g, row in zip(ds.graphs, scaled):
        t = float(row[0]) if row.shape[0] == 1 else tuple(row.tolist())
        graphs.append(Graph(g.num_nodes, g.edges, g.node_labels, g.edge_labels, t))
    return Dataset(graphs, ds.name, ds.task, ds.num_classes, ds.splits, ds.num_targets), std


def select_target(ds: Dataset, column: int) -> Dataset:
    """Single-target regression dataset from one column of a multi-target one."""
    graphs = []
    for g in ds.graphs:
        t = float(np.atleast_1d(np.asarray(g.target, dtype=np.float64))[column])
        graphs.append(Graph(g.num_nodes, g.edges, g.node_labels, g.edge_labels, t))
    return Dataset(graphs, ds.name, ds.task, 0, ds.splits, 1)


# ---------------------------------------------------------------------------
# registry used by the command line


GENERATORS = {
    "ring-transfer-1": (lambda p, s: gen_ring_transfer1(p.get("count", 1200), p.get("size", 100), s),
                        {"count": 1200, "size": 100}),
    "ring-transfer-2": (lambda p, s: gen_ring_transfer2(p.get("count", 1200), s), {"count": 1200}),
    "ring-transfer-3": (lambda p, s: gen_ring_transfer3(p.get("count", 1200), s), {"count": 1200}),
    "csl": (lambda p, s: gen_csl(s), {}),
    "snowflakes": (lambda p, s: gen_snowflakes(p.get("count", 1000), None, s), {"count": 1000}),
    "counting": (lambda p, s: gen_counting(p.get("count", 5000), s), {"count": 5000}),
}


def generate(name: str, params: dict | None, seed: int) -> Dataset:
    if name not in GENERATORS:
        raise ConfigError(f"unknown generator {name!r}; choose from {', '.join(sorted(GENERATORS))}")
    fn, defaults = GENERATORS[name]
    merged = dict(defaults)
    for key, val in (params or {}).items():
        if val is None:
            continue
        if key not in defaults:
            raise ConfigError(f"generator {name!r} takes no parameter {key!r}")
        merged[key] = val
    return fn(merged, seed)


def write_generated(ds: Dataset, out_dir, generator: str, params: dict, seed: int) -> Path:
    """Write ``ds`` in TU format next to a ``manifest.json`` describing its origin."""
    root = write_tu_dataset(ds, out_dir, ds.name)
    manifest = {
        "generator": generator,
        "params": params,
        "seed": seed,
        "name": ds.name,
        "num_graphs": len(ds),
        "fingerprint": ds.fingerprint(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root
