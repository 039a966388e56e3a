"""Shared parameter tables and the parameter pool.

A :class:`TripleTable` maps ordered keys ``(target label, source label,
relation)`` to indices into one flat block of message weights; a
:class:`NodeWeightMap` maps single labels to rows of a block of k-vectors.
Keys missing from a table stand for weight zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .graph import Graph, PairDistances

HOP, SELF_LOOP, EDGE_REL = 0, 1, 2
_KIND_NAMES = {HOP: "hop", SELF_LOOP: "self_loop", EDGE_REL: "edge_rel"}


@dataclass(frozen=True, order=True)
class RelationKey:
    kind: int
    value: int = 0

    @classmethod
    def hop(cls, d: int) -> "RelationKey":
        return cls(HOP, int(d))

    @classmethod
    def self_loop(cls) -> "RelationKey":
        return cls(SELF_LOOP, 0)

    @classmethod
    def edge_rel(cls, label: int) -> "RelationKey":
        return cls(EDGE_REL, int(label))

    def __str__(self):
        if self.kind == SELF_LOOP:
            return "self_loop"
        return f"{_KIND_NAMES[self.kind]}({self.value})"

    @classmethod
    def parse(cls, text: str) -> "RelationKey":
        if text == "self_loop":
            return cls.self_loop()
        m = re.fullmatch(r"(hop|edge_rel)\((-?\d+)\)", text)
        if not m:
            raise ConfigError(f"bad relation {text!r}")
        return cls(HOP if m.group(1) == "hop" else EDGE_REL, int(m.group(2)))


class TripleKey(NamedTuple):
    target_label: int
    source_label: int
    relation: RelationKey


class PairList(NamedTuple):
    """Ordered node pairs of one graph with their relation codes."""

    rows: np.ndarray  # message target
    cols: np.ndarray  # message source
    kind: np.ndarray
    value: np.ndarray


def graph_pairs(g: Graph, dist: PairDistances | None, mode: str, allowed: Iterable[int] = ()) -> PairList:
    """Pairs that can carry a message under ``mode`` (``distances`` or ``edges``)."""
    if mode == "distances":
        if dist is None:
            raise ContractViolation("distance mode needs precomputed distances")
        allowed = np.array(sorted(set(int(d) for d in allowed)), dtype=np.int64)
        keep = np.isin(dist.dist, allowed)
        d = dist.dist[keep]
        return PairList(dist.src[keep], dist.dst[keep], np.zeros_like(d), d)
    if mode == "edges":
        n = g.num_nodes
        e = g.edges
        elab = g.edge_labels if g.edge_labels is not None else np.zeros(g.num_edges, dtype=np.int64)
        loops = np.arange(n, dtype=np.int64)
        rows = np.concatenate([loops, e[:, 0], e[:, 1]])
        cols = np.concatenate([loops, e[:, 1], e[:, 0]])
        kind = np.concatenate([np.full(n, SELF_LOOP), np.full(2 * g.num_edges, EDGE_REL)]).astype(np.int64)
        value = np.concatenate([np.zeros(n, dtype=np.int64), elab, elab])
        return PairList(rows, cols, kind, value)
    raise ConfigError(f"unknown relation mode {mode!r}")


def _pack(columns: Sequence[np.ndarray], radices: Sequence[int]) -> np.ndarray:
    code = np.zeros(columns[0].shape[0], dtype=np.int64)
    for col, r in zip(columns, radices):
        code = code * r + col
    return code


@dataclass
class TripleTable:
    """Sorted valid triples with dataset occurrence counts.

    ``keys`` is an ``(K, 4)`` array of ``(target, source, kind, value)``
    rows in lexicographic order; row ``p`` owns message parameter ``p``.
    """

    keys: np.ndarray
    counts: np.ndarray
    mode: str = "distances"
    allowed: tuple[int, ...] = ()
    prune_min: int = 1

    def __len__(self):
        return int(self.keys.shape[0])

    @classmethod
    def empty(cls, mode="distances", allowed=()):
        return cls(np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=np.int64), mode, tuple(allowed))

    def triple_keys(self) -> list[TripleKey]:
        return [TripleKey(t, s, RelationKey(k, v)) for t, s, k, v in self.keys.tolist()]

    def occurrence(self) -> dict[TripleKey, int]:
        return dict(zip(self.triple_keys(), self.counts.tolist()))

    def index_rows(self, rows: np.ndarray) -> np.ndarray:
        """Parameter index for each ``(target, source, kind, value)`` row, -1 when absent."""
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
        out = np.full(rows.shape[0], -1, dtype=np.int64)
        if not len(self) or not rows.shape[0]:
            return out
        lo = np.minimum(self.keys.min(axis=0), rows.min(axis=0))
        radices = (np.maximum(self.keys.max(axis=0), rows.max(axis=0)) - lo + 1).tolist()
        if float(np.prod(np.array(radices, dtype=np.float64))) >= 2.0**62:
            raise ContractViolation("label alphabet too large to pack triple keys")
        kc = _pack(list((self.keys - lo).T), radices)
        qc = _pack(list((rows - lo).T), radices)
        pos = np.searchsorted(kc, qc)
        pos_c = np.minimum(pos, kc.shape[0] - 1)
        hit = kc[pos_c] == qc
        out[hit] = pos_c[hit]
        return out

    def index(self, target_label: int, source_label: int, relation: RelationKey) -> int:
        row = np.array([[target_label, source_label, relation.kind, relation.value]])
        return int(self.index_rows(row)[0])

    def pair_index(self, pairs: PairList, labels: np.ndarray) -> np.ndarray:
        """Parameter index of every pair of one graph (-1 for absent triples)."""
        labels = np.asarray(labels)
        rows = np.stack([labels[pairs.rows], labels[pairs.cols], pairs.kind, pairs.value], axis=1)
        idx = self.index_rows(rows)
        idx[(labels[pairs.rows] < 0) | (labels[pairs.cols] < 0)] = -1
        return idx

    def pruned(self, prune_min: int) -> "TripleTable":
        keep = self.counts >= prune_min
        if not np.any(keep):
            raise ConfigError(f"no triple occurs at least {prune_min} times; lower the pruning threshold")
        return TripleTable(self.keys[keep], self.counts[keep], self.mode, self.allowed, max(prune_min, self.prune_min))


def build_triple_table(graphs: Sequence[Graph], labels: Sequence[np.ndarray], dist, allowed_distances=(),
                       prune_min: int = 1, mode: str = "distances",
                       count_graphs: Sequence[int] | None = None) -> TripleTable:
    """Collect every triple occurring among the ordered pairs that can carry a message.

    ``dist`` is a :class:`~sharegnn.graph.DistanceMap` (or per-graph list of
    :class:`~sharegnn.graph.PairDistances`); it is ignored in ``edges``
    mode. Only the graphs in ``count_graphs`` contribute (all by default).
    """
    if prune_min < 1:
        raise ConfigError("prune_min must be >= 1")
    if mode not in ("distances", "edges"):
        raise ConfigError(f"unknown relation mode {mode!r}")
    graphs = getattr(graphs, "graphs", graphs)
    labels = getattr(labels, "labels", labels)
    if len(labels) != len(graphs):
        raise ContractViolation("labels do not cover the dataset")
    allowed = tuple(sorted(set(int(d) for d in allowed_distances)))
    if mode == "distances":
        if dist is None or len(dist) != len(graphs):
            raise ContractViolation("distances do not cover the dataset")
        if allowed and getattr(dist, "d_max", max(allowed)) < max(allowed):
            raise ContractViolation(f"distances were computed up to {dist.d_max}, below {max(allowed)}")
    chunks = []
    for gi in (range(len(graphs)) if count_graphs is None else sorted(count_graphs)):
        pairs = graph_pairs(graphs[gi], None if mode == "edges" else dist[gi], mode, allowed)
        lab = np.asarray(labels[gi])
        rows = np.stack([lab[pairs.rows], lab[pairs.cols], pairs.kind, pairs.value], axis=1)
        chunks.append(rows[(rows[:, 0] >= 0) & (rows[:, 1] >= 0)])
    allrows = np.concatenate(chunks) if chunks else np.zeros((0, 4), dtype=np.int64)
    if allrows.shape[0]:
        keys, counts = np.unique(allrows, axis=0, return_counts=True)
    else:
        keys, counts = np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=np.int64)
    table = TripleTable(keys.astype(np.int64), counts.astype(np.int64), mode, allowed, 1)
    if prune_min > 1:
        table = table.pruned(prune_min)
    return table


@dataclass
class NodeWeightMap:
    """Sorted labels owning one k-vector each; other labels map to the zero vector."""

    labels: np.ndarray
    counts: np.ndarray
    width: int

    def __len__(self):
        return int(self.labels.shape[0])

    def index_of(self, node_labels) -> np.ndarray:
        node_labels = np.asarray(node_labels, dtype=np.int64)
        out = np.full(node_labels.shape, -1, dtype=np.int64)
        if not len(self):
            return out
        pos = np.minimum(np.searchsorted(self.labels, node_labels), len(self) - 1)
        hit = self.labels[pos] == node_labels
        out[hit] = pos[hit]
        return out


def build_node_weight_map(graphs, labels, width: int, prune_min: int = 1,
                          count_graphs: Sequence[int] | None = None) -> NodeWeightMap:
    if width < 1:
        raise ConfigError("vector width must be >= 1")
    if prune_min < 1:
        raise ConfigError("prune_min must be >= 1")
    labels = getattr(labels, "labels", labels)
    sel = range(len(labels)) if count_graphs is None else sorted(count_graphs)
    allv = np.concatenate([np.asarray(labels[i], dtype=np.int64) for i in sel]) if len(sel) else np.zeros(0, np.int64)
    allv = allv[allv >= 0]
    uniq, counts = np.unique(allv, return_counts=True)
    keep = counts >= prune_min
    if uniq.size and not np.any(keep):
        raise ConfigError(f"no label occurs at least {prune_min} times; lower the pruning threshold")
    return NodeWeightMap(uniq[keep].astype(np.int64), counts[keep].astype(np.int64), int(width))


# ---------------------------------------------------------------------------
# parameter pool

PARAM_KINDS = ("message", "vector", "bias", "dense", "dense_bias")


@dataclass
class ParameterPool:
    """Named float64 blocks with matching gradient buffers, in creation order."""

    values: dict[str, np.ndarray] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)

    def add(self, name: str, shape, kind: str) -> np.ndarray:
        if kind not in PARAM_KINDS:
            raise ContractViolation(f"unknown parameter kind {kind!r}")
        if name in self.values:
            raise ContractViolation(f"duplicate parameter block {name!r}")
        self.values[name] = np.zeros(shape, dtype=np.float64)
        self.grads[name] = np.zeros(shape, dtype=np.float64)
        self.kinds[name] = kind
        return self.values[name]

    def __getitem__(self, name) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def names(self) -> list[str]:
        return list(self.values)

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def count(self, kind: str | None = None) -> int:
        return int(sum(v.size for n, v in self.values.items() if kind is None or self.kinds[n] == kind))

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParameterPool":
        return ParameterPool(
            {k: v.copy() for k, v in self.values.items()},
            {k: v.copy() for k, v in self.grads.items()},
            dict(self.kinds),
        )

    def load_values(self, values: dict[str, np.ndarray]):
        for name, arr in values.items():
            if name not in self.values or self.values[name].shape != np.shape(arr):
                raise ContractViolation(f"parameter block {name!r} does not match the model")
            self.values[name][...] = arr


@dataclass(frozen=True)
class InitScheme:
    """``constant(c)``, ``uniform(lo,hi)`` or ``zeros_for_bias``."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "zeros_for_bias"):
            raise ConfigError(f"unknown init scheme {self.kind!r}")
        if self.kind == "uniform" and self.a > self.b:
            raise ConfigError(f"uniform init needs lo <= hi, got ({self.a}, {self.b})")

    @classmethod
    def parse(cls, text: str) -> "InitScheme":
        text = text.replace(" ", "")
        if text == "zeros_for_bias":
            return cls("zeros_for_bias")
        m = re.fullmatch(r"(constant|uniform)\(([^)]*)\)", text)
        if not m:
            raise ConfigError(f"bad init scheme {text!r}")
        try:
            args = [float(x) for x in m.group(2).split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad init scheme {text!r}") from exc
        if m.group(1) == "constant" and len(args) == 1:
            return cls("constant", args[0])
        if m.group(1) == "uniform" and len(args) == 2:
            return cls("uniform", args[0], args[1])
        raise ConfigError(f"bad init scheme {text!r}")

    def __str__(self):
        if self.kind == "constant":
            return f"constant({self.a!r})"
        if self.kind == "uniform":
            return f"uniform({self.a!r},{self.b!r})"
        return self.kind


_BIAS_KINDS = ("bias", "dense_bias")


def init_pool(pool: ParameterPool, scheme, seed: int = 0, zero_bias: bool = True) -> None:
    """Fill ``pool`` deterministically.

    Bias blocks are zeroed (unless ``zero_bias`` is off); every other block is
    filled per ``scheme``. ``zeros_for_bias`` touches bias blocks only.
    """
    scheme = scheme if isinstance(scheme, InitScheme) else InitScheme.parse(str(scheme))
    rng = np.random.default_rng(seed)
    for name, arr in pool.values.items():
        is_bias = pool.kinds[name] in _BIAS_KINDS
        if scheme.kind == "zeros_for_bias":
            if is_bias:
                arr.fill(0.0)
            continue
        if is_bias and zero_bias:
            arr.fill(0.0)
        elif scheme.kind == "constant":
            arr.fill(scheme.a)
        else:
            arr[...] = rng.uniform(scheme.a, scheme.b, size=arr.shape)


def _block(pool, block):
    if isinstance(pool, ParameterPool):
        if block is None:
            raise ContractViolation("name the parameter block to read from the pool")
        return pool[block]
    return np.asarray(pool)


def lookup_message_weight(table: TripleTable, pool, target_label: int, source_label: int,
                          relation: RelationKey, block: str | None = None) -> float:
    """Weight for a triple, exactly 0.0 when the triple is not in the table."""
    idx = table.index(target_label, source_label, relation)
    return 0.0 if idx < 0 else float(_block(pool, block)[idx])


def lookup_node_weight(wmap: NodeWeightMap, pool, label: int, block: str | None = None) -> np.ndarray:
    """Vector for a label, the zero vector when the label has none."""
    idx = int(wmap.index_of([label])[0])
    if idx < 0:
        return np.zeros(wmap.width)
    return _block(pool, block)[idx].copy()
