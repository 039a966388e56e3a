"""Node labeling functions and dataset-global label dictionaries.

Every labeling computes a structural signature per node, encodes it as
bytes and maps it through a :class:`LabelDictionary` to a dense id. Ids are
handed out in first-occurrence order (graphs by index, nodes by index), so
the same dataset always yields the same ids.
"""

from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .counting import clique_participation, cycle_participation
from .errors import ConfigError, ContractViolation
from .graph import Dataset, Graph

log = logging.getLogger(__name__)

UNSEEN = -1
"""Id for signatures missing from a frozen dictionary; carries zero weight downstream."""

KINDS = ("raw", "degree", "wl", "pattern", "clique", "combined")


@dataclass(frozen=True)
class LabelingSpec:
    kind: str
    depth: int = 0
    use_edge_labels: bool = False
    init: str = "raw"
    cycles: str = "simple"
    min_len: int = 3
    max_len: int = 0
    max_size: int = 0
    parts: tuple["LabelingSpec", ...] = ()
    max_alphabet: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown labeling kind {self.kind!r}")
        if self.kind == "wl":
            if self.depth < 0:
                raise ConfigError("wl depth must be >= 0")
            if self.init not in ("raw", "uniform"):
                raise ConfigError(f"wl init must be raw or uniform, not {self.init!r}")
        if self.kind == "pattern":
            if self.cycles not in ("simple", "induced"):
                raise ConfigError(f"cycles must be simple or induced, not {self.cycles!r}")
            if self.max_len < 3 or not 3 <= self.min_len <= self.max_len:
                raise ConfigError("pattern needs 3 <= min_len <= max_len")
        if self.kind == "clique" and self.max_size < 1:
            raise ConfigError("clique max_size must be >= 1")
        if self.kind == "combined" and not self.parts:
            raise ConfigError("combined labeling needs at least one part")
        if self.max_alphabet is not None and self.max_alphabet < 1:
            raise ConfigError("max_alphabet must be >= 1")

    # -- canonical text form -------------------------------------------------

    def fingerprint(self) -> str:
        args: list[str] = []
        if self.kind == "wl":
            args = [f"depth={self.depth}", f"edges={int(self.use_edge_labels)}", f"init={self.init}"]
        elif self.kind == "pattern":
            args = [f"cycles={self.cycles}", f"min_len={self.min_len}", f"max_len={self.max_len}"]
        elif self.kind == "clique":
            args = [f"max_size={self.max_size}"]
        elif self.kind == "combined":
            args = [p.fingerprint() for p in self.parts]
        if self.max_alphabet is not None:
            args.append(f"cap={self.max_alphabet}")
        return f"{self.kind}({','.join(args)})" if args else self.kind

    def __str__(self):
        return self.fingerprint()

    @classmethod
    def parse(cls, text: str) -> "LabelingSpec":
        """Inverse of :meth:`fingerprint`; omitted keyword arguments take defaults."""
        spec, rest = _parse_spec(text.replace(" ", ""), 0)
        if rest != len(text.replace(" ", "")):
            raise ConfigError(f"trailing characters in labeling spec {text!r}")
        return spec


def _split_args(text: str, pos: int) -> tuple[list[str], int]:
    """Split a parenthesised argument list starting at ``text[pos] == '('``."""
    depth, start, args = 0, pos + 1, []
    for i in range(pos, len(text)):
        c = text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                if text[start:i]:
                    args.append(text[start:i])
                return args, i + 1
        elif c == "," and depth == 1:
            args.append(text[start:i])
            start = i + 1
    raise ConfigError(f"unbalanced parentheses in {text!r}")


def _parse_spec(text: str, pos: int) -> tuple[LabelingSpec, int]:
    i = pos
    while i < len(text) and (text[i].isalnum() or text[i] == "_"):
        i += 1
    kind = text[pos:i]
    if kind not in KINDS:
        raise ConfigError(f"unknown labeling kind {kind!r} in {text!r}")
    args: list[str] = []
    if i < len(text) and text[i] == "(":
        args, i = _split_args(text, i)
    kw: dict = {}
    parts = []
    for a in args:
        if "=" in a and "(" not in a.split("=", 1)[0]:
            key, val = a.split("=", 1)
            kw[key] = val
        elif kind == "combined":
            sub, end = _parse_spec(a, 0)
            if end != len(a):
                raise ConfigError(f"bad labeling part {a!r}")
            parts.append(sub)
        else:
            raise ConfigError(f"bad argument {a!r} for labeling {kind!r}")
    try:
        fields: dict = {}
        if "cap" in kw:
            fields["max_alphabet"] = int(kw.pop("cap"))
        if kind == "wl":
            fields["depth"] = int(kw.pop("depth", 1))
            fields["use_edge_labels"] = kw.pop("edges", "0") in ("1", "true", "True")
            fields["init"] = kw.pop("init", "raw")
        elif kind == "pattern":
            fields["cycles"] = kw.pop("cycles", "simple")
            fields["max_len"] = int(kw.pop("max_len"))
            fields["min_len"] = int(kw.pop("min_len", 3))
        elif kind == "clique":
            fields["max_size"] = int(kw.pop("max_size"))
        elif kind == "combined":
            fields["parts"] = tuple(parts)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad arguments for labeling {kind!r}: {exc}") from exc
    if kw:
        raise ConfigError(f"unknown argument(s) {sorted(kw)} for labeling {kind!r}")
    return LabelingSpec(kind, **fields), i


def as_spec(spec) -> LabelingSpec:
    return spec if isinstance(spec, LabelingSpec) else LabelingSpec.parse(str(spec))


# ---------------------------------------------------------------------------
# dictionaries and assignments


def encode_ints(values) -> bytes:
    """Length-prefixed little-endian int64 encoding of an integer sequence."""
    vals = [int(v) for v in values]
    return struct.pack(f"<q{len(vals)}q", len(vals), *vals)


@dataclass
class LabelDictionary:
    """Injective map from signatures to dense ids, in insertion order.

    With ``cap = N`` the first ``N - 1`` signatures get their own id and all
    later ones share the reserved overflow id ``N - 1``.
    """

    cap: int | None = None
    ids: dict[bytes, int] = field(default_factory=dict)
    log: list[bytes] = field(default_factory=list)
    frozen: bool = False
    overflow: int = 0

    @property
    def other_id(self) -> int | None:
        return None if self.cap is None else self.cap - 1

    @property
    def alphabet_size(self) -> int:
        return len(self.log) + (1 if self.overflow else 0)

    def lookup(self, sig: bytes) -> int:
        got = self.ids.get(sig)
        if got is not None:
            return got
        if self.frozen:
            return UNSEEN
        if self.cap is not None and len(self.log) >= self.cap - 1:
            self.overflow += 1
            return self.cap - 1
        idx = len(self.log)
        self.ids[sig] = idx
        self.log.append(sig)
        return idx


@dataclass
class LabelAssignment:
    labels: list[np.ndarray]
    dictionary: LabelDictionary
    spec: LabelingSpec | None = None

    @property
    def alphabet_size(self) -> int:
        return self.dictionary.alphabet_size

    def __getitem__(self, i) -> np.ndarray:
        return self.labels[i]

    def __len__(self):
        return len(self.labels)


def label_histogram(assign: LabelAssignment, graph_index: int) -> dict[int, int]:
    labels = assign.labels[graph_index]
    return dict(sorted(Counter(labels.tolist()).items()))


# ---------------------------------------------------------------------------
# signatures


def _pattern_rows(g: Graph, spec: LabelingSpec) -> np.ndarray:
    return cycle_participation(g, spec.max_len, spec.min_len, induced=spec.cycles == "induced")


def _signatures(g: Graph, spec: LabelingSpec) -> list[bytes]:
    if spec.kind == "raw":
        return [encode_ints((x,)) for x in g.node_labels.tolist()]
    if spec.kind == "degree":
        return [encode_ints((x,)) for x in g.degrees.tolist()]
    if spec.kind == "pattern":
        return [encode_ints(row) for row in _pattern_rows(g, spec).tolist()]
    if spec.kind == "clique":
        return [encode_ints(row) for row in clique_participation(g, spec.max_size).tolist()]
    raise AssertionError(spec.kind)


def _wl_signatures(g: Graph, current: np.ndarray, use_edge_labels: bool) -> list[bytes]:
    cur = current.tolist()
    out = []
    elab = g.edge_label_lookup if use_edge_labels else None
    for v, nbrs in enumerate(g.adjacency):
        if elab is None:
            multiset = sorted(cur[u] for u in nbrs)
            out.append(encode_ints([cur[v], len(multiset), *multiset]))
        else:
            pairs = sorted((elab[(v, u)], cur[u]) for u in nbrs)
            out.append(encode_ints([cur[v], len(pairs), *(x for p in pairs for x in p)]))
    return out


def _assign(sigs_per_graph: list[list[bytes]], dictionary: LabelDictionary, fit: Sequence[int] | None):
    out: list[np.ndarray | None] = [None] * len(sigs_per_graph)
    order = range(len(sigs_per_graph)) if fit is None else sorted(fit)
    for gi in order:
        out[gi] = np.array([dictionary.lookup(s) for s in sigs_per_graph[gi]], dtype=np.int64)
    if fit is not None:
        dictionary.frozen = True
        for gi in range(len(sigs_per_graph)):
            if out[gi] is None:
                out[gi] = np.array([dictionary.lookup(s) for s in sigs_per_graph[gi]], dtype=np.int64)
    if dictionary.overflow:
        log.warning("label alphabet cap %s exceeded %d times", dictionary.cap, dictionary.overflow)
    return out


class Labeler:
    """Fits the dictionaries of a labeling on a dataset and labels new graphs.

    WL labelings keep one dictionary per refinement round.
    """

    def __init__(self, spec):
        self.spec = as_spec(spec)
        self.dictionaries: list[LabelDictionary] = []
        self.children: list[Labeler] = []

    def fit(self, graphs: Sequence[Graph], fit_indices: Sequence[int] | None = None) -> LabelAssignment:
        spec = self.spec
        if spec.kind == "wl":
            init = LabelingSpec("raw") if spec.init == "raw" else None
            if init is None:
                current = [np.zeros(g.num_nodes, dtype=np.int64) for g in graphs]
                cur_dict = LabelDictionary()
                cur_dict.lookup(encode_ints((0,)))
            else:
                base = Labeler(replace(init, max_alphabet=spec.max_alphabet if spec.depth == 0 else None))
                res = base.fit(graphs, fit_indices)
                current, cur_dict = res.labels, res.dictionary
            self.dictionaries = [cur_dict]
            for _ in range(spec.depth):
                cap = spec.max_alphabet if len(self.dictionaries) == spec.depth else None
                d = LabelDictionary(cap)
                sigs = [_wl_signatures(g, cur, spec.use_edge_labels) for g, cur in zip(graphs, current)]
                current = _assign(sigs, d, fit_indices)
                self.dictionaries.append(d)
            return LabelAssignment(current, self.dictionaries[-1], spec)
        if spec.kind == "combined":
            self.children = [Labeler(p) for p in spec.parts]
            subs = [c.fit(graphs, fit_indices).labels for c in self.children]
            sigs = [
                [encode_ints(col) for col in np.stack([s[gi] for s in subs], axis=1).tolist()]
                for gi in range(len(graphs))
            ]
        else:
            sigs = [_signatures(g, spec) for g in graphs]
        d = LabelDictionary(spec.max_alphabet)
        labels = _assign(sigs, d, fit_indices)
        self.dictionaries = [d]
        return LabelAssignment(labels, d, spec)

    def transform(self, graphs: Sequence[Graph]) -> list[np.ndarray]:
        """Label graphs outside the fitted set with the frozen dictionaries."""
        if not self.dictionaries:
            raise ContractViolation("labeler is not fitted")
        spec = self.spec

        def look(d: LabelDictionary, sigs):
            was, d.frozen = d.frozen, True
            try:
                return np.array([d.lookup(s) for s in sigs], dtype=np.int64)
            finally:
                d.frozen = was

        if spec.kind == "wl":
            if spec.init == "raw":
                current = [look(self.dictionaries[0], _signatures(g, LabelingSpec("raw"))) for g in graphs]
            else:
                current = [np.zeros(g.num_nodes, dtype=np.int64) for g in graphs]
            for d in self.dictionaries[1:]:
                current = [look(d, _wl_signatures(g, c, spec.use_edge_labels)) for g, c in zip(graphs, current)]
            return current
        if spec.kind == "combined":
            subs = [c.transform(graphs) for c in self.children]
            return [
                look(self.dictionaries[0], [encode_ints(col) for col in np.stack([s[gi] for s in subs], 1).tolist()])
                for gi in range(len(graphs))
            ]
        return [look(self.dictionaries[0], _signatures(g, spec)) for g in graphs]


def compute_labels(ds: Dataset | Sequence[Graph], spec, fit_indices: Sequence[int] | None = None) -> LabelAssignment:
    """Label every node of ``ds`` with ``spec``.

    With ``fit_indices`` the dictionaries see only those graphs; nodes of
    other graphs whose signature never occurred there get :data:`UNSEEN`.
    """
    graphs = ds.graphs if isinstance(ds, Dataset) else list(ds)
    return Labeler(spec).fit(graphs, fit_indices)


def wl_refine_once(ds: Dataset | Sequence[Graph], current: LabelAssignment, use_edge_labels: bool = False) -> LabelAssignment:
    """One WL round: hash each node's label with the multiset of its neighbors' labels."""
    graphs = ds.graphs if isinstance(ds, Dataset) else list(ds)
    if len(graphs) != len(current.labels):
        raise ContractViolation("assignment does not cover the dataset")
    d = LabelDictionary()
    sigs = [_wl_signatures(g, cur, use_edge_labels) for g, cur in zip(graphs, current.labels)]
    return LabelAssignment(_assign(sigs, d, None), d, None)
