"""Reading and writing the TU benchmark text format.

A dataset ``DS`` lives in one directory as

* ``DS_A.txt`` -- one edge per line, ``"u, v"`` with 1-based global node ids
* ``DS_graph_indicator.txt`` -- graph id (1-based) of every node
* ``DS_graph_labels.txt`` -- class label per graph (classification), or
  ``DS_graph_attributes.txt`` -- comma-separated real targets (regression)
* ``DS_node_labels.txt`` / ``DS_edge_labels.txt`` -- optional integer labels
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graph import Dataset, Graph

log = logging.getLogger(__name__)


def _read_int_rows(path: Path, width: int) -> np.ndarray:
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").split() if p]
            if len(parts) < width:
                raise ParseError(f"expected {width} value(s), got {len(parts)}", path, lineno)
            try:
                rows.append([int(float(p)) for p in parts[:width]])
            except ValueError as exc:
                raise ParseError(f"not an integer: {line!r}", path, lineno) from exc
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def _read_float_rows(path: Path) -> list[list[float]]:
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(p) for p in line.replace(",", " ").split()])
            except ValueError as exc:
                raise ParseError(f"not a number: {line!r}", path, lineno) from exc
    return rows


class TUParseStats:
    """Counters for recoverable irregularities found while parsing."""

    def __init__(self):
        self.asymmetric_edges = 0
        self.self_loops = 0

    def as_dict(self):
        return {"asymmetric_edges": self.asymmetric_edges, "self_loops": self.self_loops}


def parse_tu_dataset(directory_path, name: str, stats: TUParseStats | None = None) -> Dataset:
    """Load a TU-format dataset from ``directory_path``.

    Node ids are shifted to 0-based and made local to their graph. Edge
    lists that only store one direction of an edge are symmetrised; the
    number of such edges is recorded in ``stats``.
    """
    root = Path(directory_path)
    stats = stats if stats is not None else TUParseStats()
    f_edges = root / f"{name}_A.txt"
    f_ind = root / f"{name}_graph_indicator.txt"
    f_glab = root / f"{name}_graph_labels.txt"
    f_gattr = root / f"{name}_graph_attributes.txt"
    missing = [p.name for p in (f_edges, f_ind) if not p.is_file()]
    if not f_glab.is_file() and not f_gattr.is_file():
        missing.append(f_glab.name)
    if missing:
        raise ParseError(f"missing mandatory file(s): {', '.join(missing)}", root)

    indicator = _read_int_rows(f_ind, 1)[:, 0]
    num_total = indicator.shape[0]
    if num_total == 0:
        raise ParseError("no nodes", f_ind)
    graph_ids = np.unique(indicator)
    if graph_ids[0] < 1 or not np.array_equal(graph_ids, np.arange(1, graph_ids.size + 1)):
        raise ParseError("graph ids must be 1..N without gaps", f_ind)
    if np.any(np.diff(indicator) < 0):
        raise ParseError("nodes must be grouped by graph in ascending order", f_ind)
    num_graphs = graph_ids.size
    gidx = indicator - 1
    counts = np.bincount(gidx, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    if (root / f"{name}_node_labels.txt").is_file():
        node_labels = _read_int_rows(root / f"{name}_node_labels.txt", 1)[:, 0]
        if node_labels.shape[0] != num_total:
            raise ParseError(
                f"{node_labels.shape[0]} node labels for {num_total} nodes",
                root / f"{name}_node_labels.txt",
            )
    else:
        node_labels = np.zeros(num_total, dtype=np.int64)

    edges = _read_int_rows(f_edges, 2)
    for lineno, (u, v) in enumerate(edges.tolist(), start=1):
        if not (1 <= u <= num_total and 1 <= v <= num_total):
            raise ParseError(f"dangling node index in edge ({u}, {v})", f_edges, lineno)
    edges = edges - 1
    edge_labels = None
    f_elab = root / f"{name}_edge_labels.txt"
    if f_elab.is_file():
        edge_labels = _read_int_rows(f_elab, 1)[:, 0]
        if edge_labels.shape[0] != edges.shape[0]:
            raise ParseError(f"{edge_labels.shape[0]} edge labels for {edges.shape[0]} edges", f_elab)

    if edges.shape[0]:
        bad = np.nonzero(gidx[edges[:, 0]] != gidx[edges[:, 1]])[0]
        if bad.size:
            u, v = edges[bad[0]] + 1
            raise ParseError(f"edge ({u}, {v}) joins two graphs", f_edges, int(bad[0]) + 1)
        loops = edges[:, 0] == edges[:, 1]
        stats.self_loops += int(loops.sum())
        directed = set(map(tuple, edges[~loops].tolist()))
        stats.asymmetric_edges += sum(1 for (u, v) in directed if (v, u) not in directed)
        keep = ~loops
        edges = edges[keep]
        if edge_labels is not None:
            edge_labels = edge_labels[keep]
    if stats.asymmetric_edges:
        log.warning("%s: symmetrised %d one-directional edges", name, stats.asymmetric_edges)

    if f_glab.is_file():
        raw_targets = _read_int_rows(f_glab, 1)[:, 0]
        if raw_targets.shape[0] != num_graphs:
            raise ParseError(f"{raw_targets.shape[0]} graph labels for {num_graphs} graphs", f_glab)
        classes = np.unique(raw_targets)
        targets = list(np.searchsorted(classes, raw_targets).tolist())
        task, num_classes, num_targets = "classification", int(classes.size), 1
    else:
        rows = _read_float_rows(f_gattr)
        if len(rows) != num_graphs:
            raise ParseError(f"{len(rows)} graph attributes for {num_graphs} graphs", f_gattr)
        num_targets = len(rows[0])
        targets = [r[0] if num_targets == 1 else tuple(r) for r in rows]
        task, num_classes = "regression", 0

    edge_graph = gidx[edges[:, 0]] if edges.shape[0] else np.zeros(0, dtype=np.int64)
    order = np.argsort(edge_graph, kind="stable")
    bounds = np.searchsorted(edge_graph[order], np.arange(num_graphs + 1))
    graphs = []
    for gi in range(num_graphs):
        sel = order[bounds[gi]:bounds[gi + 1]]
        local = edges[sel] - offsets[gi]
        labs = None if edge_labels is None else edge_labels[sel]
        if labs is not None and local.shape[0]:
            # a pair listed in both directions must carry one label
            canon = np.sort(local, axis=1)
            pairs = {}
            for (u, v), lab in zip(canon.tolist(), labs.tolist()):
                if pairs.setdefault((u, v), lab) != lab:
                    raise ParseError(f"conflicting labels for edge ({u}, {v}) in graph {gi + 1}", f_elab)
        graphs.append(
            Graph.from_edges(
                int(counts[gi]), local, node_labels[offsets[gi]:offsets[gi + 1]], labs, targets[gi]
            )
        )
    return Dataset(graphs, name, task, num_classes, None, num_targets)


def write_tu_dataset(ds: Dataset, directory_path, name: str | None = None) -> Path:
    """Write ``ds`` in TU format, every undirected edge in both directions."""
    name = name or ds.name
    root = Path(directory_path)
    root.mkdir(parents=True, exist_ok=True)
    offset = 0
    with (root / f"{name}_A.txt").open("w") as fa, \
            (root / f"{name}_graph_indicator.txt").open("w") as fi, \
            (root / f"{name}_node_labels.txt").open("w") as fn:
        has_edge_labels = any(g.edge_labels is not None for g in ds.graphs)
        fe = (root / f"{name}_edge_labels.txt").open("w") if has_edge_labels else None
        try:
            for gi, g in enumerate(ds.graphs, start=1):
                fi.write(f"{gi}\n" * g.num_nodes)
                fn.write("".join(f"{int(x)}\n" for x in g.node_labels))
                labs = g.edge_labels if g.edge_labels is not None else np.zeros(g.num_edges, np.int64)
                for (u, v), lab in zip(g.edges.tolist(), labs.tolist()):
                    fa.write(f"{u + offset + 1}, {v + offset + 1}\n{v + offset + 1}, {u + offset + 1}\n")
                    if fe is not None:
                        fe.write(f"{lab}\n{lab}\n")
                offset += g.num_nodes
        finally:
            if fe is not None:
                fe.close()
    if ds.task == "classification":
        with (root / f"{name}_graph_labels.txt").open("w") as fh:
            fh.write("".join(f"{int(g.target)}\n" for g in ds.graphs))
    else:
        with (root / f"{name}_graph_attributes.txt").open("w") as fh:
            for g in ds.graphs:
                vals = np.atleast_1d(np.asarray(g.target, dtype=np.float64))
                fh.write(", ".join(repr(float(v)) for v in vals) + "\n")
    return root
