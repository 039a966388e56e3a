"""Declarative model description and its compiled, runnable form.

A :class:`ModelCfg` lists encoder layers (each a set of heads plus an
optional combiner), decoder heads, and readout layers. :func:`build_model`
turns it into a :class:`ShareGNN` by building the shared tables from a
dataset's precomputed labels and distances and precomputing every graph's
index plans once.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .labels import as_spec
from .layers import (
    ACTIVATIONS,
    DecoderHead,
    DecoderPlan,
    Dense,
    EncoderHead,
    EncoderPlan,
    assemble_encoder_matrix,
)
from .sharing import (
    InitScheme,
    NodeWeightMap,
    ParameterPool,
    TripleTable,
    build_node_weight_map,
    build_triple_table,
    graph_pairs,
    init_pool,
)


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {name!r}; choose from {', '.join(ACTIVATIONS)}")


@dataclass
class EncoderHeadCfg:
    labeling: str = "raw"
    distances: list[int] = field(default_factory=lambda: [0, 1])
    relation: str = "distances"
    bias: bool = True
    bias_labeling: str | None = None
    width: int | None = None
    activation: str = "tanh"
    prune_min: int = 1

    def __post_init__(self):
        self.labeling = as_spec(self.labeling).fingerprint()
        if self.bias_labeling is not None:
            self.bias_labeling = as_spec(self.bias_labeling).fingerprint()
        if self.relation not in ("distances", "edges"):
            raise ConfigError(f"relation must be 'distances' or 'edges', not {self.relation!r}")
        if self.relation == "distances":
            if not self.distances or min(self.distances) < 0:
                raise ConfigError("distance mode needs a non-empty list of distances >= 0")
            self.distances = sorted(set(int(d) for d in self.distances))
        if self.width is not None and self.width < 1:
            raise ConfigError("head width must be >= 1")
        if self.prune_min < 1:
            raise ConfigError("prune_min must be >= 1")
        _check_activation(self.activation)


@dataclass
class DenseCfg:
    width: int
    activation: str = "identity"

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("dense width must be >= 1")
        _check_activation(self.activation)


@dataclass
class EncoderLayerCfg:
    heads: list[EncoderHeadCfg]
    combiner: DenseCfg | None = None

    def __post_init__(self):
        self.heads = [h if isinstance(h, EncoderHeadCfg) else EncoderHeadCfg(**h) for h in self.heads]
        if not self.heads:
            raise ConfigError("an encoder layer needs at least one head")
        if isinstance(self.combiner, dict):
            self.combiner = DenseCfg(**self.combiner)


@dataclass
class DecoderHeadCfg:
    labeling: str = "raw"
    m: int = 1
    activation: str = "tanh"
    prune_min: int = 1

    def __post_init__(self):
        self.labeling = as_spec(self.labeling).fingerprint()
        if self.m < 1:
            raise ConfigError("decoder output rows m must be >= 1")
        _check_activation(self.activation)


@dataclass
class ModelCfg:
    encoder: list[EncoderLayerCfg]
    decoder: list[DecoderHeadCfg]
    decoder_combiner: DenseCfg | None = None
    readout: list[DenseCfg] = field(default_factory=list)
    input_dense: DenseCfg | None = None
    input_labeling: str | None = None
    init: str = "constant(0.001)"
    train_only_tables: bool = False

    def __post_init__(self):
        self.encoder = [e if isinstance(e, EncoderLayerCfg) else EncoderLayerCfg(**e) for e in self.encoder]
        self.decoder = [d if isinstance(d, DecoderHeadCfg) else DecoderHeadCfg(**d) for d in self.decoder]
        if not self.decoder:
            raise ConfigError("the model needs at least one decoder head")
        if isinstance(self.decoder_combiner, dict):
            self.decoder_combiner = DenseCfg(**self.decoder_combiner)
        if isinstance(self.input_dense, dict):
            self.input_dense = DenseCfg(**self.input_dense)
        self.readout = [r if isinstance(r, DenseCfg) else DenseCfg(**r) for r in self.readout]
        if self.input_labeling is not None:
            self.input_labeling = as_spec(self.input_labeling).fingerprint()
        self.init = str(InitScheme.parse(self.init))

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelCfg":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def labelings(self) -> list[str]:
        """Every labeling the model reads, in first-use order."""
        out: list[str] = [self.input_labeling] if self.input_labeling else []
        for layer in self.encoder:
            for h in layer.heads:
                out += [h.labeling] + ([h.bias_labeling] if h.bias_labeling else [])
        out += [d.labeling for d in self.decoder]
        return list(dict.fromkeys(out))

    def max_distance(self) -> int | None:
        ds = [max(h.distances) for layer in self.encoder for h in layer.heads if h.relation == "distances"]
        return max(ds) if ds else None

    def fingerprint(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# compiled model


class ShareGNN:
    """Runnable model: parameter pool, layer objects and per-graph plans."""

    def __init__(self, cfg: ModelCfg, pool: ParameterPool, input_dense, enc_layers, dec_heads,
                 dec_combiner, readout, enc_plans, dec_plans, tables, node_maps, sizes, out_width):
        self.cfg = cfg
        self.pool = pool
        self.input_dense = input_dense
        self.enc_layers = enc_layers  # list of (heads, combiner)
        self.dec_heads = dec_heads
        self.dec_combiner = dec_combiner
        self.readout = readout
        self.enc_plans = enc_plans  # [layer][head][graph]
        self.dec_plans = dec_plans  # [head][graph]
        self.tables = tables  # block name -> TripleTable
        self.node_maps = node_maps  # block name -> NodeWeightMap
        self.sizes = sizes
        self.out_width = out_width
        self.input_labels = None  # per-graph ids for one-hot input features
        self.input_width = 1
        self._batch = None

    def initial_features(self, indices: Sequence[int]) -> np.ndarray:
        """Constant ones, or one-hot rows of the input labeling (unseen labels give zero rows)."""
        if self.input_labels is None:
            return np.ones((int(sum(self.sizes[gi] for gi in indices)), 1))
        lab = np.concatenate([self.input_labels[gi] for gi in indices])
        x = np.zeros((lab.shape[0], self.input_width))
        ok = lab >= 0
        x[np.flatnonzero(ok), lab[ok]] = 1.0
        return x

    @property
    def num_graphs(self) -> int:
        return len(self.sizes)

    def encode(self, indices: Sequence[int], x0: np.ndarray | None = None) -> np.ndarray:
        """Stacked node embeddings after the encoder stack."""
        indices = list(indices)
        for gi in indices:
            if not 0 <= gi < self.num_graphs:
                raise ContractViolation(f"graph index {gi} out of range")
        n = int(sum(self.sizes[gi] for gi in indices))
        x = self.initial_features(indices) if x0 is None else np.asarray(x0, dtype=np.float64)
        if x.shape[0] != n:
            raise ContractViolation("initial features do not match the batch")
        if self.input_dense is not None:
            x = self.input_dense.forward(self.pool, x)
        for li, (heads, combiner) in enumerate(self.enc_layers):
            outs = []
            for hi, head in enumerate(heads):
                plan = EncoderPlan.stack([self.enc_plans[li][hi][gi] for gi in indices])
                outs.append(head.forward(self.pool, plan, x))
            x = np.concatenate(outs, axis=1) if len(outs) > 1 else outs[0]
            if combiner is not None:
                x = combiner.forward(self.pool, x)
        return x

    def forward(self, indices: Sequence[int], noise_std: float = 0.0,
                noise_rng: np.random.Generator | None = None, x0: np.ndarray | None = None) -> np.ndarray:
        """Outputs for the listed graphs, one row per graph."""
        indices = list(indices)
        if x0 is None and noise_std > 0:
            if noise_rng is None:
                raise ContractViolation("noise needs a random generator")
            x0 = self.initial_features(indices)
            x0 = x0 + noise_rng.normal(0.0, noise_std, size=x0.shape)
        x = self.encode(indices, x0)
        outs = []
        for hi, head in enumerate(self.dec_heads):
            plan = DecoderPlan.stack([self.dec_plans[hi][gi] for gi in indices])
            outs.append(head.forward(self.pool, plan, x))
        y = np.concatenate(outs, axis=1) if len(outs) > 1 else outs[0]
        if self.dec_combiner is not None:
            y = self.dec_combiner.forward(self.pool, y)
        for layer in self.readout:
            y = layer.forward(self.pool, y)
        self._batch = indices
        return y

    def backward(self, dout: np.ndarray) -> None:
        """Accumulate parameter gradients for the last forward batch."""
        if self._batch is None:
            raise ContractViolation("backward without forward")
        dy = np.asarray(dout, dtype=np.float64).reshape(len(self._batch), -1)
        for layer in reversed(self.readout):
            dy = layer.backward(self.pool, dy)
        if self.dec_combiner is not None:
            dy = self.dec_combiner.backward(self.pool, dy)
        dx = None
        lo = 0
        for head in self.dec_heads:
            part = head.backward(self.pool, dy[:, lo:lo + head.width])
            lo += head.width
            dx = part if dx is None else dx + part
        for heads, combiner in reversed(self.enc_layers):
            if combiner is not None:
                dx = combiner.backward(self.pool, dx)
            dprev = None
            lo = 0
            for head in heads:
                part = head.backward(self.pool, dx[:, lo:lo + head.k_out])
                lo += head.k_out
                dprev = part if dprev is None else dprev + part
            dx = dprev
        if self.input_dense is not None:
            self.input_dense.backward(self.pool, dx)

    def encoder_matrix(self, graph_index: int, layer: int = 0, head: int = 0) -> np.ndarray:
        """Dense message matrix of one head for one graph (row = target, column = source)."""
        h = self.enc_layers[layer][0][head]
        return assemble_encoder_matrix(self.enc_plans[layer][head][graph_index], self.pool[h.msg]).toarray()


def build_model(graphs, prep, cfg: ModelCfg, seed: int = 0, count_graphs: Sequence[int] | None = None,
                num_outputs: int | None = None) -> ShareGNN:
    """Compile ``cfg`` against a preprocessed dataset.

    ``prep`` supplies ``labels[fingerprint]`` (per-graph label arrays) and
    ``distances`` (per-graph pair lists). Tables count triples over
    ``count_graphs`` when ``cfg.train_only_tables`` is set, else over all graphs.
    """
    graphs = getattr(graphs, "graphs", graphs)
    if num_outputs is None:
        ds = prep.dataset
        num_outputs = ds.num_classes if ds.task == "classification" else ds.num_targets
    counting = count_graphs if cfg.train_only_tables else None
    pool = ParameterPool()
    tables: dict[str, TripleTable] = {}
    node_maps: dict[str, NodeWeightMap] = {}
    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    if np.any(sizes == 0):
        raise ContractViolation("empty graphs cannot be pooled")

    def labels_of(fp):
        try:
            return prep.labels[fp]
        except KeyError:
            raise ConfigError(f"labeling {fp} was not preprocessed") from None

    width = 1
    input_labels = None
    if cfg.input_labeling is not None:
        input_labels = labels_of(cfg.input_labeling)
        width = int(prep.alphabet[cfg.input_labeling])
    input_width = width
    input_dense = None
    if cfg.input_dense is not None:
        input_dense = Dense("input", width, cfg.input_dense.width, cfg.input_dense.activation, pool)
        width = cfg.input_dense.width

    enc_layers, enc_plans = [], []
    for li, layer in enumerate(cfg.encoder):
        heads, plans = [], []
        for hi, hc in enumerate(layer.heads):
            name = f"enc{li}.h{hi}"
            lab = labels_of(hc.labeling)
            dist = None if hc.relation == "edges" else prep.distances
            table = build_triple_table(graphs, lab, dist, hc.distances, hc.prune_min, hc.relation, counting)
            k_out = hc.width if hc.width is not None else width
            bmap = None
            if hc.bias:
                blab = labels_of(hc.bias_labeling or hc.labeling)
                bmap = build_node_weight_map(graphs, blab, k_out, 1, counting)
            head = EncoderHead(name, len(table), len(bmap) if bmap else 0, width, hc.width,
                               hc.activation, pool)
            tables[head.msg] = table
            if bmap is not None:
                node_maps[head.bias] = bmap
            per_graph = []
            for gi, g in enumerate(graphs):
                pairs = graph_pairs(g, None if dist is None else dist[gi], hc.relation, hc.distances)
                pidx = table.pair_index(pairs, lab[gi])
                bidx = bmap.index_of(blab[gi]) if bmap is not None else None
                per_graph.append(EncoderPlan.from_pairs(g.num_nodes, pairs.rows, pairs.cols, pidx, bidx))
            heads.append(head)
            plans.append(per_graph)
        cat_width = sum(h.k_out for h in heads)
        combiner = None
        if layer.combiner is not None:
            combiner = Dense(f"enc{li}.comb", cat_width, layer.combiner.width, layer.combiner.activation, pool)
            width = layer.combiner.width
        else:
            width = cat_width
        enc_layers.append((heads, combiner))
        enc_plans.append(plans)

    dec_heads, dec_plans = [], []
    for hi, dc in enumerate(cfg.decoder):
        name = f"dec.h{hi}"
        lab = labels_of(dc.labeling)
        wmap = build_node_weight_map(graphs, lab, dc.m, dc.prune_min, counting)
        head = DecoderHead(name, len(wmap), dc.m, width, dc.activation, pool)
        node_maps[head.pool_name] = wmap
        dec_heads.append(head)
        dec_plans.append([DecoderPlan(wmap.index_of(lab[gi]), np.array([g.num_nodes])) for gi, g in enumerate(graphs)])
    out = sum(h.width for h in dec_heads)
    dec_combiner = None
    if cfg.decoder_combiner is not None:
        dec_combiner = Dense("dec.comb", out, cfg.decoder_combiner.width, cfg.decoder_combiner.activation, pool)
        out = cfg.decoder_combiner.width
    readout = []
    for ri, rc in enumerate(cfg.readout):
        readout.append(Dense(f"readout{ri}", out, rc.width, rc.activation, pool))
        out = rc.width
    if num_outputs and out != num_outputs:
        raise ConfigError(f"model produces {out} outputs but the task needs {num_outputs}")
    init_pool(pool, cfg.init, seed)
    model = ShareGNN(cfg, pool, input_dense, enc_layers, dec_heads, dec_combiner, readout,
                     enc_plans, dec_plans, tables, node_maps, sizes, out)
    model.input_labels = input_labels
    model.input_width = input_width
    return model
