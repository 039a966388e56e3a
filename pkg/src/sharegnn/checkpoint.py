"""Checkpoint files and human-readable weight export.

Layout: 8-byte magic, little-endian ``uint32`` version, ``uint64`` header
length, UTF-8 JSON header, then every parameter block as little-endian
float64 in header order. The header names each block with its kind and
shape and, for message blocks, the triple keys that own each entry.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .sharing import RelationKey

MAGIC = b"SGNNCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def checkpoint_header(model, extra: dict | None = None) -> dict:
    pool = model.pool
    blocks = [{"name": n, "kind": pool.kinds[n], "shape": list(pool[n].shape)} for n in pool.names()]
    tables = {
        name: {"mode": t.mode, "allowed": list(t.allowed), "keys": t.keys.tolist(), "counts": t.counts.tolist()}
        for name, t in model.tables.items()
    }
    maps = {name: {"labels": m.labels.tolist(), "width": m.width} for name, m in model.node_maps.items()}
    header = {"format": "sharegnn-checkpoint", "version": VERSION, "blocks": blocks,
              "tables": tables, "node_maps": maps, "model": model.cfg.to_dict()}
    header.update(extra or {})
    return header


def save_checkpoint(path, model, extra: dict | None = None) -> Path:
    path = Path(path)
    header = json.dumps(checkpoint_header(model, extra), sort_keys=True).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, VERSION, len(header)), header]
    for name in model.pool.names():
        parts.append(np.ascontiguousarray(model.pool[name], dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise DataError(f"{path}: not a checkpoint (too short)")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except ValueError as exc:
        raise DataError(f"{path}: corrupt checkpoint header") from exc
    pos = start + hlen
    values = {}
    for block in header["blocks"]:
        count = int(np.prod(block["shape"], dtype=np.int64))
        end = pos + 8 * count
        if end > len(data):
            raise DataError(f"{path}: truncated block {block['name']}")
        values[block["name"]] = np.frombuffer(data[pos:end], dtype="<f8").reshape(block["shape"]).astype(np.float64)
        pos = end
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes after the last block")
    return header, values


def export_weights(header: dict, values: dict[str, np.ndarray], top_k: int = 3) -> dict:
    """Every shared message weight as ``(target_label, source_label, relation, value)`` plus the top-k by magnitude."""
    out = {}
    for name, table in header["tables"].items():
        w = values[name]
        entries = [
            {"target_label": t, "source_label": s, "relation": str(RelationKey(k, v)), "value": float(w[i]),
             "occurrences": int(c)}
            for i, ((t, s, k, v), c) in enumerate(zip(table["keys"], table["counts"]))
        ]
        order = sorted(range(len(entries)), key=lambda i: (-abs(entries[i]["value"]), i))
        out[name] = {"entries": entries, "top": [entries[i] for i in order[:top_k]]}
    vectors = {}
    for name, m in header["node_maps"].items():
        vectors[name] = [{"label": lab, "vector": values[name][i].tolist()} for i, lab in enumerate(m["labels"])]
    return {"message_weights": out, "label_vectors": vectors}


def graph_overlay(model, graph_index: int, node_labels: dict[str, list[int]] | None = None) -> dict:
    """Assembled message-matrix entries of every encoder head for one graph."""
    if not 0 <= graph_index < model.num_graphs:
        raise DataError(f"graph index {graph_index} out of range (0..{model.num_graphs - 1})")
    heads = []
    for li, (layer_heads, _) in enumerate(model.enc_layers):
        for hi, head in enumerate(layer_heads):
            plan = model.enc_plans[li][hi][graph_index]
            w = model.pool[head.msg][plan.pidx]
            heads.append({
                "block": head.msg,
                "entries": [
                    {"target": int(r), "source": int(c), "value": float(v)}
                    for r, c, v in zip(plan.rows.tolist(), plan.cols.tolist(), w.tolist())
                ],
            })
    out = {"graph_index": graph_index, "num_nodes": int(model.sizes[graph_index]), "heads": heads}
    if node_labels:
        out["node_labels"] = node_labels
    return out
