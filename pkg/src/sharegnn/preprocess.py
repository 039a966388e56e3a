"""Precomputation of labels and distances, with on-disk caches.

Distance caches are binary: a fixed header followed by, per graph, the
number of pairs and the ``(src, dst, dist)`` triples, all as unsigned
LEB128 varints. Label caches are ``.npz`` archives keyed by the labeling's
canonical text. Both record the dataset fingerprint and are recomputed
when it does not match.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .graph import Dataset, DistanceMap, PairDistances, compute_distance_map
from .labels import Labeler, as_spec

log = logging.getLogger(__name__)

CACHE_ENV = "SHAREGNN_CACHE"
DIST_MAGIC = b"SGNNDIST"
DIST_VERSION = 1
_HEADER = struct.Struct("<8sHII40s")


def cache_root(explicit=None) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


# ---------------------------------------------------------------------------
# varints


def encode_varints(values: np.ndarray) -> bytes:
    """Unsigned LEB128 encoding of a non-negative integer array."""
    v = np.asarray(values, dtype=np.uint64).ravel()
    if v.size == 0:
        return b""
    nbytes = np.ones(v.size, dtype=np.int64)
    rest = v >> np.uint64(7)
    while np.any(rest):
        nbytes += rest > 0
        rest >>= np.uint64(7)
    starts = np.concatenate([[0], np.cumsum(nbytes)[:-1]])
    out = np.zeros(int(nbytes.sum()), dtype=np.uint8)
    for j in range(int(nbytes.max())):
        sel = nbytes > j
        byte = (v[sel] >> np.uint64(7 * j)) & np.uint64(0x7F)
        more = (nbytes[sel] > j + 1).astype(np.uint64) << np.uint64(7)
        out[starts[sel] + j] = (byte | more).astype(np.uint8)
    return out.tobytes()


def decode_varints(buf: bytes | np.ndarray) -> np.ndarray:
    b = np.frombuffer(buf, dtype=np.uint8) if isinstance(buf, (bytes, bytearray)) else np.asarray(buf, np.uint8)
    if b.size == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.flatnonzero((b & 0x80) == 0)
    if ends.size == 0 or ends[-1] != b.size - 1:
        raise DataError("truncated varint stream")
    starts = np.concatenate([[0], ends[:-1] + 1])
    pos = np.arange(b.size) - np.repeat(starts, ends - starts + 1)
    parts = (b & 0x7F).astype(np.uint64) << (7 * pos).astype(np.uint64)
    return np.add.reduceat(parts, starts).astype(np.int64)


# ---------------------------------------------------------------------------
# distance cache


def write_distance_cache(path, dist: DistanceMap, fingerprint: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [_HEADER.pack(DIST_MAGIC, DIST_VERSION, dist.d_max, len(dist), fingerprint.encode("ascii"))]
    for pd in dist.pairs:
        triples = np.stack([pd.src, pd.dst, pd.dist], axis=1).ravel()
        chunks.append(encode_varints(np.concatenate([[len(pd)], triples])))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


def read_distance_cache(path, fingerprint: str | None = None) -> DistanceMap | None:
    """Load a cache file; ``None`` when it is stale (other version or dataset)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        return None
    magic, version, d_max, num_graphs, fp = _HEADER.unpack_from(data)
    if magic != DIST_MAGIC or version != DIST_VERSION:
        return None
    if fingerprint is not None and fp.decode("ascii") != fingerprint:
        return None
    vals = decode_varints(data[_HEADER.size:])
    pairs, pos = [], 0
    for _ in range(num_graphs):
        count = int(vals[pos])
        trip = vals[pos + 1:pos + 1 + 3 * count].reshape(count, 3)
        pos += 1 + 3 * count
        pairs.append(PairDistances(trip[:, 0].copy(), trip[:, 1].copy(), trip[:, 2].copy()))
    if pos != vals.size:
        raise DataError(f"{path}: trailing data in distance cache")
    return DistanceMap(d_max, pairs)


# ---------------------------------------------------------------------------
# preprocessing


@dataclass
class Preprocessed:
    dataset: Dataset
    labels: dict[str, list[np.ndarray]] = field(default_factory=dict)
    alphabet: dict[str, int] = field(default_factory=dict)
    distances: DistanceMap | None = None
    timing: dict = field(default_factory=dict)


def _dataset_dir(root: Path, ds: Dataset) -> Path:
    return root / f"{ds.name}-{ds.fingerprint()[:16]}"


def _label_key(spec_text: str, fit_indices) -> str:
    h = hashlib.sha1(spec_text.encode())
    if fit_indices is not None:
        h.update(np.asarray(sorted(fit_indices), dtype=np.int64).tobytes())
    return h.hexdigest()[:20]


def preprocess(ds: Dataset, labelings: Sequence[str], d_max: int | None, cache_dir=None,
               fit_indices: Sequence[int] | None = None) -> Preprocessed:
    """Compute (or load) every labeling in ``labelings`` and distances up to ``d_max``.

    ``fit_indices`` restricts label dictionaries to those graphs. The
    ``timing`` report lists seconds and a cache-hit flag per stage.
    """
    root = cache_root(cache_dir)
    ddir = _dataset_dir(root, ds) if root is not None else None
    fp = ds.fingerprint()
    out = Preprocessed(ds)
    stages = []
    if d_max is not None:
        t0 = time.perf_counter()
        hit = False
        dist = None
        path = ddir / f"distances_d{d_max}.bin" if ddir is not None else None
        if path is not None and path.is_file():
            dist = read_distance_cache(path, fp)
            hit = dist is not None
        if dist is None:
            dist = compute_distance_map(ds, d_max)
            if path is not None:
                write_distance_cache(path, dist, fp)
        out.distances = dist
        stages.append({"stage": f"distances(d_max={d_max})", "seconds": time.perf_counter() - t0, "cache_hit": hit})
    for text in dict.fromkeys(as_spec(s).fingerprint() for s in labelings):
        t0 = time.perf_counter()
        hit = False
        labels = None
        path = ddir / f"labels_{_label_key(text, fit_indices)}.npz" if ddir is not None else None
        if path is not None and path.is_file():
            with np.load(path, allow_pickle=False) as z:
                if str(z["spec"]) == text and str(z["fingerprint"]) == fp:
                    flat, offs = z["labels"], z["offsets"]
                    labels = [flat[offs[i]:offs[i + 1]].copy() for i in range(len(offs) - 1)]
                    alphabet = int(z["alphabet"])
                    hit = True
        if labels is None:
            res = Labeler(text).fit(ds.graphs, fit_indices)
            labels, alphabet = res.labels, res.alphabet_size
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                offs = np.concatenate([[0], np.cumsum([len(x) for x in labels])]).astype(np.int64)
                flat = np.concatenate(labels) if labels else np.zeros(0, np.int64)
                tmp = path.with_name(path.stem + ".tmp.npz")
                np.savez(tmp, labels=flat, offsets=offs, spec=np.array(text), fingerprint=np.array(fp),
                         alphabet=np.array(alphabet))
                os.replace(tmp, path)
        out.labels[text] = labels
        out.alphabet[text] = alphabet
        stages.append({"stage": f"labels {text}", "seconds": time.perf_counter() - t0, "cache_hit": hit,
                       "alphabet_size": alphabet})
    out.timing = {"dataset": ds.name, "cache_dir": str(ddir) if ddir else None, "stages": stages}
    return out
