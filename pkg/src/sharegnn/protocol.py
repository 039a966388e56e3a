"""Cross-validation protocols and configuration selection.

``fair``: per fold a train/validation/test split; each configuration is
trained with early stopping on validation accuracy, the configuration with
the best mean validation score over all folds and repeats is selected, and
its test scores are reported.

``standard``: train/test folds only; every configuration trains for the
full epoch budget, the epoch with the best mean test score across folds is
picked per configuration, and the best configuration is reported.

``holdout``: a single fair-style split (fold 0), used for quick training runs.
"""

from __future__ import annotations

import json
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .graph import Dataset, Split, check_split
from .model import ModelCfg, build_model
from .training import TrainCfg, train


@dataclass
class ProtocolCfg:
    kind: str = "fair"
    folds: int = 10
    repeats: int = 3
    seed: int = 0
    splits: str | None = None

    def __post_init__(self):
        if self.kind not in ("fair", "standard", "holdout"):
            raise ConfigError(f"unknown protocol {self.kind!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "ProtocolCfg":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad protocol config: {exc}") from exc

    def to_dict(self):
        return asdict(self)


def stratified_folds(targets, k: int, seed: int, classification: bool = True) -> list[np.ndarray]:
    """Partition graph indices into ``k`` folds with per-class round-robin assignment."""
    rng = np.random.default_rng(seed)
    n = len(targets)
    fold_of = np.empty(n, dtype=np.int64)
    if classification:
        y = np.asarray(targets, dtype=np.int64)
        start = 0
        for c in np.unique(y):
            members = rng.permutation(np.flatnonzero(y == c))
            fold_of[members] = (start + np.arange(members.size)) % k
            start = (start + members.size) % k
    else:
        fold_of[rng.permutation(n)] = np.arange(n) % k
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def _tup(a) -> tuple[int, ...]:
    return tuple(int(i) for i in a)


def generate_splits(ds: Dataset, protocol: ProtocolCfg) -> list[Split]:
    folds = stratified_folds(ds.targets, protocol.folds, protocol.seed, ds.task == "classification")
    out = []
    k = protocol.folds
    for i in range(k if protocol.kind != "holdout" else 1):
        test = folds[i]
        if protocol.kind == "standard":
            train_idx = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
            out.append(Split(_tup(train_idx), _tup(test), None))
        else:
            val = folds[(i + 1) % k]
            train_idx = np.sort(np.concatenate([folds[j] for j in range(k) if j not in (i, (i + 1) % k)]))
            out.append(Split(_tup(train_idx), _tup(test), _tup(val)))
    return out


def load_split_file(path, num_graphs: int) -> list[Split]:
    """JSON list of ``{"train": [...], "test": [...], "validation": [...]}`` objects."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"split file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
        if not isinstance(raw, list) or not all(isinstance(obj, dict) for obj in raw):
            raise ValueError("expected a list of split objects")
        splits = [Split.from_json(obj) for obj in raw]
        for s in splits:
            check_split(s, num_graphs)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed split file ({exc})") from exc
    return splits


def resolve_splits(ds: Dataset, protocol: ProtocolCfg) -> list[Split]:
    if protocol.splits is not None:
        splits = load_split_file(protocol.splits, len(ds))
    elif ds.splits:
        splits = list(ds.splits)
    else:
        return generate_splits(ds, protocol)
    if protocol.kind == "holdout":
        return splits[:1]
    if protocol.kind == "fair" and any(s.validation is None for s in splits):
        raise ConfigError("the fair protocol needs validation sets in every split")
    return splits


# ---------------------------------------------------------------------------
# jobs

_SHARED: dict = {}


@dataclass
class Job:
    config: int
    repeat: int
    fold: int
    seed: int


def _run_job(job: Job) -> dict:
    ds, prep, grid, splits, kind = (_SHARED[k] for k in ("ds", "prep", "grid", "splits", "kind"))
    _, model_cfg, train_cfg = grid[job.config]
    split = splits[job.fold]
    tcfg = TrainCfg(**{**train_cfg.to_dict(), "seed": job.seed})
    model = build_model(ds, prep, model_cfg, seed=job.seed, count_graphs=split.train)
    val = None if kind == "standard" else split.validation
    res = train(model, ds.targets, split.train, val, tcfg, split.test)
    metric = "acc" if tcfg.loss == "cross_entropy" else "mae"
    best = res.best_row()
    return {
        "config": job.config,
        "repeat": job.repeat,
        "fold": job.fold,
        "seed": job.seed,
        "best_epoch": res.best_epoch,
        "epochs_run": len(res.rows),
        "val": best.get(f"val_{metric}"),
        "val_loss": best.get("val_loss"),
        "test": best.get(f"test_{metric}"),
        "test_curve": [r.get(f"test_{metric}") for r in res.rows],
    }


def _run_all(jobs: list[Job], num_workers: int) -> list[dict]:
    if num_workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=num_workers, mp_context=ctx) as ex:
        return list(ex.map(_run_job, jobs))


def evaluate_protocol(ds: Dataset, prep, grid: Sequence[tuple[str, ModelCfg, TrainCfg]],
                      protocol: ProtocolCfg, jobs: int = 1) -> dict:
    """Run every configuration of ``grid`` under ``protocol`` and report the selected one.

    ``grid`` holds ``(fingerprint, model_cfg, train_cfg)`` triples; the
    fingerprint breaks ties in configuration selection (smaller wins).
    """
    if not grid:
        raise ConfigError("the configuration grid is empty")
    splits = resolve_splits(ds, protocol)
    classification = ds.task == "classification"
    repeats = protocol.repeats if protocol.kind == "fair" else 1
    job_list = [
        Job(ci, r, f, grid[ci][2].seed + r)
        for ci in range(len(grid)) for r in range(repeats) for f in range(len(splits))
    ]
    _SHARED.update(ds=ds, prep=prep, grid=list(grid), splits=splits, kind=protocol.kind)
    try:
        results = _run_all(job_list, jobs)
    finally:
        _SHARED.clear()

    sign = 1.0 if classification else -1.0
    configs = []
    for ci, (fp, mcfg, tcfg) in enumerate(grid):
        runs = [r for r in results if r["config"] == ci]
        entry = {"index": ci, "fingerprint": fp, "runs": [{k: v for k, v in r.items() if k != "test_curve"} for r in runs]}
        if protocol.kind == "standard":
            length = min(len(r["test_curve"]) for r in runs)
            curve = np.array([r["test_curve"][:length] for r in runs], dtype=np.float64)
            means = curve.mean(axis=0)
            best = int(np.argmax(sign * means))
            scores = curve[:, best]
            entry.update(selection_score=float(sign * means[best]), epoch=best + 1)
        else:
            val = np.array([r["val"] if classification else r["val_loss"] for r in runs], dtype=np.float64)
            scores = np.array([r["test"] for r in runs], dtype=np.float64)
            entry["selection_score"] = float(sign * val.mean())
            entry["val_mean"] = float(val.mean())
        entry["test_mean"] = float(scores.mean())
        entry["test_std"] = float(scores.std())
        configs.append(entry)
    chosen = sorted(configs, key=lambda e: (-e["selection_score"], e["fingerprint"]))[0]
    return {
        "protocol": protocol.to_dict(),
        "metric": "accuracy" if classification else "mae",
        "num_splits": len(splits),
        "selected": chosen["index"],
        "test_mean": chosen["test_mean"],
        "test_std": chosen["test_std"],
        "configs": configs,
    }
