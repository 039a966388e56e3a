"""Command-line entry point.

Subcommands::

    sharegnn generate NAME [--count N] [--size N] [--seed S] --out DIR [--force]
    sharegnn preprocess --config CFG [--out REPORT.json]
    sharegnn train --config CFG [--seed S] --out RUN_DIR [--force]
    sharegnn evaluate --config CFG [--seed S] --out REPORT_DIR [--jobs N] [--force]
    sharegnn inspect-weights CHECKPOINT [--graph I] [--top-k K]
    sharegnn stats (--config CFG | --data DIR)
    sharegnn presets [NAME]

``--config`` accepts a JSON file or the name of a shipped preset. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numeric fault.
The cache root is taken from ``$SHAREGNN_CACHE`` unless ``--cache`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .checkpoint import export_weights, graph_overlay, load_checkpoint, save_checkpoint
from .config import RunConfig, list_presets, load_dataset, load_preset, tu_name
from .errors import ConfigError, DataError, ShareGNNError
from .graph import dataset_statistics
from .model import build_model
from .preprocess import preprocess
from .protocol import evaluate_protocol, resolve_splits
from .synthetic import GENERATORS, generate, write_generated
from .training import train
from .tu import parse_tu_dataset

log = logging.getLogger("sharegnn")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        if not force:
            raise ConfigError(f"{out} already exists; pass --force to overwrite")
        if out.is_dir():
            shutil.rmtree(out)
        else:
            out.unlink()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> tuple[RunConfig, Path | None]:
    rc = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    path = Path(args.config)
    base = path.parent if path.is_file() else Path.cwd()
    if rc.dataset.get("path") is not None:
        # absolute so the config copied into a run directory still resolves
        rc.dataset["path"] = str((base / rc.dataset["path"]).resolve())
    return rc, base


def _prepare(rc: RunConfig, base_dir, cache, fit_indices=None):
    ds = load_dataset(rc.dataset, base_dir)
    prep = preprocess(ds, rc.labelings(), rc.d_max(), cache, fit_indices)
    return ds, prep


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    params = {"count": args.count, "size": args.size}
    allowed = GENERATORS[args.name][1]
    for key, val in params.items():
        if val is not None and key not in allowed:
            raise ConfigError(f"generator {args.name!r} takes no --{key}")
    params = {k: v for k, v in params.items() if v is not None}
    ds = generate(args.name, params, args.seed)
    out = _prepare_out(args.out, args.force)
    root = write_generated(ds, out, args.name, params, args.seed)
    print(f"wrote {len(ds)} graphs to {root}")
    return 0


def cmd_preprocess(args) -> int:
    rc, base = _load_config(args)
    ds = load_dataset(rc.dataset, base)
    fit = None
    if rc.preprocess.get("train_only_labels"):
        fit = resolve_splits(ds, rc.protocol_cfg())[0].train
    prep = preprocess(ds, rc.labelings(), rc.d_max(), args.cache, fit)
    text = _dump(prep.timing)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    rc, base = _load_config(args)
    variants = rc.variants()
    if len(variants) != 1:
        raise ConfigError(f"config defines a grid of {len(variants)} configurations; use 'evaluate'")
    _, mcfg, tcfg = variants[0]
    out_path = args.out or rc.out
    if not out_path:
        raise ConfigError("no output directory; pass --out or set 'out' in the config")
    ds = load_dataset(rc.dataset, base)
    split = resolve_splits(ds, rc.protocol_cfg())[0]
    fit = split.train if rc.preprocess.get("train_only_labels") else None
    prep = preprocess(ds, rc.labelings(), rc.d_max(), args.cache, fit)
    out = _prepare_out(out_path, args.force)
    model = build_model(ds, prep, mcfg, seed=tcfg.seed, count_graphs=split.train)
    result = train(model, ds.targets, split.train, split.validation, tcfg, split.test)

    (out / "config.json").write_text(rc.to_text())
    (out / "metrics.csv").write_text(result.metrics_csv())
    (out / "timing.csv").write_text(result.timing_csv())
    save_checkpoint(out / "checkpoint.bin", model, {"train": tcfg.to_dict(), "dataset": rc.dataset,
                                                  "best_epoch": result.best_epoch,
                                                  "train_indices": list(split.train)})
    report = {
        "dataset": dataset_statistics(ds),
        "num_parameters": model.pool.size,
        "parameters_by_kind": {k: model.pool.count(k) for k in ("message", "vector", "bias", "dense", "dense_bias")},
        "split_sizes": {"train": len(split.train), "validation": len(split.validation or ()),
                        "test": len(split.test)},
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.rows),
        "stopped_early": result.stopped_early,
        "best": result.best_row(),
        "preprocessing": prep.timing,
        "train_seconds": float(sum(result.seconds)),
    }
    (out / "report.json").write_text(_dump(report))
    best = result.best_row()
    shown = ", ".join(f"{k}={v:.4f}" for k, v in best.items() if k != "epoch" and isinstance(v, float))
    print(f"best epoch {result.best_epoch}: {shown}")
    print(f"run written to {out}")
    return 0


def cmd_evaluate(args) -> int:
    rc, base = _load_config(args)
    out_path = args.out or rc.out
    if not out_path:
        raise ConfigError("no output directory; pass --out or set 'out' in the config")
    ds, prep = _prepare(rc, base, args.cache)
    report = evaluate_protocol(ds, prep, rc.variants(), rc.protocol_cfg(), jobs=args.jobs)
    out = _prepare_out(out_path, args.force)
    (out / "config.json").write_text(rc.to_text())
    (out / "report.json").write_text(_dump(report))
    print(f"{report['metric']}: {report['test_mean']:.4f} +- {report['test_std']:.4f} "
          f"(config {report['selected']} of {len(report['configs'])})")
    return 0


def cmd_inspect_weights(args) -> int:
    ckpt = Path(args.checkpoint)
    if ckpt.is_dir():
        ckpt = ckpt / "checkpoint.bin"
    if not ckpt.is_file():
        raise DataError(f"checkpoint {ckpt} does not exist")
    header, values = load_checkpoint(ckpt)
    out = export_weights(header, values, args.top_k)
    if args.graph is not None:
        cfg_path = Path(args.config) if args.config else ckpt.parent / "config.json"
        if not cfg_path.is_file():
            raise ConfigError(f"--graph needs the run config; {cfg_path} not found")
        rc = RunConfig.load(cfg_path)
        ds = load_dataset(rc.dataset, cfg_path.parent)
        if not 0 <= args.graph < len(ds):
            raise DataError(f"graph index {args.graph} out of range (0..{len(ds) - 1})")
        train_idx = header.get("train_indices")
        fit = train_idx if rc.preprocess.get("train_only_labels") else None
        prep = preprocess(ds, rc.labelings(), rc.d_max(), args.cache, fit)
        model = build_model(ds, prep, rc.model_cfg(), seed=0, count_graphs=train_idx)
        model.pool.load_values(values)
        labels = {fp: prep.labels[fp][args.graph].tolist() for fp in rc.model_cfg().labelings()}
        out["graph"] = graph_overlay(model, args.graph, labels)
    sys.stdout.write(_dump(out))
    return 0


def cmd_stats(args) -> int:
    if args.data:
        path = Path(args.data)
        ds = parse_tu_dataset(path, args.name or tu_name(path))
    elif args.config:
        rc, base = _load_config(args)
        ds = load_dataset(rc.dataset, base)
    else:
        raise ConfigError("stats needs --config or --data")
    sys.stdout.write(_dump(dataset_statistics(ds)))
    return 0


def cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(_dump(load_preset(args.name)))
    else:
        for name in list_presets():
            print(name)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sharegnn", description="Graph networks with invariant-based weight sharing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_cache(p):
        p.add_argument("--cache", default=None, help="cache root (default: $SHAREGNN_CACHE, unset = no cache)")

    p = sub.add_parser("generate", help="write a synthetic dataset in TU format")
    p.add_argument("name", choices=sorted(GENERATORS))
    p.add_argument("--count", type=int, help="number of graphs")
    p.add_argument("--size", type=int, help="ring size (ring-transfer-1 only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="compute and cache labels and distances")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="also write the timing report to this file")
    with_cache(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one configuration on the first split")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides train.seed and protocol.seed")
    p.add_argument("--out", help="run directory")
    p.add_argument("--force", action="store_true")
    with_cache(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the evaluation protocol over the config grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="report directory")
    p.add_argument("--force", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    with_cache(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-weights", help="export learned weights of a checkpoint as JSON")
    p.add_argument("checkpoint", help="checkpoint file or run directory")
    p.add_argument("--graph", type=int, default=None, help="add the assembled matrix entries of this graph")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--config", default=None, help="run config (default: config.json next to the checkpoint)")
    with_cache(p)
    p.set_defaults(func=cmd_inspect_weights)

    p = sub.add_parser("stats", help="print dataset statistics")
    p.add_argument("--config")
    p.add_argument("--data", help="TU dataset directory")
    p.add_argument("--name", help="dataset name inside --data (default: detected from the files)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("presets", help="list shipped presets or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", invalid="ignore")
    try:
        return args.func(args)
    except ShareGNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
