"""Run configuration: one JSON document with preset includes and grids.

A document may name a ``preset`` (a shipped preset name or a path to
another JSON file); the preset is loaded recursively and the document's own
keys are deep-merged over it (a ``null`` value removes the inherited key).
``grid`` maps dotted paths (for example
``model.decoder.0.labeling``) to value lists; the Cartesian product of all
entries gives the configurations a protocol compares.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .graph import Dataset
from .labels import as_spec
from .model import ModelCfg
from .protocol import ProtocolCfg
from .synthetic import generate, normalize_targets, select_target
from .training import TrainCfg
from .tu import parse_tu_dataset

TOP_LEVEL = ("dataset", "preprocess", "model", "train", "protocol", "grid", "seed", "out")


def list_presets() -> list[str]:
    root = resources.files("sharegnn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: a config must be a JSON object")
    return obj


def load_preset(name: str) -> dict:
    res = resources.files("sharegnn") / "presets" / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return json.loads(res.read_text())


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if val is None:
            out.pop(key, None)
        elif isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_includes(obj: dict, base_dir: Path | None = None, _depth: int = 0) -> dict:
    if _depth > 16:
        raise ConfigError("preset includes nest too deeply (cycle?)")
    obj = dict(obj)
    ref = obj.pop("preset", None)
    if ref is None:
        return obj
    candidate = Path(ref) if base_dir is None else base_dir / ref
    if str(ref).endswith(".json") and candidate.is_file():
        parent = resolve_includes(_read_json(candidate), candidate.parent, _depth + 1)
    else:
        parent = resolve_includes(load_preset(ref), None, _depth + 1)
    return deep_merge(parent, obj)


def set_dotted(obj: dict, path: str, value) -> None:
    keys = path.split(".")
    cur = obj
    for k in keys[:-1]:
        try:
            cur = cur[int(k)] if isinstance(cur, list) else cur.setdefault(k, {})
        except (IndexError, ValueError, AttributeError) as exc:
            raise ConfigError(f"grid path {path!r} does not exist") from exc
    last = keys[-1]
    if isinstance(cur, list):
        try:
            cur[int(last)] = value
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"grid path {path!r} does not exist") from exc
    else:
        cur[last] = value


@dataclass
class RunConfig:
    dataset: dict
    model: dict
    train: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None

    def __post_init__(self):
        if not isinstance(self.dataset, dict) or not ("generator" in self.dataset or "path" in self.dataset):
            raise ConfigError("dataset needs either a 'generator' or a 'path'")
        for path, values in self.grid.items():
            if not isinstance(values, list) or not values:
                raise ConfigError(f"grid entry {path!r} needs a non-empty list of values")
            if path.split(".")[0] not in ("model", "train"):
                raise ConfigError(f"grid entry {path!r} must start with model. or train.")
        variants = self.variants()
        needed = []
        for _, m, _t in variants:
            needed += m.labelings()
        listed = self.preprocess.get("labelings")
        if listed is not None:
            have = {as_spec(s).fingerprint() for s in listed}
            missing = sorted(set(needed) - have)
            if missing:
                raise ConfigError(f"labelings used by the model but not preprocessed: {', '.join(missing)}")
        d_need = [m.max_distance() for _, m, _t in variants if m.max_distance() is not None]
        d_max = self.preprocess.get("d_max")
        if d_max is not None and d_need and d_max < max(d_need):
            raise ConfigError(f"preprocess d_max={d_max} is below the largest head distance {max(d_need)}")
        ProtocolCfg.from_dict(self.protocol)

    # -- construction --------------------------------------------------------

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | None = None) -> "RunConfig":
        obj = resolve_includes(obj, base_dir)
        unknown = sorted(set(obj) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "model" not in obj or "dataset" not in obj:
            raise ConfigError("a run config needs 'dataset' and 'model'")
        return cls(**obj)

    @classmethod
    def load(cls, ref) -> "RunConfig":
        """From a JSON file path, or a preset name when no such file exists."""
        path = Path(ref)
        if path.is_file():
            return cls.from_dict(_read_json(path), path.parent)
        return cls.from_dict({"preset": str(ref)})

    def to_dict(self) -> dict:
        out = {"dataset": self.dataset, "model": self.model, "train": self.train, "protocol": self.protocol,
               "preprocess": self.preprocess, "grid": self.grid, "seed": self.seed, "out": self.out}
        return copy.deepcopy(out)

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except ValueError as exc:
            raise ConfigError(f"invalid JSON config ({exc})") from exc

    # -- derived objects -----------------------------------------------------

    def _train_dict(self, train: dict) -> dict:
        train = dict(train)
        if self.seed is not None:
            train["seed"] = self.seed
        return train

    def model_cfg(self) -> ModelCfg:
        return ModelCfg.from_dict(copy.deepcopy(self.model))

    def train_cfg(self) -> TrainCfg:
        return TrainCfg.from_dict(self._train_dict(self.train))

    def protocol_cfg(self) -> ProtocolCfg:
        proto = dict(self.protocol)
        if self.seed is not None:
            proto["seed"] = self.seed
        return ProtocolCfg.from_dict(proto)

    def variants(self) -> list[tuple[str, ModelCfg, TrainCfg]]:
        """Every grid point as ``(fingerprint, model, train)``; one entry without a grid."""
        paths = sorted(self.grid)
        out = []
        for combo in itertools.product(*(self.grid[p] for p in paths)):
            doc = {"model": copy.deepcopy(self.model), "train": copy.deepcopy(self.train)}
            for p, v in zip(paths, combo):
                set_dotted(doc, p, copy.deepcopy(v))
            m = ModelCfg.from_dict(doc["model"])
            t = TrainCfg.from_dict(self._train_dict(doc["train"]))
            fp = json.dumps({"model": m.to_dict(), "train": t.to_dict()}, sort_keys=True, separators=(",", ":"))
            out.append((fp, m, t))
        return out

    def labelings(self) -> list[str]:
        listed = self.preprocess.get("labelings")
        if listed is not None:
            return [as_spec(s).fingerprint() for s in listed]
        out: list[str] = []
        for _, m, _t in self.variants():
            out += m.labelings()
        return list(dict.fromkeys(out))

    def d_max(self) -> int | None:
        if self.preprocess.get("d_max") is not None:
            return int(self.preprocess["d_max"])
        d = [m.max_distance() for _, m, _t in self.variants() if m.max_distance() is not None]
        return max(d) if d else None


def tu_name(path: Path) -> str:
    """Dataset name inside a TU directory: manifest entry, else the unique ``*_A.txt`` prefix."""
    manifest = path / "manifest.json"
    if manifest.is_file():
        name = json.loads(manifest.read_text()).get("name")
        if name:
            return name
    found = sorted(p.name[:-6] for p in path.glob("*_A.txt")) if path.is_dir() else []
    return found[0] if len(found) == 1 else path.name


def load_dataset(spec: dict, base_dir: Path | None = None) -> Dataset:
    """Build or read the dataset a run config refers to."""
    if "generator" in spec:
        ds = generate(spec["generator"], spec.get("params") or {}, int(spec.get("seed", 0)))
    else:
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        ds = parse_tu_dataset(path, spec.get("name") or tu_name(path))
    if ds.task == "regression":
        if spec.get("normalize"):
            ds, _ = normalize_targets(ds)
        if spec.get("target") is not None:
            ds = select_target(ds, int(spec["target"]))
    return ds
