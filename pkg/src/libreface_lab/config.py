"""Run configuration: JSON file plus command-line overrides, validated per subcommand."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigError

SCHEMA_VERSION = 1


@dataclass
class TrainFields:
    learning_rate: float = 3e-5
    weight_decay: float = 1e-4
    batch_size: Optional[int] = None
    max_epochs: int = 20
    early_stop_patience: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0
    task: str = "au_regression"


@dataclass
class DataFields:
    # inline manifest or path to a manifest JSON; see data_io.load_dataset
    dataset: Any = None
    val_subjects: int = 1


@dataclass
class AlignConfig:
    images: str = None
    landmarks: str = None
    out: str = None
    out_size: int = 256
    crop: str = "center"
    crop_size: int = 224
    flip: str = "none"
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    required = ("images", "landmarks", "out")


@dataclass
class TrainConfigRun(TrainFields, DataFields):
    out: str = None
    init_bundle: Optional[str] = None
    hidden: List[int] = field(default_factory=lambda: [64])
    feature_dim: int = 64
    head: Optional[str] = None
    class_set: Optional[str] = None
    schema_version: int = SCHEMA_VERSION
    required = ("dataset", "out")


@dataclass
class DistillConfigRun(TrainFields, DataFields):
    teacher: str = None
    out: str = None
    student_init: Optional[str] = None
    hidden: List[int] = field(default_factory=lambda: [8])
    feature_dim: int = 64
    schema_version: int = SCHEMA_VERSION
    required = ("teacher", "dataset", "out")


@dataclass
class EvalConfigRun(TrainFields, DataFields):
    out: str = None
    bundle: Optional[str] = None
    folds: int = 5
    fold_seed: int = 0
    mode: str = "pooled"
    hidden: List[int] = field(default_factory=lambda: [64])
    feature_dim: int = 64
    schema_version: int = SCHEMA_VERSION
    required = ("dataset", "out")


@dataclass
class InferConfig:
    bundles: List[str] = None
    frames: str = None
    landmarks: str = None
    out: str = None
    workers: int = 1
    schema_version: int = SCHEMA_VERSION
    required = ("bundles", "frames", "landmarks", "out")


@dataclass
class BenchConfigRun:
    bundles: List[str] = None
    frames: str = None
    landmarks: str = None
    out: str = None
    rounds: int = 5
    workers: int = 1
    mode: str = "preloaded"
    fake_clock: Optional[str] = None
    warmup: bool = True
    schema_version: int = SCHEMA_VERSION
    required = ("bundles", "frames", "landmarks", "out")


COMMANDS = {
    "align": AlignConfig,
    "train": TrainConfigRun,
    "distill": DistillConfigRun,
    "eval": EvalConfigRun,
    "infer": InferConfig,
    "bench": BenchConfigRun,
}
PATH_KEYS = {"images", "landmarks", "out", "init_bundle", "teacher", "student_init", "bundle",
             "bundles", "frames", "fake_clock"}


def field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _check_type(key, value, hint):
    if value is None:
        return None
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        inner = [a for a in typing.get_args(hint) if a is not type(None)]
        return _check_type(key, value, inner[0])
    if hint is Any:
        return value
    if origin in (list, List):
        (item,) = typing.get_args(hint) or (Any,)
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}", key=key)
        return [_check_type(key, v, item) for v in value]
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}", key=key)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}", key=key)
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}", key=key)
        return value
    return value


def parse_config(command: str, path=None, flags: Optional[Dict[str, Any]] = None, check_required: bool = True):
    """Resolve the effective config: defaults, then the JSON file, then flags.

    Unknown keys and type mismatches raise ConfigError naming the key.
    Relative paths in a config file are taken relative to that file.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", key="command")
    cls = COMMANDS[command]
    types = field_types(cls)
    values: Dict[str, Any] = {}
    base_dir = None
    if path is not None:
        base_dir = Path(path).resolve().parent
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", key="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}", key="config") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object", key="config")
        values.update(_resolve_paths(loaded, base_dir))
    values.update({k: v for k, v in (flags or {}).items() if v is not None})
    for key in values:
        if key not in types:
            raise ConfigError(f"unknown config key {key!r} for {command}", key=key)
    checked = {k: _check_type(k, v, types[k]) for k, v in values.items()}
    if checked.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {checked['schema_version']}", key="schema_version")
    cfg = cls(**checked)
    if check_required:
        for key in cls.required:
            if getattr(cfg, key) in (None, [], ""):
                raise ConfigError(f"missing required setting {key!r} for {command}", key=key)
    return cfg


def _resolve_paths(values: dict, base_dir: Path) -> dict:
    out = {}
    for k, v in values.items():
        if k in PATH_KEYS and isinstance(v, str):
            out[k] = str((base_dir / v).resolve()) if not Path(v).is_absolute() else v
        elif k in PATH_KEYS and isinstance(v, list):
            out[k] = [str((base_dir / p).resolve()) if isinstance(p, str) and not Path(p).is_absolute() else p
                      for p in v]
        elif k == "dataset" and isinstance(v, str):
            out[k] = str((base_dir / v).resolve()) if not Path(v).is_absolute() else v
        elif k == "dataset" and isinstance(v, dict):
            out[k] = {dk: (str((base_dir / dv).resolve()) if dk in ("inputs", "images", "landmarks", "annotations")
                           and isinstance(dv, str) and not Path(dv).is_absolute() else dv)
                      for dk, dv in v.items()}
        else:
            out[k] = v
    return out


def config_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def echo_config(cfg, out_dir) -> Path:
    """Write the resolved config (absolute paths) as ``config.json`` in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "config.json"
    target.write_text(json.dumps(config_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target
