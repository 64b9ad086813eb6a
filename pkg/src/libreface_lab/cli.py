"""Command-line entry point: ``libreface-lab <align|train|distill|eval|infer|bench>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import typing
from dataclasses import fields
from pathlib import Path

import numpy as np

from .alignment import align_face, parse_landmarks
from .bench import BenchConfig, FakeClock, run_benchmark
from .bundle import load_bundle, new_bundle, save_bundle
from .config import COMMANDS, PATH_KEYS, echo_config, field_types, parse_config
from .data_io import load_dataset, load_manifest
from .errors import ConfigError, IOFailure, LibreFaceError
from .metrics import render_table_csv
from .pipeline import list_frames, load_image, run_pipeline
from .tensor import Dense, NetworkSpec, mlp
from .trainer import (
    TrainConfig,
    cross_validate,
    distill,
    history_csv,
    subject_split,
    train_supervised,
    validation_metric,
)

log = logging.getLogger("libreface_lab")


def _flag_type(hint):
    if typing.get_origin(hint) is typing.Union:
        hint = [a for a in typing.get_args(hint) if a is not type(None)][0]
    if typing.get_origin(hint) in (list, typing.List):
        (item,) = typing.get_args(hint)
        return item, "+"
    if hint is typing.Any:
        return _dataset_flag, None
    return hint, None


def _dataset_flag(value: str):
    return json.loads(value) if value.lstrip().startswith("{") else value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libreface-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, cls in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration; flags override its values")
        for fname, hint in field_types(cls).items():
            flag = "--" + fname.replace("_", "-")
            typ, nargs = _flag_type(hint)
            if typ is bool:
                p.add_argument(flag, dest=fname, action=argparse.BooleanOptionalAction, default=None)
            else:
                p.add_argument(flag, dest=fname, type=typ, nargs=nargs, default=None)
    return parser


def _absolute(cfg):
    """Anchor relative path settings (from flags) at the working directory."""
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in PATH_KEYS and isinstance(v, str):
            setattr(cfg, f.name, str(Path(v).resolve()))
        elif f.name in PATH_KEYS and isinstance(v, list):
            setattr(cfg, f.name, [str(Path(p).resolve()) for p in v])
        elif f.name == "dataset" and v is not None:
            setattr(cfg, f.name, load_manifest(v) if isinstance(v, str) else {
                k: (str(Path(x).resolve()) if k in ("annotations", "inputs", "images", "landmarks") else x)
                for k, x in v.items()})
    return cfg


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay, batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs, early_stop_patience=cfg.early_stop_patience,
        alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed, task=cfg.task,
    )


def _default_head(task, width):
    if task == "au_regression" and width == 12:
        return "au_intensity"
    if task == "au_detection" and width == 5:
        return "au_detection"
    if task == "fer_classification":
        return "fer"
    return "raw"


def _fresh_model(cfg, data, hidden, seed, head=None, class_set=None):
    in_dim, width = data.inputs.shape[1], data.targets.shape[1]
    meta = {"provenance": f"libreface-lab {cfg.task} seed={seed}"}
    res = (cfg.dataset or {}).get("input_resolution") if isinstance(cfg.dataset, dict) else None
    if res is None and isinstance(cfg.dataset, dict) and "images" in cfg.dataset:
        res = 8
    if res is not None:
        meta["input_resolution"] = int(res)
    if class_set:
        meta["class_set"] = class_set
    encoder = mlp([in_dim, *hidden, cfg.feature_dim])
    classifier = NetworkSpec((Dense(cfg.feature_dim, width),), role="classifier")
    return new_bundle(encoder, classifier, seed, head=head or _default_head(cfg.task, width), **meta)


def cmd_align(cfg) -> int:
    out = Path(cfg.out)
    (out / "aligned").mkdir(parents=True, exist_ok=True)
    lookup = {}
    for lm in parse_landmarks(cfg.landmarks):
        lookup.setdefault(lm.source_frame, lm)
    written = 0
    crop = None if cfg.crop == "none" else cfg.crop
    from PIL import Image

    for frame, path in enumerate(list_frames(cfg.images)):
        lm = lookup.get(frame)
        if lm is None:
            continue
        face = align_face(load_image(path), lm, cfg.out_size, crop, cfg.crop_size, cfg.flip, seed=cfg.seed + frame)
        Image.fromarray((face.pixels * 255).round().astype(np.uint8)).save(out / "aligned" / f"frame_{frame:06d}.png")
        written += 1
    print(f"aligned {written} frames into {out / 'aligned'}")
    return 0


def cmd_train(cfg) -> int:
    tc = _train_config(cfg)
    data = load_dataset(cfg.dataset, cfg.task, cfg.seed)
    train, val = subject_split(data, cfg.val_subjects, seed=cfg.seed)
    if cfg.init_bundle:
        model = load_bundle(cfg.init_bundle)
    else:
        model = _fresh_model(cfg, data, cfg.hidden, cfg.seed, cfg.head, cfg.class_set)
    model, history = train_supervised(model, train, val, tc)
    out = Path(cfg.out)
    save_bundle(model, out / "model.lfmb")
    (out / "history.csv").write_text(history_csv(history), encoding="utf-8")
    print(f"trained {len(history)} epochs; best validation metric {validation_metric(model, val):.4f}")
    return 0


def cmd_distill(cfg) -> int:
    tc = _train_config(cfg)
    data = load_dataset(cfg.dataset, cfg.task, cfg.seed)
    train, val = subject_split(data, cfg.val_subjects, seed=cfg.seed)
    teacher = load_bundle(cfg.teacher)
    if cfg.student_init:
        student = load_bundle(cfg.student_init)
    else:
        student = _fresh_model(cfg, data, cfg.hidden, cfg.seed, head=teacher.head,
                               class_set=teacher.metadata.get("class_set"))
        student.metadata["input_resolution"] = teacher.metadata.get("input_resolution")
        if student.metadata["input_resolution"] is None:
            del student.metadata["input_resolution"]
    student, history = distill(teacher, student, train, val, tc)
    out = Path(cfg.out)
    save_bundle(student, out / "student.lfmb")
    (out / "history.csv").write_text(history_csv(history), encoding="utf-8")
    print(f"distilled {len(history)} epochs; best validation metric {validation_metric(student, val):.4f}")
    return 0


def cmd_eval(cfg) -> int:
    data = load_dataset(cfg.dataset, cfg.task, cfg.seed)
    if cfg.bundle:
        reports, summary, split = cross_validate(data, cfg.folds, cfg.fold_seed, bundle=load_bundle(cfg.bundle),
                                                 mode=cfg.mode)
    else:
        def fit(train, val, fold):
            tc = _train_config(cfg)
            model = _fresh_model(cfg, data, cfg.hidden, cfg.seed + fold)
            return train_supervised(model, train, val, tc)[0]

        reports, summary, split = cross_validate(data, cfg.folds, cfg.fold_seed, fit=fit, mode=cfg.mode)
    out = Path(cfg.out)
    (out / "report.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    (out / "folds.json").write_text(
        json.dumps([json.loads(r.to_json()) for r in reports], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    metric = "f1" if cfg.task == "au_detection" else "pcc"
    if cfg.task != "fer_classification":
        (out / "table.csv").write_text(render_table_csv({"LibreFace-lab": summary}, metric=metric), encoding="utf-8")
    print(summary.to_json())
    return 0


def _frames_and_bundles(cfg):
    bundles = [load_bundle(p) for p in cfg.bundles]
    paths = list_frames(cfg.frames)
    return bundles, paths


def cmd_infer(cfg) -> int:
    bundles, paths = _frames_and_bundles(cfg)
    out = Path(cfg.out)
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        rows = run_pipeline(paths, cfg.landmarks, bundles, fh, workers=cfg.workers)
    print(f"wrote {rows} rows to {out / 'predictions.csv'}")
    return 0


def cmd_bench(cfg) -> int:
    bundles, paths = _frames_and_bundles(cfg)
    images = [load_image(p) for p in paths] if cfg.mode == "preloaded" else paths
    clock = None
    if cfg.fake_clock:
        try:
            durations = json.loads(Path(cfg.fake_clock).read_text(encoding="utf-8"))["durations"]
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad fake clock fixture {cfg.fake_clock}: {exc}", key="fake_clock") from exc
        clock = FakeClock(durations)
    bc = BenchConfig(bundles, parse_landmarks(cfg.landmarks), cfg.workers, cfg.mode, cfg.warmup,
                     description=f"mode={cfg.mode} workers={cfg.workers} heads={[b.head for b in bundles]}")
    report = run_benchmark(bc, images, cfg.rounds, clock) if clock else run_benchmark(bc, images, cfg.rounds)
    (Path(cfg.out) / "bench.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print("Avg | Std | FPS")
    print(report.table_row())
    return 0


HANDLERS = {
    "align": cmd_align,
    "train": cmd_train,
    "distill": cmd_distill,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "bench": cmd_bench,
}


def dispatch(command: str, cfg) -> int:
    cfg = _absolute(cfg)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    echo_config(cfg, cfg.out)
    return HANDLERS[command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = parse_config(args.command, args.config, flags)
        return dispatch(args.command, cfg)
    except LibreFaceError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [IOFailure]: {exc}", file=sys.stderr)
        return IOFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
