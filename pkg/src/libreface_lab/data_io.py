"""Dataset manifests: annotation CSV plus either an input matrix or raw frames with landmarks."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .alignment import align_face, parse_landmarks
from .errors import ConfigError, DataError, IOFailure, ParseError
from .pipeline import face_to_input, list_frames, load_image
from .trainer import Dataset

MANIFEST_KEYS = {"annotations", "inputs", "images", "landmarks", "input_resolution", "num_classes", "augment"}


def read_annotations(path, task: str, num_classes=None):
    """``frame,subject,<targets>`` CSV -> (frames, subjects, targets, target names)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read annotations {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataError(f"annotation file {path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[:2] != ["frame", "subject"]:
        raise DataError(f"annotation header must start with frame,subject; got {header[:2]}")
    names = tuple(header[2:])
    frames, subjects, values = [], [], []
    for line, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}", line=line)
        try:
            frames.append(int(row[0]))
            values.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise ParseError(f"line {line}: {exc}", line=line) from None
        subjects.append(row[1])
    values = np.array(values, dtype=np.float64).reshape(len(body), len(names))
    if task == "fer_classification":
        if names != ("expression",):
            raise DataError("classification annotations need a single 'expression' column")
        labels = values[:, 0].astype(int)
        m = num_classes or int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= m:
            raise DataError(f"expression labels must lie in [0, {m})")
        return np.array(frames), np.array(subjects), np.eye(m)[labels], tuple(f"class_{i}" for i in range(m))
    return np.array(frames), np.array(subjects), values, names


def load_manifest(manifest) -> dict:
    if isinstance(manifest, (str, Path)):
        path = Path(manifest)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read dataset manifest {path}: {exc}", key="dataset") from exc
        base = path.resolve().parent
        return {k: (str((base / v).resolve()) if k in ("annotations", "inputs", "images", "landmarks")
                    and isinstance(v, str) else v) for k, v in data.items()}
    if not isinstance(manifest, dict):
        raise ConfigError("dataset must be a manifest object or a path to one", key="dataset")
    return dict(manifest)


def load_dataset(manifest, task: str, seed: int = 0) -> Dataset:
    """Build a Dataset from a manifest.

    Either ``inputs`` (a ``.npy`` matrix, row k = frame k) or ``images`` (a
    frame directory) with ``landmarks`` (landmark CSV) and
    ``input_resolution``. With ``augment`` set, image datasets re-draw a
    random 224 crop and horizontal flip each time a sample is batched.
    """
    m = load_manifest(manifest)
    for key in m:
        if key not in MANIFEST_KEYS:
            raise ConfigError(f"unknown dataset manifest key {key!r}", key=key)
    if "annotations" not in m:
        raise ConfigError("dataset manifest needs 'annotations'", key="annotations")
    frames, subjects, targets, names = read_annotations(m["annotations"], task, m.get("num_classes"))
    augment = None
    if "inputs" in m:
        try:
            matrix = np.load(m["inputs"])
        except OSError as exc:
            raise IOFailure(f"cannot read inputs {m['inputs']}: {exc}") from exc
        if frames.size and frames.max() >= len(matrix):
            raise DataError(f"annotation frame {frames.max()} beyond {len(matrix)} input rows")
        inputs = matrix[frames]
    elif "images" in m and "landmarks" in m:
        res = int(m.get("input_resolution", 8))
        paths = list_frames(m["images"])
        lookup = {}
        for lm in parse_landmarks(m["landmarks"]):
            lookup.setdefault(lm.source_frame, lm)
        missing = [int(f) for f in frames if int(f) not in lookup or int(f) >= len(paths)]
        if missing:
            raise DataError(f"annotated frames without image or landmarks: {missing[:5]}")
        images = [load_image(paths[int(f)]) for f in frames]
        marks = [lookup[int(f)] for f in frames]
        inputs = np.stack([face_to_input(align_face(img, lm).pixels, res) for img, lm in zip(images, marks)])
        if m.get("augment"):
            def augment(i, rng, images=images, marks=marks, res=res):
                face = align_face(images[i], marks[i], crop="random", flip="random",
                                  seed=int(rng.integers(2 ** 31)))
                return face_to_input(face.pixels, res).astype(np.float64)
    else:
        raise ConfigError("dataset manifest needs 'inputs' or 'images' + 'landmarks'", key="dataset")
    return Dataset(inputs, targets, subjects, task, "train", names, augment)
