"""Frame-level inference: align, crop, run the enabled heads, stream ordered CSV rows."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .alignment import AlignedFace, LandmarkSet, align_face, parse_landmarks
from .bundle import DETECTION_AUS, INTENSITY_AUS, ModelBundle
from .errors import ConfigError, DataError, IOFailure, PipelineIOError, ShapeError
from .tensor import forward, sigmoid, softmax

INTENSITY_COLUMNS = [f"AU{a:02d}_r" for a in INTENSITY_AUS]
DETECTION_COLUMNS = [f"AU{a:02d}_c" for a in DETECTION_AUS]
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".npy")
CROP_SIZE = 224


@dataclass
class AURecord:
    frame: int
    intensities: Optional[Dict[int, float]] = None
    detections: Optional[Dict[int, float]] = None


@dataclass
class ExpressionRecord:
    frame: int
    label: int
    name: str
    probabilities: np.ndarray
    class_set: str


def load_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".npy":
        return np.load(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def list_frames(directory) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise IOFailure(f"frame directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def face_to_input(pixels: np.ndarray, resolution: int) -> np.ndarray:
    """Block-average an aligned crop down to ``resolution`` squared and flatten (HWC order), float32."""
    h, w = pixels.shape[:2]
    if h % resolution or w % resolution:
        raise ShapeError(f"crop {h}x{w} is not divisible into {resolution}x{resolution} blocks")
    c = pixels.shape[2] if pixels.ndim == 3 else 1
    blocks = pixels.reshape(resolution, h // resolution, resolution, w // resolution, c)
    return blocks.mean(axis=(1, 3)).astype(np.float32).ravel()


def raw_outputs(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Classifier outputs evaluated at 32-bit precision."""
    enc, cls = bundle.float32()
    feats, _ = forward(enc, bundle.encoder, np.asarray(x, dtype=np.float32))
    out, _ = forward(cls, bundle.classifier, feats)
    return out


def _face_input(face: AlignedFace, bundle: ModelBundle) -> np.ndarray:
    if face.pixels.shape[:2] != (CROP_SIZE, CROP_SIZE):
        raise ShapeError(f"expected a {CROP_SIZE}x{CROP_SIZE} crop, got {face.pixels.shape[:2]}")
    res = bundle.metadata.get("input_resolution")
    if res is None:
        raise ConfigError("bundle has no input_resolution; it cannot consume face crops", key="input_resolution")
    return face_to_input(face.pixels, res)


def predict_au(face: AlignedFace, bundle: ModelBundle, frame: int = 0) -> AURecord:
    """Intensities are clamped to [0, 5]; detection outputs pass through a sigmoid."""
    if bundle.head not in ("au", "au_intensity", "au_detection"):
        raise ConfigError(f"predict_au needs an AU head, bundle head is {bundle.head!r}", key="head")
    out = raw_outputs(bundle, _face_input(face, bundle)).astype(np.float64)
    rec = AURecord(frame)
    n_int = len(INTENSITY_AUS)
    if bundle.head in ("au", "au_intensity"):
        vals = np.clip(out[:n_int], 0.0, 5.0)
        rec.intensities = {au: float(v) for au, v in zip(INTENSITY_AUS, vals)}
    if bundle.head in ("au", "au_detection"):
        det = out[n_int:] if bundle.head == "au" else out
        rec.detections = {au: float(p) for au, p in zip(DETECTION_AUS, sigmoid(det))}
    return rec


def predict_fer(face: AlignedFace, bundle: ModelBundle, frame: int = 0) -> ExpressionRecord:
    if bundle.head != "fer":
        raise ConfigError(f"predict_fer needs a fer head, bundle head is {bundle.head!r}", key="head")
    logits = raw_outputs(bundle, _face_input(face, bundle)).astype(np.float64)
    probs = softmax(logits)
    label = int(np.argmax(probs))  # first maximum wins ties
    return ExpressionRecord(frame, label, bundle.class_names[label], probs,
                            bundle.metadata.get("class_set", "custom"))


@dataclass
class _Heads:
    intensity: Optional[ModelBundle] = None
    detection: Optional[ModelBundle] = None
    fer: Optional[ModelBundle] = None

    @classmethod
    def from_bundles(cls, bundles: Sequence[ModelBundle]) -> "_Heads":
        if not bundles:
            raise ConfigError("run_pipeline needs at least one bundle", key="bundles")
        heads = cls()
        for b in bundles:
            slots = {"au": ("intensity", "detection"), "au_intensity": ("intensity",),
                     "au_detection": ("detection",), "fer": ("fer",)}.get(b.head)
            if slots is None:
                raise ConfigError(f"bundle head {b.head!r} cannot run in the pipeline", key="head")
            for slot in slots:
                if getattr(heads, slot) is not None:
                    raise ConfigError(f"more than one bundle provides {slot} outputs", key="bundles")
                setattr(heads, slot, b)
            if b.metadata.get("input_resolution") is None:
                raise ConfigError("pipeline bundles need an input_resolution", key="input_resolution")
        return heads

    def header(self) -> List[str]:
        cols = ["frame", "success"] + INTENSITY_COLUMNS + DETECTION_COLUMNS + ["expression"]
        if self.fer is not None:
            cols += [f"expr_prob_{i}" for i in range(self.fer.output_dim)]
        return cols


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _frame_row(frame: int, image, landmarks: Optional[LandmarkSet], heads: _Heads) -> List[str]:
    n_prob = heads.fer.output_dim if heads.fer is not None else 0
    empty = [""] * (len(INTENSITY_COLUMNS) + len(DETECTION_COLUMNS) + 1 + n_prob)
    if landmarks is None:
        return [str(frame), "0"] + empty
    if isinstance(image, (str, Path)):
        try:
            image = load_image(image)
        except (OSError, ValueError) as exc:
            raise PipelineIOError(f"frame {frame}: cannot read {image}: {exc}", frame=frame) from exc
    try:
        face = align_face(image, landmarks)
    except DataError:
        return [str(frame), "0"] + empty
    cells = [str(frame), "1"]
    intensities = detections = None
    for b in {id(b): b for b in (heads.intensity, heads.detection) if b is not None}.values():
        rec = predict_au(face, b, frame)
        intensities = rec.intensities or intensities
        detections = rec.detections or detections
    cells += [_fmt(intensities[a]) for a in INTENSITY_AUS] if intensities else [""] * len(INTENSITY_AUS)
    cells += [_fmt(detections[a]) for a in DETECTION_AUS] if detections else [""] * len(DETECTION_AUS)
    if heads.fer is not None:
        expr = predict_fer(face, heads.fer, frame)
        cells += [expr.name] + [_fmt(p) for p in expr.probabilities]
    else:
        cells += [""]
    return cells


def _landmark_lookup(landmark_source) -> Dict[int, LandmarkSet]:
    if isinstance(landmark_source, (str, Path)):
        landmark_source = parse_landmarks(landmark_source)
    if isinstance(landmark_source, dict):
        return dict(landmark_source)
    lookup = {}
    for lm in landmark_source:
        lookup.setdefault(lm.source_frame, lm)  # first face per frame
    return lookup


def run_pipeline(image_source, landmark_source, bundles: Sequence[ModelBundle], output_sink, workers: int = 1) -> int:
    """Write one CSV row per frame of ``image_source`` to ``output_sink``; returns the row count.

    ``image_source`` is a sequence of images (arrays) or image paths, frame k
    at position k. ``landmark_source`` is a landmark CSV path, a list of
    LandmarkSets, or a ``{frame: LandmarkSet}`` dict. Frames without
    landmarks, or whose landmarks are degenerate, get ``success=0``. Rows are
    written in frame order whatever the worker count.
    """
    heads = _Heads.from_bundles(bundles)
    lookup = _landmark_lookup(landmark_source)
    writer = csv.writer(output_sink, lineterminator="\n")
    writer.writerow(heads.header())

    def work(frame):
        try:
            image = image_source[frame]
        except (OSError, IndexError) as exc:
            raise PipelineIOError(f"frame {frame}: image source failed: {exc}", frame=frame) from exc
        return _frame_row(frame, image, lookup.get(frame), heads)

    frames = range(len(image_source))
    count = 0
    if workers <= 1:
        rows = map(work, frames)
        for row in rows:
            writer.writerow(row)
            count += 1
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(work, frames):
                writer.writerow(row)
                count += 1
    return count


def run_pipeline_to_string(image_source, landmark_source, bundles, workers=1) -> str:
    buf = io.StringIO()
    run_pipeline(image_source, landmark_source, bundles, buf, workers)
    return buf.getvalue()


class NullSink:
    """Text sink that discards everything (benchmark rounds)."""

    def write(self, s):
        return len(s)
