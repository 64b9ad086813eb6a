"""Pinned synthetic data: an AU-like regression task and rendered face frames."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .alignment import LandmarkSet, TEMPLATE_112
from .bundle import INTENSITY_AUS
from .trainer import Dataset, subject_split  # noqa: F401  (re-exported)

AU_NAMES = tuple(f"AU{a:02d}" for a in INTENSITY_AUS)


def au_regression_dataset(n_samples=2000, input_dim=16, n_targets=12, n_subjects=40, seed=0,
                          noise=0.3, hidden=32, sample_seed=None) -> Dataset:
    """Targets are a fixed random two-layer map of the inputs, squashed into [0, 5] with label noise.

    ``seed`` fixes the target function; ``sample_seed`` (default: ``seed``)
    draws the inputs and noise, so two datasets can share one function.
    """
    frng = np.random.default_rng(seed)
    a = frng.standard_normal((input_dim, hidden)) / np.sqrt(input_dim)
    b = frng.standard_normal((hidden, n_targets)) / np.sqrt(hidden)
    rng = np.random.default_rng([seed, 1]) if sample_seed is None else np.random.default_rng([seed, 2, sample_seed])
    x = rng.standard_normal((n_samples, input_dim))
    z = np.maximum(x @ a, 0) @ b
    # standardize with population statistics of the function, not the sample
    zs = np.maximum(frng.standard_normal((20000, input_dim)) @ a, 0) @ b
    z = (z - zs.mean(0)) / zs.std(0)
    y = 5.0 / (1.0 + np.exp(-1.5 * z)) + noise * rng.standard_normal(z.shape)
    y = np.clip(y, 0.0, 5.0)
    subjects = np.repeat(np.arange(n_subjects), int(np.ceil(n_samples / n_subjects)))[:n_samples]
    names = AU_NAMES if n_targets == len(AU_NAMES) else tuple(f"AU{j}" for j in range(n_targets))
    return Dataset(x, y, subjects, "au_regression", "train", names)


def separable_dataset(n_samples=200, seed=0) -> Dataset:
    """Two Gaussian blobs separated by a wide margin, one-hot labels."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % 2
    centers = np.array([[-3.0, -3.0], [3.0, 3.0]])
    x = centers[labels] + 0.5 * rng.standard_normal((n_samples, 2))
    y = np.eye(2)[labels]
    return Dataset(x, y, np.arange(n_samples) % 10, "fer_classification", "train", ("class_0", "class_1"))


def render_face(intensities, size=(96, 96), seed=0, jitter=4.0, angle=0.2):
    """Grey face-like frame plus its five landmarks.

    Eye and mouth blobs darken with the AU intensities so an aligned crop
    carries a learnable signal. Returns ``(image uint8 HxWx3, LandmarkSet)``.
    """
    rng = np.random.default_rng(seed)
    h, w = size
    scale = min(h, w) / 112 * rng.uniform(0.8, 1.0)
    theta = rng.uniform(-angle, angle)
    c, s = np.cos(theta), np.sin(theta)
    centered = TEMPLATE_112 - 56.0
    rot = centered @ np.array([[c, s], [-s, c]]) * scale
    pts = rot + np.array([w / 2, h / 2]) + rng.uniform(-jitter, jitter, size=2)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w), 0.75) + 0.03 * rng.standard_normal((h, w))
    intensities = np.asarray(intensities, dtype=np.float64)
    k = len(intensities)
    for j, (px, py) in enumerate(pts):
        level = intensities[j % k] if k else 0.0
        radius = (3.0 + 1.2 * level) * scale
        img -= (0.1 + 0.1 * level) * np.exp(-((xx - px) ** 2 + (yy - py) ** 2) / (2 * radius ** 2))
    img = np.clip(img, 0, 1)
    rgb = np.stack([img, img * 0.95, img * 0.9], axis=-1)
    return (rgb * 255).round().astype(np.uint8), LandmarkSet(pts, "five_point", 0)


def face_frames(n_frames, size=(96, 96), seed=0, n_subjects=6):
    """Rendered frames with landmark sets and their AU intensity labels."""
    rng = np.random.default_rng(seed)
    images, landmarks, labels = [], [], []
    for f in range(n_frames):
        y = np.clip(rng.uniform(0, 5, size=len(AU_NAMES)), 0, 5)
        img, lm = render_face(y, size=size, seed=seed * 100_003 + f)
        lm.source_frame = f
        images.append(img)
        landmarks.append(lm)
        labels.append(y)
    subjects = np.arange(n_frames) % n_subjects
    return images, landmarks, np.array(labels), subjects


def write_face_fixture(root, n_frames=50, size=(96, 96), seed=0, n_subjects=6, drop_landmarks=()):
    """Write frames/, landmarks.csv, annotations.csv and dataset.json under ``root``.

    Frames listed in ``drop_landmarks`` get no landmark row (pipeline marks them
    ``success=0``); they are also left out of the annotations.
    """
    from PIL import Image

    from .alignment import write_landmarks

    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    images, marks, labels, subjects = face_frames(n_frames, size, seed, n_subjects)
    for f, img in enumerate(images):
        Image.fromarray(img).save(root / "frames" / f"frame_{f:05d}.png")
    dropped = set(drop_landmarks)
    write_landmarks(root / "landmarks.csv", [lm for lm in marks if lm.source_frame not in dropped])
    with open(root / "annotations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "subject", *AU_NAMES])
        for f in range(n_frames):
            if f not in dropped:
                w.writerow([f, f"S{subjects[f]:02d}", *(f"{v:.4f}" for v in labels[f])])
    manifest = {"annotations": "annotations.csv", "images": "frames", "landmarks": "landmarks.csv",
                "input_resolution": 8}
    (root / "dataset.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return root
