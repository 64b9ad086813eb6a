"""Landmark-driven face alignment: similarity fit, bilinear warp, crop and flip."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import DataError, GeometryError, ParseError, SchemaError

FIVE_POINT_NAMES = ("left_eye", "right_eye", "nose_tip", "mouth_left", "mouth_right")
LANDMARK_HEADER = ["frame"] + [f"{axis}{i}" for i in range(5) for axis in ("x", "y")]

# five-point reference geometry at a 112x112 crop
TEMPLATE_112 = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ]
)
MIN_SPREAD = 1e-6


@dataclass
class LandmarkSet:
    points: np.ndarray
    schema: str = "five_point"
    source_frame: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.schema == "five_point" and len(self.points) != 5:
            raise SchemaError(f"five_point landmarks need 5 points, got {len(self.points)}")
        if not np.all(np.isfinite(self.points)):
            raise DataError(f"non-finite landmark coordinates in frame {self.source_frame}")

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SimilarityTransform:
    """Maps ``p`` to ``scale * R(rotation) @ p + translation``."""

    scale: float = 1.0
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise GeometryError(f"similarity scale must be positive, got {self.scale}")

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return np.array([[self.scale * c, -self.scale * s, tx], [self.scale * s, self.scale * c, ty]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        m = self.matrix
        return pts @ m[:, :2].T + m[:, 2]

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        itx = -inv_scale * (c * tx - s * ty)
        ity = -inv_scale * (s * tx + c * ty)
        return SimilarityTransform(inv_scale, -self.rotation, (itx, ity))

    def compose(self, first: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equal to applying ``first`` and then ``self``."""
        scale = self.scale * first.scale
        rotation = _wrap_angle(self.rotation + first.rotation)
        tx, ty = self.apply(np.array(first.translation))[0]
        return SimilarityTransform(scale, rotation, (float(tx), float(ty)))


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def parse_landmarks(path) -> List[LandmarkSet]:
    """Read the five-point landmark CSV (``frame,x0,y0,...,x4,y4``), sorted by frame.

    Line numbers in errors count data rows from 1 (the header is not counted).
    """
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return []
    reader = csv.reader(text.splitlines())
    header = [h.strip() for h in next(reader)]
    if header != LANDMARK_HEADER:
        raise SchemaError(f"landmark header must be {','.join(LANDMARK_HEADER)}, got {','.join(header)}")
    out = []
    for line, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(LANDMARK_HEADER):
            raise SchemaError(f"line {line}: expected 5 points ({len(LANDMARK_HEADER)} fields), got {len(row)} fields")
        try:
            frame = int(row[0])
            coords = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(f"line {line}: {exc}", line=line) from None
        if not all(math.isfinite(c) for c in coords):
            raise ParseError(f"line {line}: non-finite coordinate", line=line)
        out.append(LandmarkSet(np.array(coords).reshape(5, 2), "five_point", frame))
    out.sort(key=lambda lm: lm.source_frame)
    return out


def write_landmarks(path, landmark_sets) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LANDMARK_HEADER)
        for lm in landmark_sets:
            w.writerow([lm.source_frame] + [repr(float(v)) for v in lm.points.ravel()])


def estimate_similarity(src, dst) -> SimilarityTransform:
    """Least-squares similarity (no reflection) taking ``src`` points onto ``dst``.

    Closed form in complex coordinates: with centred points z (src) and w (dst),
    the optimal ``scale * exp(i * rotation)`` is ``sum(conj(z) * w) / sum(|z|^2)``.
    """
    p = src.points if isinstance(src, LandmarkSet) else np.asarray(src, dtype=np.float64).reshape(-1, 2)
    q = dst.points if isinstance(dst, LandmarkSet) else np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(p) != len(q):
        raise SchemaError(f"point count mismatch: {len(p)} vs {len(q)}")
    if len(p) < 3:
        raise SchemaError(f"similarity estimation needs at least 3 points, got {len(p)}")
    if _spread(p) < MIN_SPREAD:
        raise GeometryError("source points are coincident; similarity is undetermined")
    z = p[:, 0] + 1j * p[:, 1]
    w = q[:, 0] + 1j * q[:, 1]
    zm, wm = z.mean(), w.mean()
    zc, wc = z - zm, w - wm
    a = np.sum(np.conj(zc) * wc) / np.sum(np.abs(zc) ** 2)
    if abs(a) < 1e-12:
        raise GeometryError("destination points are coincident; scale collapses to zero")
    t = wm - a * zm
    return SimilarityTransform(float(abs(a)), float(np.angle(a)), (float(t.real), float(t.imag)))


def _spread(points: np.ndarray) -> float:
    diffs = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diffs ** 2).sum(-1)).max())


def canonical_template(out_size: int) -> LandmarkSet:
    if out_size <= 0:
        raise DataError(f"template size must be positive, got {out_size}")
    return LandmarkSet(TEMPLATE_112 * (out_size / 112), "five_point", 0)


@dataclass
class AlignedFace:
    pixels: np.ndarray
    transform_used: SimilarityTransform
    stage: str = "crop"

    @property
    def size(self):
        return self.pixels.shape


def to_float_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.size == 0:
        raise DataError("image is empty")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise DataError(f"image must be HxW or HxWxC, got shape {img.shape}")
    if np.issubdtype(img.dtype, np.integer):
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def warp_image(image, transform: SimilarityTransform, out_size: int = 256) -> np.ndarray:
    """Bilinear resample of ``image`` into an ``out_size`` square canvas.

    ``transform`` maps source pixel coordinates (x right, y down, centres on
    integers) to canvas coordinates. Samples outside the source read as 0.
    """
    img = to_float_image(image)
    h, w, c = img.shape
    inv = transform.inverse().matrix
    ys, xs = np.mgrid[0:out_size, 0:out_size].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]

    def tap(yy, xx):
        valid = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(valid[..., None], vals, 0.0)

    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bottom = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(out, 0.0, 1.0)


def hflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1]


def warp_and_crop(
    image,
    transform: SimilarityTransform,
    out_size: int = 256,
    crop: Optional[str] = "center",
    crop_size: int = 224,
    flip: str = "none",
    seed: Optional[int] = None,
) -> AlignedFace:
    """Warp into the canvas, then crop (``center``, ``random`` or None) and optionally flip.

    Random crop and flip draw from one generator seeded with ``seed``.
    """
    canvas = warp_image(image, transform, out_size)
    rng = np.random.default_rng(seed)
    if crop is None:
        pixels, stage = canvas, "warp"
    else:
        if crop_size > out_size:
            raise DataError(f"crop {crop_size} larger than canvas {out_size}")
        slack = out_size - crop_size
        if crop == "center":
            top = left = slack // 2
        elif crop == "random":
            top, left = (int(v) for v in rng.integers(0, slack + 1, size=2))
        else:
            raise DataError(f"unknown crop mode {crop!r}")
        pixels = canvas[top:top + crop_size, left:left + crop_size]
        stage = "crop"
    if flip == "random":
        if rng.random() < 0.5:
            pixels = hflip(pixels)
    elif flip == "always":
        pixels = hflip(pixels)
    elif flip != "none":
        raise DataError(f"unknown flip mode {flip!r}")
    return AlignedFace(np.ascontiguousarray(pixels), transform, stage)


def align_face(image, landmarks: LandmarkSet, out_size=256, crop="center", crop_size=224,
               flip="none", seed=None) -> AlignedFace:
    """Fit the detected landmarks onto the canonical template and warp/crop the face."""
    transform = estimate_similarity(landmarks, canonical_template(out_size))
    return warp_and_crop(image, transform, out_size, crop, crop_size, flip, seed)
