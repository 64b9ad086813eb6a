"""Evaluation metrics, subject-disjoint folds, and table-style report aggregation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError


class UndefinedCorrelationError(DataError):
    pass


def pcc(x, y) -> float:
    """Sample Pearson correlation. Raises if either input is constant."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DataError("correlation needs at least two samples")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def error_metrics(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise DataError(f"length mismatch: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise DataError("error metrics need at least one sample")
    d = pred - truth
    return float(np.mean(np.abs(d))), float(np.mean(d * d))


def f1_binary(pred_probs, labels, threshold=0.5) -> float:
    probs = np.asarray(pred_probs, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if probs.shape != labels.shape:
        raise DataError(f"length mismatch: {probs.size} vs {labels.size}")
    if np.any((probs < 0) | (probs > 1)):
        raise DataError("probabilities must lie in [0, 1]")
    pred = probs >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def accuracy(pred_labels, true_labels) -> float:
    a, b = np.asarray(pred_labels).ravel(), np.asarray(true_labels).ravel()
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DataError("accuracy needs at least one sample")
    return float(np.mean(a == b))


@dataclass
class FoldSplit:
    k: int
    assignments: Dict[object, int]
    seed: int

    def subjects_in(self, fold: int) -> list:
        return [s for s, f in self.assignments.items() if f == fold]

    def sizes(self) -> List[int]:
        return [len(self.subjects_in(i)) for i in range(self.k)]

    def test_mask(self, subject_ids, fold: int) -> np.ndarray:
        return np.array([self.assignments[s] == fold for s in subject_ids], dtype=bool)


def kfold_split(subject_ids, k: int, seed: int = 0) -> FoldSplit:
    """Seeded shuffle of the distinct subjects, then round-robin into ``k`` folds."""
    subjects = sorted(set(subject_ids), key=lambda s: (str(type(s)), s))
    if k < 1:
        raise DataError(f"fold count must be >= 1, got {k}")
    if k > len(subjects):
        raise DataError(f"cannot make {k} folds from {len(subjects)} subjects")
    order = np.random.default_rng(seed).permutation(len(subjects))
    assignments = {subjects[j]: pos % k for pos, j in enumerate(order)}
    return FoldSplit(k, assignments, seed)


@dataclass
class MetricsReport:
    per_au_pcc: Dict[str, float] = field(default_factory=dict)
    avg_pcc: Optional[float] = None
    mae: Optional[float] = None
    mse: Optional[float] = None
    per_au_f1: Dict[str, float] = field(default_factory=dict)
    avg_f1: Optional[float] = None
    accuracy: Optional[float] = None
    fold_id: Optional[object] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def make_report(per_au_pcc=None, per_au_f1=None, mae=None, mse=None, accuracy=None, fold_id=None):
    per_au_pcc = dict(per_au_pcc or {})
    per_au_f1 = dict(per_au_f1 or {})
    return MetricsReport(
        per_au_pcc=per_au_pcc,
        avg_pcc=_mean(per_au_pcc.values()),
        mae=mae,
        mse=mse,
        per_au_f1=per_au_f1,
        avg_f1=_mean(per_au_f1.values()),
        accuracy=accuracy,
        fold_id=fold_id,
    )


def aggregate_report(per_fold: Sequence[MetricsReport]) -> MetricsReport:
    """Average per-AU metrics across folds, then recompute the averages from them."""
    if not per_fold:
        raise DataError("nothing to aggregate")
    first = per_fold[0]
    for r in per_fold[1:]:
        if set(r.per_au_pcc) != set(first.per_au_pcc) or set(r.per_au_f1) != set(first.per_au_f1):
            raise DataError("cannot aggregate reports with different AU sets")
    pcc_avg = {au: float(np.mean([r.per_au_pcc[au] for r in per_fold])) for au in first.per_au_pcc}
    f1_avg = {au: float(np.mean([r.per_au_f1[au] for r in per_fold])) for au in first.per_au_f1}
    fold_id = first.fold_id if len(per_fold) == 1 else "aggregate"
    return make_report(
        pcc_avg, f1_avg,
        mae=_mean(r.mae for r in per_fold),
        mse=_mean(r.mse for r in per_fold),
        accuracy=_mean(r.accuracy for r in per_fold),
        fold_id=fold_id,
    )


def au_label(name: str) -> str:
    """``AU01`` -> ``AU1`` as printed in table headers."""
    if name.upper().startswith("AU") and name[2:].isdigit():
        return f"AU{int(name[2:])}"
    return name


def render_table_csv(rows: Dict[str, MetricsReport], metric: str = "pcc", digits: int = 2) -> str:
    """Table-shaped CSV: one row per method, one column per AU, then ``Avg.``.

    F1 is rendered as a percentage.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header_written = False
    for method, report in rows.items():
        per_au = report.per_au_pcc if metric == "pcc" else report.per_au_f1
        avg = report.avg_pcc if metric == "pcc" else report.avg_f1
        scale = 100.0 if metric == "f1" else 1.0
        if not header_written:
            w.writerow(["Method"] + [au_label(a) for a in per_au] + ["Avg."])
            header_written = True
        w.writerow([method] + [f"{v * scale:.{digits}f}" for v in per_au.values()] + [f"{avg * scale:.{digits}f}"])
    return buf.getvalue()


def regression_report(pred, truth, au_names, fold_id=None) -> MetricsReport:
    """Per-AU PCC plus pooled MAE/MSE for ``(samples, n_au)`` arrays.

    A constant prediction column has no defined correlation and scores 0.
    """
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    per = {}
    for j, au in enumerate(au_names):
        try:
            per[au] = pcc(pred[:, j], truth[:, j])
        except UndefinedCorrelationError:
            per[au] = 0.0
    mae, mse = error_metrics(pred, truth)
    return make_report(per_au_pcc=per, mae=mae, mse=mse, fold_id=fold_id)


def detection_report(probs, labels, au_names, threshold=0.5, fold_id=None) -> MetricsReport:
    probs, labels = np.asarray(probs), np.asarray(labels)
    per = {au: f1_binary(probs[:, j], labels[:, j], threshold) for j, au in enumerate(au_names)}
    return make_report(per_au_f1=per, fold_id=fold_id)


def classification_report(pred_labels, true_labels, fold_id=None) -> MetricsReport:
    return make_report(accuracy=accuracy(pred_labels, true_labels), fold_id=fold_id)
