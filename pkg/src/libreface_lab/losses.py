"""Task losses, feature-matching distillation, and the weighted training objective.

Every loss returns ``(value, gradient)`` where the gradient is taken with
respect to the argument the optimizer reaches (predictions, logits, or
student features). Reductions are means over elements and over the batch.
1-D inputs are treated as a batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ShapeError
from .tensor import log_softmax, sigmoid, softmax


@dataclass(frozen=True)
class LossBreakdown:
    l_fm: float
    l_task: float
    l_kl: float
    total: float
    alpha: float = 1.0
    beta: float = 1.0

    def as_row(self):
        return {"l_fm": self.l_fm, "l_task": self.l_task, "l_kl": self.l_kl, "total": self.total}


def _as_batch(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def mse_task_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def validate_one_hot(target: np.ndarray) -> None:
    t = _as_batch(target)
    ok = np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=-1) == 1)
    if not ok:
        raise DataError("classification target must be one-hot (single 1 per row)")


def ce_task_loss(logits, target):
    """Softmax cross-entropy from logits against one-hot targets."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ShapeError(f"logits shape {logits.shape} != target shape {target.shape}")
    validate_one_hot(target)
    z, y = _as_batch(logits), _as_batch(target)
    batch = z.shape[0]
    loss = float(-np.sum(y * log_softmax(z)) / batch)
    grad = (softmax(z) - y) / batch
    return loss, grad.reshape(logits.shape)


def bce_task_loss(logits, target):
    """Element-wise sigmoid + binary cross-entropy, mean over elements (AU detection head)."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ShapeError(f"logits shape {logits.shape} != target shape {target.shape}")
    n = logits.size
    # log(1 + exp(-|z|)) form is overflow-free
    loss = np.maximum(logits, 0) - logits * target + np.log1p(np.exp(-np.abs(logits)))
    return float(loss.sum() / n), (sigmoid(logits) - target) / n


def interpolation_matrix(n: int, m: int) -> np.ndarray:
    """``(m, n)`` matrix sampling a length-``n`` signal at ``m`` evenly spaced positions over ``[0, n-1]``."""
    if n < 1 or m < 1:
        raise DataError(f"interpolation needs non-empty dimensions, got n={n}, m={m}")
    if m == n:
        return np.eye(n)
    w = np.zeros((m, n))
    if n == 1:
        w[:, 0] = 1.0
        return w
    pos = np.linspace(0.0, n - 1, m)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - lo
    rows = np.arange(m)
    w[rows, lo] = 1.0 - frac
    w[rows, lo + 1] += frac
    return w


def interpolate_features(f, target_dim: int) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.size == 0 or f.shape[-1] == 0:
        raise DataError("cannot interpolate an empty feature vector")
    return f @ interpolation_matrix(f.shape[-1], target_dim).T


def feature_match_loss(f_teacher, f_student):
    """MSE between teacher features and student features interpolated to the teacher width.

    Gradient is with respect to ``f_student`` (through the interpolation weights).
    """
    f_t = np.asarray(f_teacher, dtype=np.float64)
    f_s = np.asarray(f_student, dtype=np.float64)
    if f_t.size == 0 or f_s.size == 0:
        raise DataError("feature vectors must be non-empty")
    if f_t.shape[:-1] != f_s.shape[:-1]:
        raise ShapeError(f"batch shapes differ: {f_t.shape} vs {f_s.shape}")
    w = interpolation_matrix(f_s.shape[-1], f_t.shape[-1])
    value, g_interp = mse_task_loss(f_s @ w.T, f_t)
    return value, g_interp @ w


def kl_distill_loss(teacher_logits, student_logits):
    """Cross-entropy of softmax(student) against softmax(teacher); no temperature."""
    t = np.asarray(teacher_logits, dtype=np.float64)
    s = np.asarray(student_logits, dtype=np.float64)
    if t.shape != s.shape:
        raise ShapeError(f"teacher logits {t.shape} != student logits {s.shape}")
    tb, sb = _as_batch(t), _as_batch(s)
    batch = tb.shape[0]
    p_t = softmax(tb)
    loss = float(-np.sum(p_t * log_softmax(sb)) / batch)
    grad = (softmax(sb) - p_t) / batch
    return loss, grad.reshape(s.shape)


def entropy(logits) -> float:
    z = _as_batch(logits)
    return float(-np.sum(softmax(z) * log_softmax(z)) / z.shape[0])


def total_loss(l_fm, l_task, l_kl, alpha=1.0, beta=1.0) -> LossBreakdown:
    values = (l_fm, l_task, l_kl, alpha, beta)
    if not all(math.isfinite(v) for v in values):
        raise NumericError(f"non-finite loss component in {values}")
    return LossBreakdown(
        l_fm=float(l_fm), l_task=float(l_task), l_kl=float(l_kl),
        total=float(l_fm + alpha * l_task + beta * l_kl), alpha=float(alpha), beta=float(beta),
    )


TASK_LOSSES = {
    "au_regression": mse_task_loss,
    "au_detection": bce_task_loss,
    "fer_classification": ce_task_loss,
}


def task_loss(kind: str, pred, target):
    return TASK_LOSSES[kind](pred, target)
