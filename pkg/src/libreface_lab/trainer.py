"""Supervised training, frozen-teacher feature-wise distillation, and fold evaluation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import losses as L
from .bundle import ModelBundle, fingerprint
from .errors import ConfigError, DataError, NumericError
from .metrics import (
    FoldSplit,
    aggregate_report,
    classification_report,
    detection_report,
    kfold_split,
    regression_report,
)
from .tensor import OptimizerState, adamw_step, backward, forward, sigmoid

log = logging.getLogger(__name__)

TASK_KINDS = ("au_regression", "au_detection", "fer_classification")
HISTORY_HEADER = ["epoch", "l_fm", "l_task", "l_kl", "total", "val_metric"]


@dataclass
class TrainConfig:
    learning_rate: float = 3e-5
    weight_decay: float = 1e-4
    batch_size: Optional[int] = None  # None: 128, or 32 below 1000 samples
    max_epochs: int = 20
    early_stop_patience: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0
    task: str = "au_regression"

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task!r}", key="task")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.alpha < 0 or self.beta < 0:
            raise ConfigError("learning_rate, weight_decay, alpha and beta must be non-negative", key="learning_rate")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive", key="batch_size")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0", key="max_epochs")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1", key="early_stop_patience")
        if self.max_epochs > 0 and self.early_stop_patience > self.max_epochs:
            raise ConfigError("early_stop_patience cannot exceed max_epochs", key="early_stop_patience")

    def effective_batch_size(self, n_samples: int) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 128 if n_samples >= 1000 else 32


@dataclass
class Dataset:
    """Row-aligned arrays: ``inputs (N, D)``, ``targets (N, K)``, ``subjects (N,)``.

    Regression targets are AU intensities in [0, 5], detection targets are 0/1,
    classification targets are one-hot rows. ``augment``, when given, maps
    ``(row index, rng)`` to a freshly augmented input vector for training.
    """

    inputs: np.ndarray
    targets: np.ndarray
    subjects: np.ndarray
    kind: str = "au_regression"
    split: str = "train"
    target_names: tuple = ()
    augment: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.subjects = np.asarray(self.subjects)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        n = len(self.inputs)
        if len(self.targets) != n or len(self.subjects) != n:
            raise DataError(f"inputs/targets/subjects lengths differ: {n}, {len(self.targets)}, {len(self.subjects)}")
        if self.kind not in TASK_KINDS:
            raise DataError(f"unknown target kind {self.kind!r}")
        t = self.targets
        if self.kind == "au_regression" and t.size and (t.min() < 0 or t.max() > 5):
            raise DataError("AU intensity targets must lie in [0, 5]")
        if self.kind == "au_detection" and not np.all((t == 0) | (t == 1)):
            raise DataError("AU detection targets must be 0/1")
        if self.kind == "fer_classification" and t.size:
            L.validate_one_hot(t)
        if not self.target_names:
            self.target_names = tuple(f"out{j}" for j in range(t.shape[1]))

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx, split=None) -> "Dataset":
        idx = np.asarray(idx)
        aug = self.augment
        if aug is not None:
            base = np.arange(len(self))[idx]
            aug = _SubsetAugment(self.augment, base)
        return Dataset(self.inputs[idx], self.targets[idx], self.subjects[idx], self.kind,
                       split or self.split, self.target_names, aug)


class _SubsetAugment:
    def __init__(self, fn, base):
        self.fn, self.base = fn, base

    def __call__(self, i, rng):
        return self.fn(int(self.base[i]), rng)


def subject_split(data: Dataset, val_subjects: int, seed=0):
    """Hold out ``val_subjects`` whole subjects (seeded choice) for validation."""
    subjects = np.unique(data.subjects)
    if not 1 <= val_subjects < len(subjects):
        raise DataError(f"cannot hold out {val_subjects} of {len(subjects)} subjects")
    held = np.random.default_rng(seed).choice(subjects, size=val_subjects, replace=False)
    mask = np.isin(data.subjects, held)
    return data.subset(np.flatnonzero(~mask), "train"), data.subset(np.flatnonzero(mask), "validation")


def make_batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    """Index batches for one epoch; shuffle keyed by ``(seed, epoch)``, short final batch kept."""
    n = len(dataset)
    if n == 0:
        raise DataError("cannot batch an empty dataset")
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class EarlyStopState:
    patience: int = 5
    best_metric: float = -math.inf
    best_epoch: int = 0
    epoch: int = 0
    epochs_since_improvement: int = 0
    best_parameters: Optional[dict] = None


def early_stopping_update(state: EarlyStopState, epoch_metric: float, params):
    """Higher is better; only a strict improvement resets the counter. Returns ``(state, stop)``."""
    if not math.isfinite(epoch_metric):
        raise NumericError(f"non-finite validation metric {epoch_metric}")
    epoch = state.epoch + 1
    if epoch_metric > state.best_metric:
        snapshot = {k: v.copy() for k, v in params.items()} if isinstance(params, dict) else params
        new = replace(state, best_metric=float(epoch_metric), best_epoch=epoch, epoch=epoch,
                      epochs_since_improvement=0, best_parameters=snapshot)
    else:
        new = replace(state, epoch=epoch, epochs_since_improvement=epoch - state.best_epoch)
    return new, new.epochs_since_improvement >= new.patience


@dataclass
class EpochRecord:
    epoch: int
    l_fm: float
    l_task: float
    l_kl: float
    total: float
    val_metric: float

    @classmethod
    def from_breakdown(cls, epoch, b: L.LossBreakdown, val_metric):
        return cls(epoch, b.l_fm, b.l_task, b.l_kl, b.total, val_metric)


def history_csv(history: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for r in history:
        w.writerow([r.epoch] + [repr(float(getattr(r, k))) for k in HISTORY_HEADER[1:]])
    return buf.getvalue()


def predict_outputs(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Raw classifier outputs at training precision (float64)."""
    feats, _ = forward(bundle.encoder_params, bundle.encoder, x)
    out, _ = forward(bundle.classifier_params, bundle.classifier, feats)
    return out


def evaluate(bundle: ModelBundle, data: Dataset, fold_id=None):
    return _report_from_outputs(predict_outputs(bundle, data.inputs), data, fold_id)


def validation_metric(bundle: ModelBundle, data: Dataset) -> float:
    """Average PCC (regression), average F1 (detection) or accuracy (classification)."""
    report = evaluate(bundle, data)
    if data.kind == "au_regression":
        return report.avg_pcc
    if data.kind == "au_detection":
        return report.avg_f1
    return report.accuracy


def _batch_inputs(data: Dataset, idx, seed, epoch):
    if data.augment is None:
        return data.inputs[idx]
    rng = np.random.default_rng([seed, epoch, 7])
    return np.stack([data.augment(int(i), rng) for i in idx])


def _check_compatible(model: ModelBundle, data: Dataset, cfg: TrainConfig):
    if model.encoder.in_dim != data.inputs.shape[1]:
        raise ConfigError(f"model input {model.encoder.in_dim} != data width {data.inputs.shape[1]}", key="inputs")
    if model.output_dim != data.targets.shape[1]:
        raise ConfigError(f"model outputs {model.output_dim} != target width {data.targets.shape[1]}", key="targets")
    if data.kind != cfg.task:
        raise ConfigError(f"dataset kind {data.kind} != configured task {cfg.task}", key="task")


def _finite_or_abort(value, epoch, batch):
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch}")


def _run(model, train, val, cfg, step_fn):
    """Shared epoch loop: batches, AdamW, per-epoch validation, early stopping."""
    history: List[EpochRecord] = []
    if cfg.max_epochs == 0:
        return model, history
    params = model.params()
    opt = OptimizerState(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    stop_state = EarlyStopState(patience=cfg.early_stop_patience)
    batch_size = cfg.effective_batch_size(len(train))
    for epoch in range(1, cfg.max_epochs + 1):
        sums = np.zeros(3)
        for b, idx in enumerate(make_batches(train, batch_size, cfg.seed, epoch)):
            x = _batch_inputs(train, idx, cfg.seed, epoch)
            (l_fm, l_task, l_kl), grads = step_fn(model.with_params(params), x, train.targets[idx])
            _finite_or_abort(l_fm + l_task + l_kl, epoch, b)
            try:
                params, opt = adamw_step(opt, params, grads)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            sums += np.array([l_fm, l_task, l_kl]) * len(idx)
        means = sums / len(train)
        current = model.with_params(params)
        metric = validation_metric(current, val)
        breakdown = step_fn.breakdown(*means)
        history.append(EpochRecord.from_breakdown(epoch, breakdown, metric))
        log.debug("epoch %d total %.6f val %.4f", epoch, breakdown.total, metric)
        stop_state, stop = early_stopping_update(stop_state, metric, params)
        if stop:
            break
    return model.with_params(stop_state.best_parameters), history


class _SupervisedStep:
    def __init__(self, kind):
        self.kind = kind

    def __call__(self, model: ModelBundle, x, y):
        feats, enc_tape = forward(model.encoder_params, model.encoder, x, record=True)
        out, cls_tape = forward(model.classifier_params, model.classifier, feats, record=True)
        loss, g_out = L.task_loss(self.kind, out, y)
        g_cls, g_feats = backward(cls_tape, g_out)
        g_enc, _ = backward(enc_tape, g_feats)
        grads = {f"classifier.{k}": v for k, v in g_cls.items()}
        grads.update({f"encoder.{k}": v for k, v in g_enc.items()})
        return (0.0, loss, 0.0), grads

    @staticmethod
    def breakdown(l_fm, l_task, l_kl):
        return L.total_loss(l_fm, l_task, l_kl, alpha=1.0, beta=0.0)


def train_supervised(model: ModelBundle, train: Dataset, val: Dataset, cfg: TrainConfig):
    """Train encoder and classifier on the task loss; returns ``(best-epoch model, history)``."""
    _check_compatible(model, train, cfg)
    _check_compatible(model, val, cfg)
    return _run(model, train, val, cfg, _SupervisedStep(cfg.task))


class _DistillStep:
    """Gradients of ``L_FM + alpha * L_task + beta * L_KL`` for the student.

    Teacher features come from the frozen teacher encoder; both KL logit sets
    come from the frozen teacher classifier, the student's after interpolating
    its features to the teacher width.
    """

    def __init__(self, teacher: ModelBundle, cfg: TrainConfig):
        self.teacher = teacher
        self.kind = cfg.task
        self.alpha, self.beta = cfg.alpha, cfg.beta

    def losses(self, student: ModelBundle, x, y, need_grads=True):
        t = self.teacher
        f_t, _ = forward(t.encoder_params, t.encoder, x)
        y_t, _ = forward(t.classifier_params, t.classifier, f_t)

        f_s, enc_tape = forward(student.encoder_params, student.encoder, x, record=True)
        pred, cls_tape = forward(student.classifier_params, student.classifier, f_s, record=True)
        w = L.interpolation_matrix(f_s.shape[-1], f_t.shape[-1])
        y_s, kl_tape = forward(t.classifier_params, t.classifier, f_s @ w.T, record=True)

        l_fm, g_fm = L.feature_match_loss(f_t, f_s)
        l_task, g_pred = L.task_loss(self.kind, pred, y)
        l_kl, g_ys = L.kl_distill_loss(y_t, y_s)
        if not need_grads:
            return (l_fm, l_task, l_kl), None

        g_cls, g_fs_task = backward(cls_tape, self.alpha * g_pred)
        _, g_interp = backward(kl_tape, self.beta * g_ys)  # teacher-classifier grads discarded
        g_fs = g_fm + g_fs_task + g_interp @ w
        g_enc, _ = backward(enc_tape, g_fs)
        grads = {f"classifier.{k}": v for k, v in g_cls.items()}
        grads.update({f"encoder.{k}": v for k, v in g_enc.items()})
        return (l_fm, l_task, l_kl), grads

    def __call__(self, student, x, y):
        return self.losses(student, x, y)

    def breakdown(self, l_fm, l_task, l_kl):
        return L.total_loss(l_fm, l_task, l_kl, self.alpha, self.beta)


def distill_breakdown(teacher, student, x, y, cfg: TrainConfig) -> L.LossBreakdown:
    """Loss breakdown of one batch without updating anything."""
    step = _DistillStep(teacher, cfg)
    (l_fm, l_task, l_kl), _ = step.losses(student, x, y, need_grads=False)
    return step.breakdown(l_fm, l_task, l_kl)


def distill(teacher: ModelBundle, student_init: ModelBundle, train: Dataset, val: Dataset, cfg: TrainConfig):
    """Feature-wise distillation into the student; the teacher is never updated.

    Returns ``(best-epoch student, history)`` with one loss breakdown per epoch.
    """
    frozen = teacher.copy()
    digest = fingerprint(frozen)
    if frozen.encoder.in_dim != student_init.encoder.in_dim:
        raise ConfigError(
            f"teacher input {frozen.encoder.in_dim} != student input {student_init.encoder.in_dim}", key="inputs"
        )
    if frozen.classifier.in_dim != frozen.feature_dim:
        raise ConfigError("teacher classifier does not consume teacher features", key="feature_dim")
    _check_compatible(student_init, train, cfg)
    _check_compatible(student_init, val, cfg)
    result = _run(student_init, train, val, cfg, _DistillStep(frozen, cfg))
    if fingerprint(frozen) != digest:
        raise NumericError("teacher parameters changed during distillation")
    return result


def cross_validate(data: Dataset, k: int, seed: int, fit: Optional[Callable] = None,
                   bundle: Optional[ModelBundle] = None, mode: str = "pooled", val_fraction_subjects: int = 1):
    """Subject-disjoint k-fold evaluation.

    Either ``fit(train, val, fold) -> ModelBundle`` trains a model per fold, or a
    fixed ``bundle`` is scored on every test fold. Returns
    ``(per-fold reports, summary report, FoldSplit)``; the summary pools test
    predictions across folds (``mode="pooled"``) or averages the per-fold
    reports (``mode="per_fold"``).
    """
    if (fit is None) == (bundle is None):
        raise ConfigError("pass exactly one of fit or bundle", key="fit")
    split = kfold_split(data.subjects, k, seed)
    reports, preds, order = [], [], []
    for fold in range(k):
        test_mask = split.test_mask(data.subjects, fold)
        test_idx = np.flatnonzero(test_mask)
        if fit is not None:
            train_idx = np.flatnonzero(~test_mask)
            val_subjects = _validation_subjects(split, fold, data, val_fraction_subjects)
            inner_val = np.isin(data.subjects[train_idx], val_subjects)
            if inner_val.all() or not inner_val.any():
                tr, va = data.subset(train_idx, "train"), data.subset(train_idx, "validation")
            else:
                tr = data.subset(train_idx[~inner_val], "train")
                va = data.subset(train_idx[inner_val], "validation")
            model = fit(tr, va, fold)
        else:
            model = bundle
        test = data.subset(test_idx, "test")
        reports.append(evaluate(model, test, fold_id=fold))
        preds.append(predict_outputs(model, test.inputs))
        order.append(test_idx)
    if mode == "per_fold":
        summary = aggregate_report(reports)
    elif mode == "pooled":
        idx = np.concatenate(order)
        pooled = Dataset(data.inputs[idx], data.targets[idx], data.subjects[idx], data.kind, "test", data.target_names)
        summary = _report_from_outputs(np.concatenate(preds), pooled, fold_id="pooled")
    else:
        raise ConfigError(f"unknown aggregation mode {mode!r}", key="mode")
    return reports, summary, split


def _validation_subjects(split: FoldSplit, test_fold: int, data: Dataset, n_folds: int):
    """Subjects of the next fold(s) serve as the inner validation set."""
    folds = [(test_fold + 1 + j) % split.k for j in range(n_folds)]
    return [s for s, f in split.assignments.items() if f in folds and f != test_fold]


def _report_from_outputs(out, data: Dataset, fold_id=None):
    if data.kind == "au_regression":
        return regression_report(out, data.targets, data.target_names, fold_id=fold_id)
    if data.kind == "au_detection":
        return detection_report(sigmoid(out), data.targets, data.target_names, fold_id=fold_id)
    return classification_report(out.argmax(axis=1), data.targets.argmax(axis=1), fold_id=fold_id)
