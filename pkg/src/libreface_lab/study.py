"""Paired distillation-vs-baseline study on the pinned synthetic AU regression task."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List

from .bundle import ModelBundle, fingerprint, new_bundle
from .synthetic import au_regression_dataset, subject_split
from .tensor import Dense, NetworkSpec, mlp
from .trainer import TrainConfig, distill, train_supervised, validation_metric


@dataclass
class StudyConfig:
    n_samples: int = 2000
    input_dim: int = 16
    n_targets: int = 12
    n_subjects: int = 40
    # label-scarce regime: 6 labeled subjects (300 samples) train, 34 validate
    val_subjects: int = 34
    data_seed: int = 0
    teacher_hidden: int = 64
    student_hidden: int = 8
    feature_dim: int = 64
    teacher_lr: float = 1e-3
    teacher_epochs: int = 60
    teacher_patience: int = 10
    student_lr: float = 1e-2
    student_epochs: int = 20
    student_patience: int = 5
    batch_size: int = 32
    alpha: float = 1.0
    beta: float = 1.0
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass
class StudyResult:
    teacher_metric: float
    baseline: List[float] = field(default_factory=list)
    distilled: List[float] = field(default_factory=list)
    teacher_hash_before: str = ""
    teacher_hash_after: str = ""
    seconds: float = 0.0

    @property
    def wins(self) -> int:
        return sum(d > b for b, d in zip(self.baseline, self.distilled))


def _head(feature_dim, n_targets):
    return NetworkSpec((Dense(feature_dim, n_targets),), role="classifier")


def run_study(cfg: StudyConfig = StudyConfig()) -> StudyResult:
    t0 = time.perf_counter()
    data = au_regression_dataset(cfg.n_samples, cfg.input_dim, cfg.n_targets, cfg.n_subjects, seed=cfg.data_seed)
    train, val = subject_split(data, cfg.val_subjects, seed=cfg.data_seed)
    head = "au_intensity" if cfg.n_targets == 12 else "raw"

    teacher = new_bundle(mlp([cfg.input_dim, cfg.teacher_hidden, cfg.feature_dim]),
                         _head(cfg.feature_dim, cfg.n_targets), seed=100, head=head,
                         provenance="synthetic teacher")
    teacher, _ = train_supervised(teacher, train, val, TrainConfig(
        learning_rate=cfg.teacher_lr, max_epochs=cfg.teacher_epochs,
        early_stop_patience=cfg.teacher_patience, batch_size=cfg.batch_size, seed=100))
    result = StudyResult(teacher_metric=validation_metric(teacher, val), teacher_hash_before=fingerprint(teacher))

    for seed in cfg.seeds:
        student = new_bundle(mlp([cfg.input_dim, cfg.student_hidden, cfg.feature_dim]),
                             _head(cfg.feature_dim, cfg.n_targets), seed=seed, head=head,
                             provenance="synthetic student")
        tc = TrainConfig(learning_rate=cfg.student_lr, max_epochs=cfg.student_epochs,
                         early_stop_patience=cfg.student_patience, batch_size=cfg.batch_size,
                         alpha=cfg.alpha, beta=cfg.beta, seed=seed)
        base, _ = train_supervised(student, train, val, tc)
        dist, _ = distill(teacher, student, train, val, tc)
        result.baseline.append(validation_metric(base, val))
        result.distilled.append(validation_metric(dist, val))
    result.teacher_hash_after = fingerprint(teacher)
    result.seconds = time.perf_counter() - t0
    return result
