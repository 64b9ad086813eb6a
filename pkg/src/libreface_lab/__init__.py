"""Facial-expression inference engine and teacher-student distillation lab (numpy only)."""

from .alignment import LandmarkSet, SimilarityTransform, align_face, estimate_similarity, parse_landmarks
from .bundle import ModelBundle, load_bundle, new_bundle, save_bundle
from .errors import (
    ConfigError,
    DataError,
    IOFailure,
    LibreFaceError,
    NumericError,
)
from .pipeline import run_pipeline
from .tensor import Dense, NetworkSpec, ReLU, Sigmoid, Softmax, forward, backward, init_network, mlp
from .trainer import Dataset, TrainConfig, cross_validate, distill, train_supervised

__version__ = "0.1.0"
