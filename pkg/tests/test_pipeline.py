import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import face_bundle
from libreface_lab.alignment import AlignedFace, SimilarityTransform, parse_landmarks
from libreface_lab.errors import ConfigError
from libreface_lab.pipeline import (
    DETECTION_COLUMNS,
    INTENSITY_COLUMNS,
    list_frames,
    predict_au,
    predict_fer,
    run_pipeline_to_string,
)

FACE = AlignedFace(np.full((224, 224, 3), 0.5), SimilarityTransform())


def zeroed(b):
    flat = {k: np.zeros_like(v) for k, v in b.params().items()}
    return b.with_params(flat)


def with_bias(b, bias):
    flat = {k: np.zeros_like(v) for k, v in b.params().items()}
    flat["classifier.0.bias"] = np.asarray(bias, dtype=float)
    return b.with_params(flat)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_zero_au_bundle():
    rec = predict_au(FACE, zeroed(face_bundle("au", 17)))
    assert set(rec.intensities.values()) == {0.0}
    assert set(rec.detections.values()) == {0.5}


def test_intensity_clamping():
    bias = np.zeros(12)
    bias[6] = 7.3   # AU12
    bias[0] = -0.4  # AU1
    rec = predict_au(FACE, with_bias(face_bundle(), bias))
    assert rec.intensities[12] == 5.0
    assert rec.intensities[1] == 0.0


def test_zero_fer_bundle_is_uniform():
    rec = predict_fer(FACE, zeroed(face_bundle("fer", 8, class_set="affectnet8")))
    np.testing.assert_allclose(rec.probabilities, 0.125)
    assert rec.label == 0 and rec.name == "neutral"


def test_saturated_fer_logit():
    bias = np.zeros(7)
    bias[3] = 100.0
    rec = predict_fer(FACE, with_bias(face_bundle("fer", 7), bias))
    assert rec.label == 3 and rec.probabilities[3] == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_fer_probabilities_sum_to_one(seed):
    face = AlignedFace(np.random.default_rng(seed).uniform(0, 1, (224, 224, 3)), SimilarityTransform())
    rec = predict_fer(face, face_bundle("fer", 8, seed=seed))
    assert rec.probabilities.sum() == pytest.approx(1.0, abs=1e-9)


def test_wrong_head_is_refused():
    with pytest.raises(ConfigError):
        predict_fer(FACE, face_bundle())


def test_au_only_run_leaves_fer_columns_empty(face_fixture):
    frames = list_frames(face_fixture / "frames")[:3]
    out = rows(run_pipeline_to_string(frames, face_fixture / "landmarks.csv", [face_bundle()]))
    assert len(out) == 4
    header = out[0]
    assert header[:2] == ["frame", "success"] and header[-1] == "expression"
    assert header[2:2 + 12] == list(INTENSITY_COLUMNS) and header[14:19] == list(DETECTION_COLUMNS)
    for r in out[1:]:
        assert r[1] == "1" and r[-1] == "" and all(c == "" for c in r[14:19])


def test_missing_landmarks_marks_failure(face_fixture):
    frames = list_frames(face_fixture / "frames")[:10]
    out = rows(run_pipeline_to_string(frames, face_fixture / "landmarks.csv", [face_bundle()]))
    success = [r[1] for r in out[1:]]
    assert success[7] == "0" and success.count("0") == 1


def test_degenerate_landmarks_mark_failure(face_fixture):
    lms = parse_landmarks(face_fixture / "landmarks.csv")[:2]
    lms[1].points[:] = 10.0
    frames = list_frames(face_fixture / "frames")[:2]
    out = rows(run_pipeline_to_string(frames, lms, [face_bundle()]))
    assert [r[1] for r in out[1:]] == ["1", "0"]


def test_worker_count_does_not_change_bytes(face_fixture):
    frames = list_frames(face_fixture / "frames")
    bundles = [face_bundle(), face_bundle("au_detection", 5, seed=1), face_bundle("fer", 8, seed=2)]
    one = run_pipeline_to_string(frames, face_fixture / "landmarks.csv", bundles, workers=1)
    four = run_pipeline_to_string(frames, face_fixture / "landmarks.csv", bundles, workers=4)
    assert one == four
    assert [int(r[0]) for r in rows(one)[1:]] == list(range(50))


def test_duplicate_heads_are_refused(face_fixture):
    with pytest.raises(ConfigError):
        run_pipeline_to_string([], face_fixture / "landmarks.csv", [face_bundle(), face_bundle("au", 17)])
