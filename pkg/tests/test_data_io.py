import numpy as np
import pytest

from libreface_lab.data_io import load_dataset, read_annotations
from libreface_lab.errors import ConfigError, DataError, ParseError
from libreface_lab.synthetic import au_regression_dataset


def test_expression_column_becomes_one_hot(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("frame,subject,expression\n0,A,2\n1,B,0\n")
    frames, subjects, targets, _ = read_annotations(p, "fer_classification", num_classes=3)
    np.testing.assert_array_equal(targets, [[0, 0, 1], [1, 0, 0]])
    assert subjects.tolist() == ["A", "B"]


def test_bad_value_names_line(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("frame,subject,AU01\n0,A,1\n1,A,x\n")
    with pytest.raises(ParseError, match="line 2"):
        read_annotations(p, "au_regression")


def test_matrix_manifest(tmp_path):
    np.save(tmp_path / "x.npy", np.arange(12.0).reshape(4, 3))
    (tmp_path / "a.csv").write_text("frame,subject,AU01\n3,A,1\n0,B,2\n")
    data = load_dataset({"annotations": str(tmp_path / "a.csv"), "inputs": str(tmp_path / "x.npy")}, "au_regression")
    np.testing.assert_array_equal(data.inputs, [[9, 10, 11], [0, 1, 2]])


def test_manifest_needs_inputs(tmp_path):
    (tmp_path / "a.csv").write_text("frame,subject,AU01\n0,A,1\n")
    with pytest.raises(ConfigError):
        load_dataset({"annotations": str(tmp_path / "a.csv")}, "au_regression")
    with pytest.raises(ConfigError):
        load_dataset({"annotations": str(tmp_path / "a.csv"), "extra": 1}, "au_regression")


def test_image_manifest_aligns_faces(face_fixture):
    data = load_dataset(face_fixture / "dataset.json", "au_regression")
    assert data.inputs.shape == (49, 8 * 8 * 3)
    assert data.targets.shape == (49, 12)


def test_synthetic_task_is_pinned():
    a = au_regression_dataset(200, seed=0)
    b = au_regression_dataset(200, seed=0)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.targets, b.targets)
    assert a.targets.min() >= 0 and a.targets.max() <= 5
    with pytest.raises(DataError):
        from libreface_lab.trainer import subject_split
        subject_split(a, 40)
