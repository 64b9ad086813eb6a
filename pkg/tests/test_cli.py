import csv
import json

import pytest

from libreface_lab import errors
from libreface_lab.cli import main
from libreface_lab.config import parse_config


@pytest.fixture(scope="module")
def teacher_run(face_fixture, tmp_path_factory):
    out = tmp_path_factory.mktemp("teacher")
    code = main(["train", "--dataset", str(face_fixture / "dataset.json"), "--out", str(out),
                 "--max-epochs", "3", "--early-stop-patience", "2", "--learning-rate", "1e-3",
                 "--val-subjects", "2", "--hidden", "32", "--feature-dim", "32"])
    assert code == 0
    return out


def test_distill_defaults():
    cfg = parse_config("distill", check_required=False)
    assert (cfg.alpha, cfg.beta, cfg.learning_rate, cfg.weight_decay, cfg.max_epochs) == (1.0, 1.0, 3e-5, 1e-4, 20)


def test_flag_overrides_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alpha": 1.0}))
    assert parse_config("distill", p, {"alpha": 2.0}, check_required=False).alpha == 2.0


def test_unknown_key_is_named(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alpah": 1.0}))
    with pytest.raises(errors.ConfigError, match="alpah") as info:
        parse_config("distill", p, check_required=False)
    assert info.value.key == "alpah"


def test_type_mismatch_is_named(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"max_epochs": "ten"}))
    with pytest.raises(errors.ConfigError, match="max_epochs"):
        parse_config("distill", p, check_required=False)


def test_relative_paths_follow_config_file(tmp_path):
    p = tmp_path / "sub" / "c.json"
    p.parent.mkdir()
    p.write_text(json.dumps({"teacher": "t.lfmb", "out": "o"}))
    cfg = parse_config("distill", p, check_required=False)
    assert cfg.teacher == str(tmp_path / "sub" / "t.lfmb")


def test_exit_code_categories():
    assert errors.ConfigError("x").exit_code == 2
    assert errors.ParseError("x").exit_code == 3
    assert errors.NumericError("x").exit_code == 4
    assert errors.BadMagicError("x").exit_code == 5


def test_missing_required_setting_exits_2(tmp_path, capsys):
    assert main(["infer", "--out", str(tmp_path)]) == 2
    assert "bundles" in capsys.readouterr().err


def test_missing_bundle_file_exits_5(face_fixture, tmp_path):
    code = main(["infer", "--bundles", str(tmp_path / "none.lfmb"), "--frames", str(face_fixture / "frames"),
                 "--landmarks", str(face_fixture / "landmarks.csv"), "--out", str(tmp_path / "o")])
    assert code == 5


def test_bad_annotations_exit_3(face_fixture, tmp_path):
    bad = tmp_path / "ann.csv"
    bad.write_text("frame,subject,AU01\n0,S0,nine\n")
    manifest = {"annotations": str(bad), "images": str(face_fixture / "frames"),
                "landmarks": str(face_fixture / "landmarks.csv")}
    assert main(["train", "--dataset", json.dumps(manifest), "--out", str(tmp_path / "o")]) == 3


def test_train_outputs(teacher_run):
    assert (teacher_run / "model.lfmb").exists()
    header = (teacher_run / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,l_fm,l_task,l_kl,total,val_metric"
    echoed = json.loads((teacher_run / "config.json").read_text())
    assert echoed["dataset"]["annotations"].startswith("/")


def test_eval_writes_report_and_table(face_fixture, teacher_run, tmp_path):
    code = main(["eval", "--dataset", str(face_fixture / "dataset.json"), "--bundle",
                 str(teacher_run / "model.lfmb"), "--folds", "3", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["per_au_pcc"]) == 12
    table = list(csv.reader((tmp_path / "table.csv").open()))
    assert table[0][0] == "Method" and table[0][-1] == "Avg." and len(table[1]) == 14


def test_bench_with_fake_clock(face_fixture, teacher_run, tmp_path):
    clock = tmp_path / "clock.json"
    clock.write_text(json.dumps({"durations": [0.5, 0.5]}))
    args = ["bench", "--bundles", str(teacher_run / "model.lfmb"), "--frames", str(face_fixture / "frames"),
            "--landmarks", str(face_fixture / "landmarks.csv"), "--rounds", "2", "--fake-clock", str(clock)]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "bench.json").read_text())
    assert a == json.loads((tmp_path / "b" / "bench.json").read_text())
    assert a["fps"] == pytest.approx(100.0)


def test_align_writes_crops(face_fixture, tmp_path):
    code = main(["align", "--images", str(face_fixture / "frames"), "--landmarks",
                 str(face_fixture / "landmarks.csv"), "--out", str(tmp_path)])
    assert code == 0
    assert len(list((tmp_path / "aligned").glob("*.png"))) == 49


def test_distill_then_infer(face_fixture, teacher_run, tmp_path):
    code = main(["distill", "--teacher", str(teacher_run / "model.lfmb"), "--dataset",
                 str(face_fixture / "dataset.json"), "--out", str(tmp_path / "s"), "--max-epochs", "2",
                 "--early-stop-patience", "1", "--learning-rate", "1e-3", "--val-subjects", "2",
                 "--feature-dim", "16"])
    assert code == 0
    code = main(["infer", "--bundles", str(tmp_path / "s" / "student.lfmb"), "--frames",
                 str(face_fixture / "frames"), "--landmarks", str(face_fixture / "landmarks.csv"),
                 "--out", str(tmp_path / "i")])
    assert code == 0
    lines = (tmp_path / "i" / "predictions.csv").read_text().splitlines()
    assert len(lines) == 51
