import math

import pytest
from hypothesis import given, strategies as st

from conftest import face_bundle
from libreface_lab.alignment import parse_landmarks
from libreface_lab.bench import BenchConfig, FakeClock, run_benchmark, summarize_durations
from libreface_lab.errors import BenchmarkError, DataError
from libreface_lab.pipeline import list_frames, load_image
from published import TIMINGS


def test_openface_au_only_row():
    avg, std, fps = summarize_durations([50.11] * 5, 1000)
    assert avg == pytest.approx(50.11) and std == pytest.approx(0.0, abs=1e-12)
    assert round(fps, 2) == 19.96


@pytest.mark.parametrize("name", sorted(TIMINGS))
def test_published_fps_within_half_percent(name):
    avg, published = TIMINGS[name]
    _, _, fps = summarize_durations([avg] * 5, 1000)
    assert abs(fps - published) / published < 0.005


def test_gpu_row_rounding_gap():
    _, _, fps = summarize_durations([6.07] * 5, 1000)
    assert round(fps, 2) == 164.74


def test_two_point_sample_std():
    avg, std, fps = summarize_durations([1, 3], 10)
    assert (avg, fps) == (2.0, 5.0)
    assert std == pytest.approx(math.sqrt(2))


def test_constant_rounds():
    assert summarize_durations([2, 2, 2], 4) == (2.0, 0.0, 2.0)


def test_invalid_durations():
    with pytest.raises(DataError):
        summarize_durations([], 10)
    with pytest.raises(DataError):
        summarize_durations([1.0, 0.0], 10)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=10), st.integers(1, 5000))
def test_fps_times_avg_is_count(durations, n):
    avg, std, fps = summarize_durations(durations, n)
    assert fps * avg == pytest.approx(n, rel=1e-12)
    assert std >= 0


def test_fake_clock_replays_durations(face_fixture):
    frames = list_frames(face_fixture / "frames")[:4]
    cfg = BenchConfig([face_bundle()], parse_landmarks(face_fixture / "landmarks.csv"))
    report = run_benchmark(cfg, [load_image(p) for p in frames], rounds=3, clock=FakeClock([1.0, 3.0, 2.0]))
    assert report.rounds == pytest.approx([1.0, 3.0, 2.0])
    assert report.avg_seconds == pytest.approx(2.0)
    assert report.fps == pytest.approx(2.0)
    assert report.table_row() == "2.00 | 1.00 | 2.00"


def test_disk_mode_reads_paths(face_fixture):
    frames = list_frames(face_fixture / "frames")[:2]
    cfg = BenchConfig([face_bundle()], face_fixture / "landmarks.csv", mode="disk", warmup=False)
    report = run_benchmark(cfg, frames, rounds=1)
    assert report.image_count == 2 and report.rounds[0] > 0


def test_exhausted_fake_clock(face_fixture):
    frames = list_frames(face_fixture / "frames")[:1]
    cfg = BenchConfig([face_bundle()], face_fixture / "landmarks.csv", mode="disk", warmup=False)
    with pytest.raises(BenchmarkError):
        run_benchmark(cfg, frames, rounds=2, clock=FakeClock([1.0]))
