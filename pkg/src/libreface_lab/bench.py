"""Throughput harness: timed rounds over a fixed image list, Avg/Std/FPS report."""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Sequence

from .errors import BenchmarkError, DataError, LibreFaceError
from .pipeline import NullSink, run_pipeline

MODES = ("preloaded", "disk")


@dataclass
class BenchConfig:
    bundles: Sequence
    landmarks: object
    workers: int = 1
    mode: str = "preloaded"
    warmup: bool = True
    description: str = ""


@dataclass
class BenchReport:
    rounds: List[float]
    image_count: int
    avg_seconds: float
    std_seconds: float
    fps: float
    mode: str = "preloaded"
    config: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table_row(self, method: str = "") -> str:
        return f"{method} | {self.avg_seconds:.2f} | {self.std_seconds:.2f} | {self.fps:.2f}".strip(" |")


def summarize_durations(durations, image_count: int):
    """``(avg, sample std, fps)``; a single round has std 0. FPS uses the unrounded average."""
    durations = [float(d) for d in durations]
    if not durations:
        raise DataError("need at least one duration")
    if any(not d > 0 for d in durations):
        raise DataError(f"durations must be positive, got {durations}")
    if image_count < 1:
        raise DataError("image_count must be positive")
    avg = statistics.fmean(durations)
    std = statistics.stdev(durations) if len(durations) > 1 else 0.0
    return avg, std, image_count / avg


class FakeClock:
    """Deterministic clock replaying given round durations (start/end read per round)."""

    def __init__(self, durations):
        self.ticks = [0.0]
        for d in durations:
            self.ticks.append(self.ticks[-1] + float(d))
        self._calls = 0

    def __call__(self) -> float:
        # reads alternate start, end, start, end...; a round starts where the last ended
        i = (self._calls + 1) // 2
        self._calls += 1
        if i >= len(self.ticks):
            raise BenchmarkError("fake clock ran out of durations")
        return self.ticks[i]


def run_benchmark(config: BenchConfig, images: Sequence, rounds: int = 5,
                  clock: Callable[[], float] = time.perf_counter) -> BenchReport:
    """Run ``rounds`` timed passes of the pipeline over ``images`` (after one untimed warm-up).

    In ``preloaded`` mode images are arrays and decoding is outside the timed
    region; in ``disk`` mode they are paths and each round decodes them.
    """
    if not images:
        raise DataError("benchmark needs at least one image")
    if rounds < 1:
        raise DataError("rounds must be >= 1")
    if config.mode not in MODES:
        raise DataError(f"unknown benchmark mode {config.mode!r}")

    def one_pass(r):
        try:
            run_pipeline(images, config.landmarks, config.bundles, NullSink(), config.workers)
        except LibreFaceError as exc:
            raise BenchmarkError(f"round {r} failed: {exc}", round_index=r) from exc

    if config.warmup:
        one_pass(-1)
    durations = []
    for r in range(rounds):
        start = clock()
        one_pass(r)
        durations.append(clock() - start)
    avg, std, fps = summarize_durations(durations, len(images))
    return BenchReport(durations, len(images), avg, std, fps, config.mode, config.description)
