"""Real-clock throughput of the inference pipeline on synthetic 1024x768 frames.

Numbers are machine-specific; this only shows the harness at work.

    python3 scripts/bench_pipeline.py [--images 100] [--rounds 5] [--workers 1 4]
"""

import argparse

import numpy as np

from libreface_lab.bench import BenchConfig, run_benchmark
from libreface_lab.bundle import new_bundle
from libreface_lab.synthetic import render_face
from libreface_lab.tensor import Dense, NetworkSpec, mlp


def bundle(head, outputs, seed, res=8, **meta):
    enc = mlp([res * res * 3, 64, 64])
    return new_bundle(enc, NetworkSpec((Dense(64, outputs),), role="classifier"), seed, head=head,
                      input_resolution=res, **meta)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=100)
    ap.add_argument("--rounds", type=int, default=5)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    images, marks = [], {}
    for f in range(args.images):
        img, lm = render_face(rng.uniform(0, 5, 12), size=(768, 1024), seed=f)
        images.append(img)
        marks[f] = lm
    setups = {
        "AU only": [bundle("au", 17, 0)],
        "AU + FER": [bundle("au", 17, 0), bundle("fer", 8, 1, class_set="affectnet8")],
    }
    print("Method | workers | Avg (s) | Std (s) | FPS")
    for name, bundles in setups.items():
        for w in args.workers:
            rep = run_benchmark(BenchConfig(bundles, marks, workers=w), images, args.rounds)
            print(f"{name} | {w} | {rep.table_row()}")


if __name__ == "__main__":
    main()
