"""Paired baseline-vs-distilled student runs on the pinned synthetic AU task.

    python3 scripts/distill_ablation.py [--data-seeds 0 1 2] [--alpha 1 --beta 1] [--json out.json]
"""

import argparse
import json
from dataclasses import asdict, replace

import numpy as np

from libreface_lab.study import StudyConfig, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--val-subjects", type=int, default=StudyConfig.val_subjects)
    ap.add_argument("--student-hidden", type=int, default=StudyConfig.student_hidden)
    ap.add_argument("--json", help="write per-run results here")
    args = ap.parse_args()

    results = []
    print("data_seed | teacher | baseline mean | distilled mean | wins | seconds")
    for ds in args.data_seeds:
        cfg = replace(StudyConfig(), data_seed=ds, alpha=args.alpha, beta=args.beta,
                      val_subjects=args.val_subjects, student_hidden=args.student_hidden)
        r = run_study(cfg)
        print(f"{ds} | {r.teacher_metric:.3f} | {np.mean(r.baseline):.3f} | {np.mean(r.distilled):.3f} "
              f"| {r.wins}/{len(r.baseline)} | {r.seconds:.1f}")
        assert r.teacher_hash_before == r.teacher_hash_after
        results.append({"config": asdict(cfg), "baseline": r.baseline, "distilled": r.distilled,
                        "teacher": r.teacher_metric, "wins": r.wins})
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
