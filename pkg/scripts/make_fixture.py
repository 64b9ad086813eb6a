"""Write a rendered-face fixture (frames/, landmarks.csv, annotations.csv, dataset.json).

    python3 scripts/make_fixture.py OUT_DIR [--frames 50] [--size 96] [--drop 7]
"""

import argparse

from libreface_lab.synthetic import write_face_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--frames", type=int, default=50)
    ap.add_argument("--size", type=int, nargs=2, default=(96, 96), metavar=("H", "W"))
    ap.add_argument("--subjects", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--drop", type=int, nargs="*", default=[7], help="frames written without landmarks")
    args = ap.parse_args()
    root = write_face_fixture(args.out, args.frames, tuple(args.size), args.seed, args.subjects, args.drop)
    print(f"fixture written to {root}")


if __name__ == "__main__":
    main()
