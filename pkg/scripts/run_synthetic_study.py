#!/usr/bin/env python3
"""End-to-end demonstration on synthetic data.

Builds a click-train corpus, then drives the CLI through the full study:
feature extraction, a single train/test trial, random-baseline calibration,
repeated-partition contrasts, the time-dilation probe, and the final report.
Everything lands under the chosen output directory; rerunning with the same
seed reproduces the artifacts byte for byte.
"""

import argparse
import sys
from pathlib import Path

from rhythmbench.cli import main as cli
from rhythmbench.synth import build_click_dataset


def run(argv: list[str]) -> None:
    print("$ rhythmbench " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="working directory for corpus and results")
    parser.add_argument("--per-class", type=int, default=40)
    parser.add_argument("--trials", type=int, default=50, help="repartition trial count")
    parser.add_argument("--draws", type=int, default=2000, help="random-baseline draws")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = args.out / "corpus"
    results = args.out / "results"
    if not (corpus / "manifest.csv").exists():
        build_click_dataset(corpus, n_per_class=args.per_class, seed=args.seed)
    features = str(results / "features.csv")

    run(["extract", "--root", str(corpus), "--out", str(results)])
    run(
        [
            "trial",
            "--features", features,
            "--seed", str(args.seed),
            "--draws", str(args.draws),
            "--out", str(results),
        ]
    )
    run(
        [
            "baselines",
            "--features", features,
            "--seed", str(args.seed),
            "--draws", str(args.draws),
            "--out", str(results),
        ]
    )
    run(
        [
            "repartition",
            "--features", features,
            "--trials", str(args.trials),
            "--seed", str(args.seed),
            "--out", str(results),
        ]
    )
    run(
        [
            "dilate",
            "--root", str(corpus),
            "--features", features,
            "--factors", "0.8,0.9,1.0,1.1,1.25",
            "--seed", str(args.seed),
            "--draws", str(args.draws),
            "--out", str(results),
        ]
    )
    run(["report", "--out", str(results)])
    print(f"\nartifacts under {results}")


if __name__ == "__main__":
    main()
