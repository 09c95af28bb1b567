#!/usr/bin/env python3
"""Generate a synthetic two-rhythm click-train corpus on disk.

Writes label-named directories of WAV files plus a manifest.csv, in the same
layout `rhythmbench extract --root` expects from a real corpus.
"""

import argparse
from pathlib import Path

from rhythmbench.synth import build_click_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="directory to create the corpus in")
    parser.add_argument("--per-class", type=int, default=40, help="clips per rhythm class")
    parser.add_argument("--duration", type=float, default=6.0, help="clip length in seconds")
    parser.add_argument("--sample-rate", type=int, default=22050)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    manifest = build_click_dataset(
        args.out,
        n_per_class=args.per_class,
        duration=args.duration,
        sample_rate=args.sample_rate,
        seed=args.seed,
    )
    print(f"wrote {len(manifest.entries)} clips under {args.out}")
    print(f"labels: {', '.join(manifest.label_vocabulary)}")


if __name__ == "__main__":
    main()
