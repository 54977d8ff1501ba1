#!/usr/bin/env python3
"""Report the found-by-final-turn fraction of the shipped generator defaults.

The default GenConfig is considered calibrated when the fraction of
conversations whose target reaches rank 100 by turn 10 lands in [0.55, 0.85].
Run after touching any generator default.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from convpred import data_io, scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds to sample")
    parser.add_argument("--cutoff", type=int, default=100)
    args = parser.parse_args()

    fractions = []
    for seed in range(args.seeds):
        runs = data_io.generate_synthetic(data_io.calibration_config(seed=seed))
        labels = scenario.label_runs(runs, cutoff=args.cutoff)
        fraction = sum(labels.final_labels().values()) / len(runs)
        fractions.append(fraction)
        print(f"seed {seed}: found fraction {fraction:.3f}")

    low, high = min(fractions), max(fractions)
    verdict = "OK" if 0.55 <= low and high <= 0.85 else "RETUNE"
    print(f"range over {args.seeds} seeds: [{low:.3f}, {high:.3f}] -> {verdict} "
          f"(target band [0.55, 0.85])")
    return 0 if verdict == "OK" else 1


if __name__ == "__main__":
    sys.exit(main())
