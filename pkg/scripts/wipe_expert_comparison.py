#!/usr/bin/env python3
"""Expert wiping with fixed low/mid/high impedance and AFORCE.

Prints energy, tracking error and markers left per space, plus the
AFORCE/high ratios for energy and tracking.
"""
import numpy as np

from _common import dump, parser

from aforce.experiments import expert_comparison


def main():
    args = parser(__doc__.splitlines()[0], "wipe_compare.yaml").parse_args()
    r = expert_comparison(args.config, seeds=args.seeds)
    print(f"{'space':<14}{'energy [J]':>12}{'tracking':>10}{'markers left (per seed)':>28}")
    for sp, row in r.items():
        print(f"{sp:<14}{np.mean(row['energy']):>12.3f}{np.mean(row['tracking']):>10.4f}"
              f"{str(row['markers_left']):>28}")
    if "high" in r and "aforce+force" in r:
        e = np.mean(r["aforce+force"]["energy"]) / np.mean(r["high"]["energy"])
        t = np.mean(r["aforce+force"]["tracking"]) / np.mean(r["high"]["tracking"])
        print(f"\nAFORCE/high: energy {e:.3f}, tracking {t:.3f}")
    dump(args.json, r)


if __name__ == "__main__":
    main()
