#!/usr/bin/env python3
"""Environment steps until CEM first solves the press task, AFORCE against variable impedance."""
import numpy as np

from _common import dump, parser

from aforce.experiments import cem_sweep


def main():
    ap = parser(__doc__.strip(), "press_cem.yaml")
    ap.add_argument("--spaces", nargs="+", default=["variable", "aforce"])
    args = ap.parse_args()
    r = cem_sweep(args.config, args.spaces, seeds=args.seeds)
    for sp, row in r.items():
        never = int(np.isinf(row["first_success"]).sum())
        curve = " ".join(f"{v:.1f}" for v in row["mean_curve"])
        print(f"{sp:<10} median first success {row['median_first_success']:g} steps, "
              f"never {never}/{len(row['first_success'])}, mean return by generation: {curve}")
    dump(args.json, r)


if __name__ == "__main__":
    main()
