#!/usr/bin/env python3
"""Fraction of penalized episodes over whole CEM training sweeps on the wiping task."""
from _common import dump, parser

from aforce.experiments import cem_sweep


def main():
    ap = parser(__doc__.strip(), "wipe_cem.yaml")
    ap.add_argument("--spaces", nargs="+", default=["variable", "aforce", "variable+force", "aforce+force", "low+force"])
    args = ap.parse_args()
    r = cem_sweep(args.config, args.spaces, seeds=args.seeds)
    for sp, row in r.items():
        print(f"{sp:<16} penalized {row['penalty_fraction']:.3f} of {row['episodes']} episodes")
    dump(args.json, r)


if __name__ == "__main__":
    main()
