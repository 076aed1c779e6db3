#!/usr/bin/env python3
"""Energy per action under uniform random exploration, variable impedance against AFORCE."""
import numpy as np

from _common import dump, parser

from aforce.experiments import exploration_energy


def main():
    args = parser(__doc__.strip(), "wipe_random.yaml").parse_args()
    r = exploration_energy(args.config, seeds=args.seeds)
    for sp, vals in r.items():
        print(f"{sp:<10} mean {np.mean(vals):.5f} J/action  per seed {np.round(vals, 5).tolist()}")
    if "variable" in r and "aforce" in r:
        print(f"variable/aforce: {np.mean(r['variable']) / np.mean(r['aforce']):.2f}")
    dump(args.json, r)


if __name__ == "__main__":
    main()
