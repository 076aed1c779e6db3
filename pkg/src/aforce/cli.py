"""Command-line front end.

    aforce run      --config FILE [--out DIR] [--seed N] [--strict] [--full-rate-logs]
    aforce compare  --config FILE [--out DIR] [--seed N] [--strict] [--full-rate-logs]
    aforce train    --config FILE [--out DIR] [--seed N]
    aforce validate --config FILE

Exit codes: 0 ok, 2 configuration error, 3 failed episode under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .runner import cem_train, energy_per_action, run_cells, safety_stats, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EPISODE = 3

COMPARE_COLUMNS = (
    "space", "episodes", "energy_J", "energy_per_action_J", "tracking_error", "success_rate",
    "markers_left_mean", "penalty_fraction", "penalty_mean", "failures",
)
CURVE_COLUMNS = ("generation", "mean_return", "max_return", "env_steps")

log = logging.getLogger("aforce")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aforce", description="Adaptive force-impedance control benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one action space over the configured seeds"),
                       ("compare", "run every listed action space on identical seeds"),
                       ("train", "cross-entropy search over waypoint policies"),
                       ("validate", "check a config file and exit")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML experiment file")
        if name == "validate":
            continue
        p.add_argument("--out", help="output directory (default: runner.output_dir)")
        p.add_argument("--seed", type=int, help="run this single seed instead of runner.seeds")
        if name != "train":
            p.add_argument("--strict", action="store_true", help="exit 3 if any episode fails")
            p.add_argument("--full-rate-logs", action="store_true", help="log every control tick")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.runner.seeds = [int(args.seed)]
    if getattr(args, "full_rate_logs", False):
        cfg.runner.full_rate_logs = True
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out or cfg.runner.output_dir)


def _failed(records) -> list:
    return [r for r in records if r.failure]


def cmd_run(args) -> int:
    cfg = _load(args)
    cells = [(cfg.runner.space, s) for s in cfg.runner.seeds]
    records = run_cells(cfg, cells)
    out = _out_dir(args, cfg)
    summary = write_outputs(cfg, records, out)
    for key, row in summary.items():
        print(f"{key}: success={row['success']} energy={row['energy_J']:.4f} J "
              f"tracking={row['tracking_error']:.4f} penalty={row['penalty_sum']:.4f}")
    if args.strict and _failed(records):
        return EXIT_EPISODE
    return EXIT_OK


def comparison_rows(records) -> list[dict]:
    by_space: dict[str, list] = {}
    for r in records:
        by_space.setdefault(r.space, []).append(r)
    rows = []
    for space, recs in by_space.items():
        frac, mean_pen = safety_stats(recs)
        left = [r.extras.get("markers_left") for r in recs]
        left = [v for v in left if v is not None]
        rows.append({
            "space": space,
            "episodes": len(recs),
            "energy_J": float(np.mean([r.energy for r in recs])),
            "energy_per_action_J": float(np.mean([energy_per_action(r) for r in recs])),
            "tracking_error": float(np.mean([r.tracking_error for r in recs])),
            "success_rate": float(np.mean([r.success for r in recs])),
            "markers_left_mean": float(np.mean(left)) if left else float("nan"),
            "penalty_fraction": frac,
            "penalty_mean": mean_pen,
            "failures": len(_failed(recs)),
        })
    return rows


def format_table(rows: list[dict]) -> str:
    header = ["space", "E [J]", "E/action [J]", "tracking", "success", "markers left", "penalized", "penalty", "failed"]
    body = [[r["space"], f"{r['energy_J']:.4f}", f"{r['energy_per_action_J']:.5f}", f"{r['tracking_error']:.4f}",
             f"{r['success_rate']:.2f}", f"{r['markers_left_mean']:.1f}", f"{r['penalty_fraction']:.2f}",
             f"{r['penalty_mean']:.4f}", str(r["failures"])] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(b) for b in body]) + "\n"


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in columns})
    path.write_text(buf.getvalue())


def cmd_compare(args) -> int:
    cfg = _load(args)
    spaces = list(cfg.runner.compare)
    if len(spaces) < 2:
        raise ConfigError(["runner.compare: list at least two action spaces to compare"])
    cells = [(sp, s) for sp in spaces for s in cfg.runner.seeds]
    records = run_cells(cfg, cells)
    out = _out_dir(args, cfg)
    rows = comparison_rows(records)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "comparison.csv", COMPARE_COLUMNS, rows)
    table = format_table(rows)
    (out / "comparison.txt").write_text(table)
    write_outputs(cfg, records, out, extra_files=("comparison.csv", "comparison.txt"))
    print(table, end="")
    if args.strict and _failed(records):
        return EXIT_EPISODE
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    space = cfg.runner.space
    files = []
    total_steps = 0
    results = {}
    for seed in cfg.runner.seeds:
        res = cem_train(cfg, space, seed)
        total_steps += res.env_steps
        curve_name = f"curve_{space}_seed{seed}.csv"
        _write_csv(out / curve_name, CURVE_COLUMNS, res.curve)
        params_name = f"best_{space}_seed{seed}.json"
        (out / params_name).write_text(json.dumps({
            "space": space, "seed": seed, "best_return": res.best_return,
            "params": [float(v) for v in np.atleast_1d(res.best_params)],
            "evaluations": res.evaluations, "env_steps": res.env_steps,
            "first_success_step": res.first_success_step,
        }, indent=2, sort_keys=True))
        episodes_name = f"episodes_{space}_seed{seed}.json"
        (out / episodes_name).write_text(json.dumps(res.episodes, indent=2, sort_keys=True))
        files += [curve_name, params_name, episodes_name]
        results[seed] = res
        print(f"seed {seed}: best return {res.best_return:.4f}, env steps {res.env_steps}, "
              f"first success at {res.first_success_step}")
    write_outputs(cfg, [], out, extra_files=files)
    print(f"environment steps used: {total_steps}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "train": cmd_train, "validate": cmd_validate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
