"""Multi-seed experiment sweeps and the statistics reported from them.

These helpers sit on top of ``runner`` and return plain dictionaries so the
scripts in ``scripts/`` and the acceptance tests read the same numbers.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import ExperimentConfig, load_config
from .runner import cem_train, energy_per_action, run_cells


def _with_seeds(cfg: ExperimentConfig, seeds) -> ExperimentConfig:
    if seeds is None:
        return cfg
    return replace(cfg, runner=replace(cfg.runner, seeds=[int(s) for s in seeds]))


def expert_comparison(cfg: ExperimentConfig | str, spaces=None, seeds=None) -> dict:
    """Energy, tracking error and markers left per space and seed under the expert.

    Returns ``{space: {"energy": [...], "tracking": [...], "markers_left": [...],
    "success": [...], "failures": [...]}}`` with one entry per seed.
    """
    if isinstance(cfg, str):
        cfg = load_config(cfg)
    cfg = _with_seeds(cfg, seeds)
    spaces = list(spaces or cfg.runner.compare)
    cells = [(sp, s) for sp in spaces for s in cfg.runner.seeds]
    out = {sp: {"energy": [], "tracking": [], "markers_left": [], "success": [], "failures": []} for sp in spaces}
    for rec in run_cells(cfg, cells):
        row = out[rec.space]
        row["energy"].append(rec.energy)
        row["tracking"].append(rec.tracking_error)
        row["markers_left"].append(rec.extras.get("markers_left"))
        row["success"].append(rec.success)
        row["failures"].append(rec.failure)
    return out


def exploration_energy(cfg: ExperimentConfig | str, spaces=None, seeds=None) -> dict:
    """Energy per action of random exploration, per space and seed."""
    if isinstance(cfg, str):
        cfg = load_config(cfg)
    cfg = _with_seeds(cfg, seeds)
    spaces = list(spaces or cfg.runner.compare)
    cells = [(sp, s) for sp in spaces for s in cfg.runner.seeds]
    out = {sp: [] for sp in spaces}
    for rec in run_cells(cfg, cells):
        out[rec.space].append(energy_per_action(rec))
    return out


def cem_sweep(cfg: ExperimentConfig | str, spaces, seeds=None) -> dict:
    """Run CEM for every (space, seed) and collect what the comparisons need.

    Per space: the fraction of all evaluated episodes that drew a penalty,
    the env steps to first success per seed (``inf`` when never reached),
    and the mean-return curve averaged over seeds.
    """
    if isinstance(cfg, str):
        cfg = load_config(cfg)
    cfg = _with_seeds(cfg, seeds)
    out = {}
    for sp in spaces:
        penalized = []
        first = []
        curves = []
        for seed in cfg.runner.seeds:
            res = cem_train(cfg, sp, seed)
            penalized += [bool(ep["penalized"]) for ep in res.episodes]
            first.append(float("inf") if res.first_success_step is None else float(res.first_success_step))
            curves.append([row["mean_return"] for row in res.curve])
        out[sp] = {
            "penalty_fraction": float(np.mean(penalized)) if penalized else float("nan"),
            "episodes": len(penalized),
            "first_success": first,
            "median_first_success": float(np.median(first)),
            "mean_curve": np.mean(np.array(curves), axis=0).tolist() if curves and curves[0] else [],
        }
    return out
