"""Argument handling shared by the experiment scripts."""
import argparse
import json
from pathlib import Path

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=str(CONFIGS / default_config), help="experiment YAML")
    ap.add_argument("--seeds", type=int, nargs="+", help="override runner.seeds")
    ap.add_argument("--json", help="also write the raw numbers to this file")
    return ap


def dump(path, data) -> None:
    if path:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=float))
