"""Shared command-line plumbing for the experiment scripts."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

from ebpf.cli import load_config, parse_seeds, validate

CONFIGS = Path(__file__).resolve().parent / "configs"


def parser(description: str, config: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=CONFIGS / config)
    p.add_argument("--out", type=Path, default=Path("runs") / default_out)
    p.add_argument("--seeds", default=None, help="seed count K or an explicit list like 1,4,9")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="a few seeds and short runs, for a smoke check")
    return p


def config_from(args, **quick):
    cfg = load_config(args.config)
    if args.seeds is not None:
        cfg.seeds = parse_seeds(args.seeds)
    if args.quick:
        for key, value in quick.items():
            setattr(cfg, key, value)
    validate(cfg)
    return cfg


def grouped(path: Path, keys):
    """Rows of a CSV grouped by the values of the ``keys`` columns."""
    groups = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups[tuple(row[k] for k in keys)].append(row)
    return groups
