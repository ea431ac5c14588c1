#!/usr/bin/env python3
"""Cross-entropy and communication rate over a threshold sweep.

Writes results.csv (one row per run) and prints per-point means.
"""

import numpy as np

from _common import config_from, grouped, parser
from ebpf.cli import run_experiment


def main():
    args = parser(__doc__.splitlines()[0], "sweep.yaml", "sweep").parse_args()
    cfg = config_from(args, T=1000, seeds=[0, 1], delta=[1.0, 2.5])
    path = run_experiment(cfg, args.out, args.workers)
    keys = ("delta", "N", "filter", "evaluator")
    print(f"{'delta':>6} {'N':>5} {'filter':>7} {'evaluator':>9} {'C_r':>7} {'ce_all':>10} "
          f"{'ce_events':>10} {'ce_noevents':>11}")
    for key, rows in sorted(grouped(path, keys).items(), key=lambda kv: (float(kv[0][0]), kv[0][1:])):
        mean = {c: np.mean([float(r[c]) for r in rows]) for c in ("C_r", "ce_all", "ce_events", "ce_noevents")}
        print(f"{key[0]:>6} {key[1]:>5} {key[2]:>7} {key[3]:>9} {mean['C_r']:7.3f} {mean['ce_all']:10.4g} "
              f"{mean['ce_events']:10.4g} {mean['ce_noevents']:11.4g}")
    print(path)


if __name__ == "__main__":
    main()
