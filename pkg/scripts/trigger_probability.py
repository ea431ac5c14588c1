#!/usr/bin/env python3
"""Accuracy of the filter's first-trigger pmf against naive Monte Carlo.

Writes oracle.csv and prints the RMSE over steps n <= 20 for each (delta, N).
"""

import numpy as np

from _common import config_from, grouped, parser
from ebpf.cli import run_oracle

N_COMPARE = 20


def main():
    args = parser(__doc__.splitlines()[0], "trigger_probability.yaml", "trigger_probability").parse_args()
    cfg = config_from(args, seeds=[0, 1, 2], mc_repetitions=20_000, max_n=N_COMPARE)
    path = run_oracle(cfg, args.out, args.workers)
    print(f"{'delta':>6} {'N':>5} {'RMSE':>8} {'coverage':>9}")
    for (delta, N), rows in sorted(grouped(path, ("delta", "N")).items(),
                                   key=lambda kv: (float(kv[0][0]), int(kv[0][1]))):
        rows = [r for r in rows if int(r["n"]) <= N_COMPARE]
        pf = np.array([float(r["p_pf"]) for r in rows])
        mc = np.array([float(r["p_mc"]) for r in rows])
        by_n = {}
        for r in rows:
            by_n.setdefault(int(r["n"]), []).append((float(r["p_pf"]), float(r["p_mc"])))
        inside = []
        for pairs in by_n.values():
            p, m = np.array(pairs).T
            lo, hi = np.quantile(m, [0.05, 0.95])
            inside.append(lo <= p.mean() <= hi)
        print(f"{delta:>6} {N:>5} {np.sqrt(np.mean((pf - mc) ** 2)):8.4f} {np.mean(inside):9.2f}")
    print(path)


if __name__ == "__main__":
    main()
