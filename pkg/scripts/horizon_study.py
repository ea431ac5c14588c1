#!/usr/bin/env python3
"""Heuristic horizon against the exhaustive maximizer of the radio-off time.

Writes horizon.csv with the full T_c curves and prints, per (delta, c, seed),
the heuristic choice, the true maximizer and the ratio of their T_c values.
"""

from _common import config_from, grouped, parser
from ebpf.cli import run_horizon_study


def main():
    args = parser(__doc__.splitlines()[0], "horizon.yaml", "horizon").parse_args()
    cfg = config_from(args, seeds=[0], mc_repetitions=20_000, max_n=100)
    path = run_horizon_study(cfg, args.out, args.workers)
    print(f"{'delta':>6} {'c':>5} {'seed':>4} {'heuristic':>9} {'argmax':>6} {'quantile':>8} {'ratio':>6}")
    for (delta, c, seed), rows in sorted(grouped(path, ("delta", "c", "seed")).items(),
                                         key=lambda kv: tuple(float(v) for v in kv[0])):
        pick = {flag: next((r for r in rows if r[flag] == "1"), None)
                for flag in ("heuristic_argmax", "true_argmax", "quantile_marker")}
        h, t, q = pick["heuristic_argmax"], pick["true_argmax"], pick["quantile_marker"]
        ratio = float(h["tc_mc"]) / float(t["tc_mc"])
        print(f"{delta:>6} {c:>5} {seed:>4} {h['n']:>9} {t['n']:>6} {q['n'] if q else '-':>8} {ratio:6.3f}")
    print(path)


if __name__ == "__main__":
    main()
