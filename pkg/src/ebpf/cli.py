"""Batch experiment runner.

Configs are flat YAML documents. Keys listed in ``SWEEP_KEYS`` may hold a list,
and the sweep runs the Cartesian product of those lists for every seed::

    trigger: IBT
    delta: [2.5, 7.5]
    N: [100]
    filter: [BPF, APF_FA]
    evaluator: [analytic, mc]
    T: 10000
    seeds: 20

Unknown keys are errors. Every subcommand writes its CSV files and a
``manifest.json`` with the resolved config, the seeds and the library version.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import math
import multiprocessing
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, NotReached
from .horizon import heuristic_horizon, quantile_horizon, tc_value
from .oracle import exhaustive_tc_argmax, naive_mc_trigger_pmf
from .sim import OpenLoop, PeriodicDownlink, Precompute, SimConfig, precompute_from_prior, run
from .trigger import TriggerRule

log = logging.getLogger("ebpf")

CSV_SCHEMA = 1
SWEEP_KEYS = ("delta", "N", "filter", "evaluator", "M", "D", "c")
RESULT_COLUMNS = ["delta", "N", "filter", "evaluator", "seed", "C_r", "ce_all", "ce_events",
                  "ce_noevents", "mean_n_hat", "forced_fraction", "wall_time"]
HORIZON_COLUMNS = ["delta", "N", "c", "seed", "n", "tc_mc", "tc_pf", "quantile_marker",
                   "true_argmax", "heuristic_argmax"]
ORACLE_COLUMNS = ["delta", "N", "seed", "n", "p_pf", "p_mc", "mc_lower", "mc_upper", "mc_censored"]


@dataclass
class ExperimentConfig:
    model: str = "benchmark"
    model_params: Dict[str, float] = field(default_factory=dict)
    trigger: str = "IBT"
    weight: Optional[List[float]] = None
    delta: List[float] = field(default_factory=lambda: [2.5])
    N: List[int] = field(default_factory=lambda: [100])
    filter: List[str] = field(default_factory=lambda: ["BPF"])
    evaluator: List[str] = field(default_factory=lambda: ["analytic"])
    M: List[int] = field(default_factory=lambda: [1])
    D: List[int] = field(default_factory=lambda: [3])
    variance_scale: Optional[float] = None
    T: int = 1000
    protocol: str = "periodic"
    c: List[float] = field(default_factory=lambda: [0.1])
    alpha: Optional[float] = None
    n_hat: Optional[int] = None
    n_hat_max: Optional[int] = None
    seeds: List[int] = field(default_factory=lambda: [0])
    # horizon and oracle studies
    c_values: List[float] = field(default_factory=lambda: [0.05, 0.1, 0.25])
    max_n: int = 60
    mc_repetitions: int = 100_000

    def points(self) -> List[Dict[str, Any]]:
        lists = [getattr(self, k) for k in SWEEP_KEYS]
        return [dict(zip(SWEEP_KEYS, combo)) for combo in itertools.product(*lists)]

    def sim_config(self, point: Dict[str, Any], seed: int) -> SimConfig:
        if self.protocol == "periodic":
            protocol = PeriodicDownlink()
        elif self.protocol == "openloop":
            protocol = OpenLoop()
        else:
            protocol = Precompute(point["c"], self.alpha, self.n_hat, self.n_hat_max)
        return SimConfig(
            model=self.model, model_params=tuple(sorted(self.model_params.items())),
            trigger=TriggerRule(self.trigger, point["delta"],
                                None if self.weight is None else tuple(self.weight)),
            filter=point["filter"], evaluator=point["evaluator"], M=point["M"], D=point["D"],
            variance_scale=self.variance_scale, N=point["N"], T=self.T, seed=seed, protocol=protocol,
        )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# parsing and validation


def _kind(value) -> str:
    return type(value).__name__


def _check_scalar(name: str, value, typ, line: int):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool) or not isinstance(value, typ):
        raise ConfigError(f"line {line}: field {name!r}: expected {typ.__name__}, got {_kind(value)}")
    return value


_FIELD_TYPES = {
    "model": str, "trigger": str, "variance_scale": float, "T": int, "protocol": str,
    "alpha": float, "n_hat": int, "n_hat_max": int, "max_n": int, "mc_repetitions": int,
    "delta": float, "N": int, "filter": str, "evaluator": str, "M": int, "D": int, "c": float,
    "c_values": float, "weight": float, "seeds": int,
}
_LIST_KEYS = set(SWEEP_KEYS) | {"c_values", "weight", "seeds"}
_CHOICES = {
    "trigger": ("SOD", "IBT"),
    "protocol": ("periodic", "precompute", "openloop"),
    "filter": ("BPF", "APF_FA"),
    "evaluator": ("analytic", "mixture", "mc"),
}


def parse_seeds(spec) -> List[int]:
    """``"20"`` means seeds 0..19; ``"3,5,8"`` is an explicit list."""
    if isinstance(spec, int):
        return list(range(spec))
    if isinstance(spec, (list, tuple)):
        return [int(s) for s in spec]
    text = str(spec).strip()
    if "," in text or text.startswith("["):
        return [int(s) for s in text.strip("[]").split(",") if s.strip()]
    return list(range(int(text)))


def load_config(source, name: str = "<config>") -> ExperimentConfig:
    """Parse and validate a YAML config from a path or a string.

    A ``manifest.json`` written by an earlier run is accepted as well.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        path = Path(source)
        name = str(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            data = json.loads(text)
            return _from_mapping(data.get("config", data), {}, name)
    else:
        text = source
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{name}: not valid YAML: {exc}") from None
    if root is None:
        return ExperimentConfig()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{name}: line {root.start_mark.line + 1}: top level must be a mapping")
    lines = {k.value: k.start_mark.line + 1 for k, _ in root.value}
    return _from_mapping(yaml.safe_load(text), lines, name)


def _from_mapping(data: Dict[str, Any], lines: Dict[str, int], name: str) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    errors = []
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        line = lines.get(key, "?")
        if key not in known:
            errors.append(f"line {line}: unknown field {key!r}")
            continue
        try:
            kwargs[key] = _coerce(key, value, line)
        except ConfigError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(f"{name}:\n  " + "\n  ".join(errors))
    cfg = ExperimentConfig(**kwargs)
    try:
        validate(cfg)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return cfg


def _coerce(key: str, value, line):
    if key == "model_params":
        if not isinstance(value, dict):
            raise ConfigError(f"line {line}: field 'model_params': expected a mapping")
        return {str(k): _check_scalar(f"model_params.{k}", v, float, line) for k, v in value.items()}
    if key == "seeds":
        try:
            return parse_seeds(value)
        except (TypeError, ValueError):
            raise ConfigError(f"line {line}: field 'seeds': expected a count or a list of integers") from None
    typ = _FIELD_TYPES[key]
    if value is None:
        if key in ("variance_scale", "alpha", "n_hat", "n_hat_max", "weight"):
            return None
        raise ConfigError(f"line {line}: field {key!r}: must not be empty")
    if key in _LIST_KEYS:
        items = value if isinstance(value, list) else [value]
        if not items:
            raise ConfigError(f"line {line}: field {key!r}: empty list")
        out = [_check_scalar(key, v, typ, line) for v in items]
    else:
        if isinstance(value, list):
            raise ConfigError(f"line {line}: field {key!r}: does not take a list")
        out = _check_scalar(key, value, typ, line)
    for v in out if isinstance(out, list) else [out]:
        if key in _CHOICES and v not in _CHOICES[key]:
            raise ConfigError(f"line {line}: field {key!r}: {v!r} is not one of {list(_CHOICES[key])}")
    return out


def validate(cfg: ExperimentConfig) -> None:
    """Build every sweep point once so that invalid combinations fail early."""
    if not cfg.seeds:
        raise ConfigError("field 'seeds': no seeds")
    if cfg.max_n < 1 or cfg.mc_repetitions < 1:
        raise ConfigError("fields 'max_n' and 'mc_repetitions' must be >= 1")
    for c in cfg.c_values:
        if not 0.0 < c < 1.0:
            raise ConfigError(f"field 'c_values': {c} is not in (0, 1)")
    for point in cfg.points():
        sc = cfg.sim_config(point, cfg.seeds[0])
        sc.build_evaluator(sc.build_model())


# ---------------------------------------------------------------------------
# runners


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


class _CsvSink:
    """Row writer that flushes after every row, so interrupted sweeps keep their results."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.columns = list(columns)
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(self.columns)

    def write(self, row: Dict[str, Any]):
        self.writer.writerow([_fmt(row[c]) for c in self.columns])
        self.fh.flush()

    def close(self):
        self.fh.close()


def run_point(cfg: ExperimentConfig, point: Dict[str, Any], seed: int) -> Dict[str, Any]:
    sc = cfg.sim_config(point, seed)
    t0 = time.perf_counter()
    _, s = run(sc)
    wall = time.perf_counter() - t0
    ev = sc.build_evaluator(sc.build_model())
    return {
        "delta": float(point["delta"]), "N": point["N"], "filter": point["filter"],
        "evaluator": ev.label(), "seed": seed, "C_r": s.C_r, "ce_all": s.ce_all,
        "ce_events": s.ce_events, "ce_noevents": s.ce_noevents, "mean_n_hat": s.mean_n_hat,
        "forced_fraction": s.forced_fraction, "wall_time": wall,
    }


def _run_task(args):
    cfg, point, seed = args
    return run_point(cfg, point, seed)


def _map(fn, tasks: List, workers: int) -> Iterable:
    """Ordered map; results come back in task order regardless of worker count."""
    if workers <= 1:
        return map(fn, tasks)
    pool = multiprocessing.get_context("spawn").Pool(workers)
    return _PoolIter(pool, pool.imap(fn, tasks, chunksize=1))


class _PoolIter:
    def __init__(self, pool, it):
        self.pool, self.it = pool, it

    def __iter__(self):
        try:
            yield from self.it
        finally:
            self.pool.terminate()
            self.pool.join()


def run_experiment(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    """Run the sweep and write ``results.csv``, ``timings.csv`` and ``manifest.json``.

    ``results.csv`` holds only seed-determined columns so reruns are byte
    identical; wall-clock times go to ``timings.csv``.
    """
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "sweep")
    tasks = [(cfg, p, s) for p in cfg.points() for s in cfg.seeds]
    results = _CsvSink(out / "results.csv", [c for c in RESULT_COLUMNS if c != "wall_time"])
    timings = _CsvSink(out / "timings.csv", ["delta", "N", "filter", "evaluator", "seed", "wall_time"])
    try:
        for row in _map(_run_task, tasks, workers):
            results.write(row)
            timings.write(row)
            log.info("delta=%s N=%s %s %s seed=%s C_r=%.3f", row["delta"], row["N"], row["filter"],
                     row["evaluator"], row["seed"], row["C_r"])
    finally:
        results.close()
        timings.close()
    return out / "results.csv"


def _study_config(cfg: ExperimentConfig, delta: float, N: int, seed: int) -> SimConfig:
    point = dict(cfg.points()[0], delta=delta, N=N)
    return cfg.sim_config(point, seed)


def trigger_pmf_pair(cfg: ExperimentConfig, delta: float, N: int, seed: int):
    """p_T from the filter's own estimate and from the naive Monte Carlo oracle.

    Both refer to the same planned bounds, so they estimate the same quantity.
    """
    sc = _study_config(cfg, delta, N, seed)
    planned = precompute_from_prior(sc, cfg.max_n)
    # offset keeps the oracle's randomness disjoint from the filter streams
    mc = naive_mc_trigger_pmf(sc.build_model(), sc.trigger, cfg.mc_repetitions, cfg.max_n,
                              seed=1_000_003 + seed, bounds=planned.boxes)
    return planned, mc


def _oracle_rows(args):
    cfg, delta, N, seed = args
    planned, mc = trigger_pmf_pair(cfg, delta, N, seed)
    return [{"delta": float(delta), "N": N, "seed": seed, "n": n + 1,
             "p_pf": float(planned.first_trigger[n]), "p_mc": float(mc.pmf[n]),
             "mc_lower": float(mc.lower[n]), "mc_upper": float(mc.upper[n]), "mc_censored": mc.censored}
            for n in range(cfg.max_n)]


def run_oracle(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "oracle")
    tasks = [(cfg, d, N, s) for d in cfg.delta for N in cfg.N for s in cfg.seeds]
    sink = _CsvSink(out / "oracle.csv", ORACLE_COLUMNS)
    try:
        for rows in _map(_oracle_rows, tasks, workers):
            for row in rows:
                sink.write(row)
    finally:
        sink.close()
    return out / "oracle.csv"


def horizon_rows(planned, mc_pmf: np.ndarray, c: float, max_n: int) -> List[Dict[str, Any]]:
    per_step = planned.per_step
    choice = heuristic_horizon(lambda i: per_step[i - 1], c, n_hat_max=max_n)
    n_true, _ = exhaustive_tc_argmax(mc_pmf, c, max_n)
    try:
        n_q = quantile_horizon(mc_pmf, 1.0 - c)
    except NotReached:
        n_q = -1
    return [{"c": c, "n": n, "tc_mc": tc_value(mc_pmf, c, n), "tc_pf": tc_value(planned.first_trigger, c, n),
             "quantile_marker": int(n == n_q), "true_argmax": int(n == n_true),
             "heuristic_argmax": int(n == choice.n_hat)}
            for n in range(1, max_n + 1)]


def _horizon_rows(args):
    cfg, delta, N, seed = args
    planned, mc = trigger_pmf_pair(cfg, delta, N, seed)
    rows = []
    for c in cfg.c_values:
        for row in horizon_rows(planned, mc.pmf, c, cfg.max_n):
            rows.append(dict(row, delta=float(delta), N=N, seed=seed))
    return rows


def run_horizon_study(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "horizon")
    tasks = [(cfg, d, N, s) for d in cfg.delta for N in cfg.N for s in cfg.seeds]
    sink = _CsvSink(out / "horizon.csv", HORIZON_COLUMNS)
    try:
        for rows in _map(_horizon_rows, tasks, workers):
            for row in rows:
                sink.write(row)
    finally:
        sink.close()
    return out / "horizon.csv"


def write_manifest(out: Path, cfg: ExperimentConfig, command: str) -> Path:
    manifest = {
        "command": command,
        "library": "artifact",
        "version": __version__,
        "csv_schema": CSV_SCHEMA,
        "seeds": list(cfg.seeds),
        "config": cfg.to_dict(),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebpf", description="Event-based particle filtering experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("sweep", "run a parameter sweep"),
                            ("horizon", "T_c curves from filter and Monte Carlo trigger pmfs"),
                            ("oracle", "filter vs naive Monte Carlo first-trigger pmfs"),
                            ("validate-config", "check a config file and exit")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=True, metavar="PATH")
        if name != "validate-config":
            p.add_argument("--out", type=Path, required=True, metavar="DIR")
            p.add_argument("--seeds", default=None, help="seed count K or an explicit list like 1,4,9")
            p.add_argument("--workers", type=int, default=1, metavar="W")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "seeds", None) is not None:
            cfg.seeds = parse_seeds(args.seeds)
            validate(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        n = len(cfg.points())
        print(f"ok: {n} sweep point(s) x {len(cfg.seeds)} seed(s)")
        return 0
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    runner = {"sweep": run_experiment, "horizon": run_horizon_study, "oracle": run_oracle}[args.command]
    try:
        path = runner(cfg, args.out, args.workers)
    except KeyboardInterrupt:
        print("interrupted; partial results kept", file=sys.stderr)
        return 130
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
