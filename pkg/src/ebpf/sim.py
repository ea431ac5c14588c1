"""Closed-loop sensor/observer simulation.

The sensor sees the true measurement each step and transmits it only when it
falls outside the current trigger set. How the sensor learns that set depends
on the protocol:

* ``PeriodicDownlink``: the observer sends H_k every step, computed from its
  current posterior.
* ``Precompute``: at every event the observer runs the filter ahead assuming no
  further events, sends H_{k+1..k+n_hat} in one batch, and the sensor forces a
  transmission if it reaches step k+n_hat without triggering.
* ``OpenLoop``: send-on-delta; the set only depends on the last sent value.

Randomness is drawn from step-indexed named streams (see :mod:`ebpf.rng`), so
the precomputed posteriors between events are bit-identical to the ones the
periodic protocol produces for the same seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .filter import (APFConfig, FilterKind, ParticleSet, cross_entropy, posterior_log_density,
                     propagate_secondary, step)
from .errors import EmptyMask
from .gaussian import Box
from .horizon import (PROB_EPS, HorizonCost, TriggerProbabilities, default_cap,
                      estimate_step_probability, heuristic_horizon)
from .likelihood import LikelihoodEvaluator, MonteCarloLikelihood, make_evaluator
from .model import StateSpaceModel, make_model, simulate
from .rng import Streams
from .trigger import Event, NoEvent, TriggerKind, TriggerRule, build_set, decide, ibt_center

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeriodicDownlink:
    name = "periodic"


@dataclass(frozen=True)
class OpenLoop:
    name = "openloop"


@dataclass(frozen=True)
class Precompute:
    """Batch trigger bounds at events.

    The horizon is fixed (``n_hat``), the ``alpha`` quantile of the estimated
    first-trigger pmf, or by default the first local maximizer of T_c.
    """

    c: float = 0.1
    alpha: Optional[float] = None
    n_hat: Optional[int] = None
    n_hat_max: Optional[int] = None
    name = "precompute"

    def __post_init__(self):
        HorizonCost(self.c)
        if self.alpha is not None and self.n_hat is not None:
            raise ValueError("give at most one of alpha and n_hat")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.n_hat is not None and self.n_hat < 1:
            raise ValueError("n_hat must be >= 1")

    @property
    def cap(self) -> int:
        if self.n_hat is not None:
            return self.n_hat
        return default_cap(self.c) if self.n_hat_max is None else self.n_hat_max


Protocol = Union[PeriodicDownlink, OpenLoop, Precompute]


@dataclass(frozen=True)
class SimConfig:
    model: str = "benchmark"
    model_params: Tuple[Tuple[str, float], ...] = ()
    trigger: TriggerRule = TriggerRule(TriggerKind.IBT, 2.5)
    filter: FilterKind = FilterKind.BPF
    evaluator: str = "analytic"
    M: int = 1
    D: int = 3
    variance_scale: Optional[float] = None
    N: int = 100
    T: int = 1000
    seed: int = 0
    protocol: Protocol = PeriodicDownlink()

    def __post_init__(self):
        object.__setattr__(self, "filter", FilterKind(self.filter))
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if isinstance(self.protocol, OpenLoop) and self.trigger.kind is not TriggerKind.SOD:
            raise ValueError("the open-loop protocol needs a send-on-delta trigger")
        if isinstance(self.model_params, dict):
            object.__setattr__(self, "model_params", tuple(sorted(self.model_params.items())))

    def build_model(self) -> StateSpaceModel:
        return make_model(self.model, **dict(self.model_params))

    def build_evaluator(self, model) -> LikelihoodEvaluator:
        return make_evaluator(self.evaluator, model, D=self.D, M=self.M, variance_scale=self.variance_scale)


@dataclass
class EventLogRecord:
    k: int
    state: np.ndarray
    measurement: np.ndarray
    gamma: int
    forced: bool
    box: Optional[Box]
    posterior_mean: np.ndarray
    log_density: float
    n_hat: Optional[int]
    degenerate: bool
    trigger_prob: Optional[float]
    accepted: Optional[int]
    particles: Optional[ParticleSet] = None


@dataclass
class SimSummary:
    T: int
    events: int
    C_r: float
    ce_all: float
    ce_events: float
    ce_noevents: float
    mean_n_hat: float
    forced_fraction: float
    mean_off_time: float
    mean_inter_event: float
    degenerate_steps: int
    mean_accepted: float
    expected_accepted: float


def expected_particle_count(per_step_probs, N: int) -> float:
    """Average number of particles kept by accept/reject over a run.

    ``per_step_probs`` are the trigger probabilities of steps 2..T; step 1 is a
    forced transmission that keeps every particle.
    """
    p = np.asarray(per_step_probs, dtype=float)
    T = p.size + 1
    return float(N / T * np.sum(1.0 - p) + N / T)


class _Observer:
    """Observer-side computations for one run, all keyed by the step index."""

    def __init__(self, cfg: SimConfig, model, ev, streams: Streams):
        self.cfg, self.model, self.ev, self.streams = cfg, model, ev, streams
        self.apf = APFConfig(cfg.D, cfg.variance_scale)
        self.last_sent: Optional[np.ndarray] = None

    def bound(self, ps: ParticleSet, k: int) -> Tuple[Box, float]:
        sec = propagate_secondary(ps, self.model, self.streams.generator("secondary", k))
        if self.cfg.trigger.kind is TriggerKind.IBT:
            center = ibt_center(sec, self.model, k)
        else:
            center = self.last_sent
        box = build_set(self.cfg.trigger, center)
        rng = self.streams.generator("trigprob", k) if self.ev.stochastic else None
        return box, estimate_step_probability(sec, box, self.ev, rng)

    def update(self, ps: ParticleSet, meas, k: int) -> ParticleSet:
        lik_rng = self.streams.generator("likelihood", k) if self.ev.stochastic else None
        return step(self.cfg.filter, ps, meas, self.model, self.ev,
                    self.streams.generator("filter", k), self.apf, lik_rng)

    def precompute(self, ps: ParticleSet, k: int, proto: Precompute):
        """Run ahead from the posterior at event step ``k``.

        Returns ``(n_hat, plan)`` where ``plan[k + i] = (box, prob, posterior)``.
        """
        plan: Dict[int, tuple] = {}
        state = {"ps": ps}

        def source(i: int) -> float:
            kk = k + i
            box, p = self.bound(state["ps"], kk)
            state["ps"] = self.update(state["ps"], NoEvent(box), kk)
            plan[kk] = (box, p, state["ps"])
            return p

        if proto.alpha is None and proto.n_hat is None:
            choice = heuristic_horizon(source, proto.c, proto.cap)
            return choice.n_hat, plan
        probs = TriggerProbabilities()
        for i in range(1, proto.cap + 1):
            probs.extend(min(max(source(i), PROB_EPS), 1.0 - PROB_EPS))
            if proto.alpha is not None and sum(probs.first_trigger) >= proto.alpha:
                return i, plan
        return proto.cap, plan


def run(cfg: SimConfig, keep_particles: bool = False) -> Tuple[List[EventLogRecord], SimSummary]:
    model = cfg.build_model()
    ev = cfg.build_evaluator(model)
    streams = Streams(cfg.seed)
    states, ys = simulate(model, cfg.T, cfg.seed)
    obs = _Observer(cfg, model, ev, streams)
    proto = cfg.protocol
    precompute = isinstance(proto, Precompute)

    ps = ParticleSet.from_prior(model, cfg.N, streams.generator("init"))
    records: List[EventLogRecord] = []
    plan: Dict[int, tuple] = {}
    n_hat: Optional[int] = None
    last_event = 0
    periods: List[Tuple[int, int]] = []  # (n, n_hat) per completed event period

    for k in range(1, cfg.T + 1):
        y, x_true = ys[k - 1], states[k - 1]
        forced = False
        if k == 1:
            box, p = (obs.bound(ps, k) if cfg.trigger.kind is TriggerKind.IBT else (None, None))
            meas = Event(y)
        elif precompute:
            box, p, ahead = plan[k]
            meas = decide(cfg.trigger, y, box)
            if isinstance(meas, NoEvent) and k - last_event >= n_hat:
                meas, forced = Event(y), True
        else:
            box, p = obs.bound(ps, k)
            meas = decide(cfg.trigger, y, box)

        if isinstance(meas, Event):
            ps = obs.update(ps, meas, k)
            obs.last_sent = meas.y
            if precompute:
                if k > 1:
                    periods.append((k - last_event, n_hat))
                n_hat, plan = obs.precompute(ps, k, proto)
            last_event = k
        else:
            ps = ahead if precompute else obs.update(ps, meas, k)

        accepted = None
        if isinstance(ev, MonteCarloLikelihood):
            if k == 1:
                accepted = cfg.N
            elif isinstance(meas, NoEvent):
                accepted = ps.accepted
            else:
                # count the would-be survivors of the rejection test at events too
                accepted = int(np.count_nonzero(
                    ev.count_inside(box, ps.particles, k, streams.generator("accounting", k))))
        records.append(EventLogRecord(
            k=k, state=x_true, measurement=y, gamma=int(isinstance(meas, Event)), forced=forced,
            box=box, posterior_mean=ps.mean(), log_density=posterior_log_density(ps, x_true),
            n_hat=n_hat, degenerate=ps.degenerate, trigger_prob=p, accepted=accepted,
            particles=ps if keep_particles else None,
        ))
    return records, summarize(records, cfg, periods)


def _safe_ce(ld, g, mask):
    try:
        return cross_entropy(ld, g, mask)
    except EmptyMask:
        return float("nan")


def summarize(records: List[EventLogRecord], cfg: SimConfig, periods=()) -> SimSummary:
    g = np.array([r.gamma for r in records])
    ld = np.array([r.log_density for r in records])
    events = int(g.sum())
    ev_idx = [r.k for r in records if r.gamma]
    inter = float(np.mean(np.diff(ev_idx))) if len(ev_idx) > 1 else float("nan")
    nhat = [r.n_hat for r in records if r.gamma and r.n_hat is not None]
    proto = cfg.protocol
    if isinstance(proto, Precompute) and periods:
        off = float(np.mean([max(n - proto.c * nh, 0.0) for n, nh in periods]))
    else:
        off = float("nan")
    acc = [r.accepted for r in records if r.accepted is not None]
    probs = [r.trigger_prob for r in records[1:] if r.trigger_prob is not None]
    exp_acc = expected_particle_count(probs, cfg.N) if acc and len(probs) == len(records) - 1 else float("nan")
    return SimSummary(
        T=len(records), events=events, C_r=events / len(records),
        ce_all=_safe_ce(ld, g, "all"), ce_events=_safe_ce(ld, g, "events"),
        ce_noevents=_safe_ce(ld, g, "noevents"),
        mean_n_hat=float(np.mean(nhat)) if nhat else float("nan"),
        forced_fraction=sum(r.forced for r in records) / events,
        mean_off_time=off, mean_inter_event=inter,
        degenerate_steps=sum(r.degenerate for r in records),
        mean_accepted=float(np.mean(acc)) if acc else float("nan"),
        expected_accepted=exp_acc,
    )


@dataclass
class PrecomputedBounds:
    """Bounds and per-step trigger probabilities planned from the prior."""

    boxes: List[Box]
    per_step: np.ndarray
    first_trigger: np.ndarray


def precompute_from_prior(cfg: SimConfig, max_n: int) -> PrecomputedBounds:
    """Plan ``max_n`` trigger sets as if an event had just happened at k = 0.

    The filter starts from the prior, so the result pairs with the naive Monte
    Carlo oracle started from the same prior.
    """
    model = cfg.build_model()
    ev = cfg.build_evaluator(model)
    streams = Streams(cfg.seed)
    obs = _Observer(cfg, model, ev, streams)
    if cfg.trigger.kind is TriggerKind.SOD:
        obs.last_sent = model.measurement_mean(model.prior.mean.reshape(1, -1), 0)[0]
    ps = ParticleSet.from_prior(model, cfg.N, streams.generator("init"))
    _, plan = obs.precompute(ps, 0, Precompute(n_hat=max_n))
    boxes = [plan[i][0] for i in range(1, max_n + 1)]
    probs = TriggerProbabilities()
    for i in range(1, max_n + 1):
        probs.extend(plan[i][1])
    return PrecomputedBounds(boxes, np.asarray(probs.per_step), np.asarray(probs.first_trigger))
