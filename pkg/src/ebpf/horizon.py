"""Choosing how many trigger bounds to precompute after an event.

After an event the observer estimates, step by step, the probability that the
sensor triggers at step i given that it has not triggered before. Chaining
these gives the first-trigger pmf ``p_T``. The horizon ``n_hat`` trades wasted
precomputation against forced triggers; the objective is the expected
normalized radio-off time

    T_c(n_hat) = E[max(n - c * n_hat, 0)],

where n is the first-trigger time truncated at n_hat (a forced trigger) and
``c`` is the per-sample compute/transmit time over the sample period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import NotReached
from .likelihood import LikelihoodEvaluator, log_complement

PROB_EPS = 1e-9
QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class HorizonCost:
    c: float
    t_s: Optional[float] = None
    h: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError("c must lie in (0, 1)")

    @classmethod
    def from_times(cls, t_s: float, h: float) -> "HorizonCost":
        return cls(t_s / h, t_s, h)


@dataclass
class TriggerProbabilities:
    """Running first-trigger distribution built from per-step probabilities."""

    per_step: List[float] = field(default_factory=list)
    first_trigger: List[float] = field(default_factory=list)
    no_trigger_product: float = 1.0

    def extend(self, p: float) -> float:
        p = min(max(float(p), 0.0), 1.0)
        self.per_step.append(p)
        p_first = p * self.no_trigger_product
        self.first_trigger.append(p_first)
        self.no_trigger_product *= 1.0 - p
        return p_first

    def __len__(self):
        return len(self.per_step)


def estimate_step_probability(secondary, h_next, ev: LikelihoodEvaluator, rng=None) -> float:
    """Particle estimate of the probability that the next measurement leaves ``h_next``.

    ``secondary`` is the bootstrap-propagated set for the step in question.
    """
    lc = log_complement(ev, h_next, secondary.particles, secondary.k, rng)
    p = float(secondary.weights @ np.exp(lc))
    return min(max(p, 0.0), 1.0)


def first_trigger_pmf(per_step: Sequence[float]) -> np.ndarray:
    probs = TriggerProbabilities()
    for p in per_step:
        if not 0.0 <= p <= 1.0:
            raise ValueError("per-step probabilities must lie in [0, 1]")
        probs.extend(p)
    return np.asarray(probs.first_trigger)


def quantile_horizon(p_T: Sequence[float], alpha: float) -> int:
    """Smallest n whose cumulative first-trigger mass reaches ``alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    cdf = np.cumsum(np.asarray(p_T, dtype=float))
    hit = np.nonzero(cdf >= alpha - QUANTILE_TOL)[0]
    if hit.size == 0:
        raise NotReached(f"cumulative mass {cdf[-1] if cdf.size else 0.0:.6g} < {alpha}")
    return int(hit[0]) + 1


def _padded(p_T, n: int) -> np.ndarray:
    p = np.zeros(n + 1)  # index 0 unused so p[i] = p_T(i)
    src = np.asarray(p_T, dtype=float)[:n]
    p[1:1 + src.size] = src
    return p


def tc_value(p_T: Sequence[float], c: float, n_hat: int) -> float:
    """T_c(n_hat) by direct expansion of the truncated first-trigger pmf."""
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    if n_hat < 1:
        raise ValueError("n_hat must be >= 1")
    p = _padded(p_T, n_hat)
    p_n = p[1:].copy()
    p_n[-1] = 1.0 - p[1:n_hat].sum()
    i = np.arange(1, n_hat + 1)
    cn = c * n_hat
    keep = i > cn
    return float(np.sum((i[keep] - cn) * p_n[keep]))


def tc_forward_difference(p_T: Sequence[float], c: float, n_hat: int) -> float:
    """T_c(n_hat + 1) - T_c(n_hat) in closed form.

    1 - P(n_hat) - c (1 - P(floor(c n_hat)))
      + (c(n_hat+1) - floor(c(n_hat+1))) p_T(floor(c(n_hat+1))) (floor(c(n_hat+1)) - floor(c n_hat)),
    with P the cumulative sum of ``p_T`` and p_T(0) = 0.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    if n_hat < 1:
        raise ValueError("n_hat must be >= 1")
    p = _padded(p_T, n_hat)
    cdf = np.cumsum(p)
    lo = math.floor(c * n_hat)
    hi_real = c * (n_hat + 1)
    hi = math.floor(hi_real)
    frac = (hi_real - hi) * p[hi] * (hi - lo)
    return float(frac + 1.0 - cdf[n_hat] - c * (1.0 - cdf[lo]))


def theorem1_lower_bound(p_T: Sequence[float], c: float) -> int:
    """Index below which T_c is strictly increasing, so no maximizer lies there."""
    return quantile_horizon(p_T, 1.0 - c)


@dataclass
class HorizonChoice:
    n_hat: int
    probabilities: TriggerProbabilities
    cap_reached: bool = False


def default_cap(c: float) -> int:
    return 10 * math.ceil(1.0 / c)


def heuristic_horizon(step_prob_source: Callable[[int], float], c: float,
                      n_hat_max: Optional[int] = None) -> HorizonChoice:
    """Extend p_T one step at a time and stop at the first local maximizer of T_c.

    ``step_prob_source(i)`` returns the probability of triggering at step i
    given no trigger at steps 1..i-1; it is called with i = 1, 2, ... in order.
    """
    HorizonCost(c)
    cap = default_cap(c) if n_hat_max is None else int(n_hat_max)
    if cap < 1:
        raise ValueError("n_hat_max must be >= 1")
    probs = TriggerProbabilities()
    for n_hat in range(1, cap + 1):
        p = min(max(float(step_prob_source(n_hat)), PROB_EPS), 1.0 - PROB_EPS)
        probs.extend(p)
        if tc_forward_difference(probs.first_trigger, c, n_hat) < 0.0:
            return HorizonChoice(n_hat, probs, False)
    return HorizonChoice(cap, probs, True)
