"""Evaluators of the switching likelihood p(Y_k | x_k).

At an event the likelihood is the measurement density. At a no-event step it is
the probability mass the measurement density puts on the trigger set H_k, which
each evaluator approximates differently:

* ``AnalyticLikelihood``: exact product of per-axis normal CDF differences.
* ``MixtureLikelihood``: the uniform density on H_k replaced by a grid of D
  Gaussians per axis, integrated in closed form and scaled by the box volume
  so that it approximates the same integral as the other two.
* ``MonteCarloLikelihood``: fraction of M simulated measurements that land in
  H_k. With M = 1 this is accept/reject of particles.

All return log values; ``-inf`` marks a rejected particle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonDiagonalCovariance
from .gaussian import Box, batch_logpdf, log_box_mass, logsumexp, mixture_from_box
from .model import StateSpaceModel
from .trigger import Event, HybridMeasurement, NoEvent


class LikelihoodEvaluator:
    model: StateSpaceModel
    stochastic = False
    kind = "base"

    def log_no_event(self, h: Box, x: np.ndarray, k: int, rng=None) -> np.ndarray:
        raise NotImplementedError

    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class AnalyticLikelihood(LikelihoodEvaluator):
    model: StateSpaceModel
    kind = "analytic"

    def log_no_event(self, h, x, k, rng=None):
        r = self.model.measurement_cov(k)
        if np.any(r[~np.eye(r.shape[0], dtype=bool)] != 0.0):
            raise NonDiagonalCovariance("analytic box integral requires diagonal measurement noise")
        return log_box_mass(self.model.measurement_mean(x, k), np.diag(r), h.lower, h.upper)


@dataclass(frozen=True)
class MixtureLikelihood(LikelihoodEvaluator):
    model: StateSpaceModel
    D: int = 3
    variance_scale: Optional[float] = None
    kind = "mixture"

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")

    def log_no_event(self, h, x, k, rng=None):
        mix = mixture_from_box(h, self.D, self.variance_scale)
        mean = self.model.measurement_mean(x, k)
        cov = mix.covs + self.model.measurement_cov(k)
        lp = batch_logpdf(mix.means[None], mean[:, None, :], cov[None])
        with np.errstate(divide="ignore"):
            log_volume = np.sum(np.log(h.upper - h.lower))
        return logsumexp(lp + np.log(mix.weights), axis=-1) + log_volume

    def label(self):
        return f"mixture(D={self.D})"


@dataclass(frozen=True)
class MonteCarloLikelihood(LikelihoodEvaluator):
    model: StateSpaceModel
    M: int = 1
    kind = "mc"
    stochastic = True

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")

    def count_inside(self, h, x, k, rng) -> np.ndarray:
        n = x.shape[0]
        xs = np.repeat(x, self.M, axis=0)
        ys = self.model.sample_measurement(xs, k, rng).reshape(n, self.M, -1)
        return h.contains(ys).sum(axis=1)

    def log_no_event(self, h, x, k, rng=None):
        if rng is None:
            raise ValueError("MonteCarloLikelihood needs an rng")
        with np.errstate(divide="ignore"):
            return np.log(self.count_inside(h, x, k, rng) / self.M)

    def label(self):
        return f"mc(M={self.M})"


def log_likelihood(ev: LikelihoodEvaluator, meas: HybridMeasurement, x, k: int, rng=None) -> np.ndarray:
    """log p(Y_k | x) for every row of ``x`` (proportionality constants dropped)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if isinstance(meas, Event):
        return ev.model.measurement_logpdf(meas.y, x, k)
    if isinstance(meas, NoEvent):
        return ev.log_no_event(meas.box, x, k, rng)
    raise TypeError(f"not a hybrid measurement: {meas!r}")


def log_complement(ev: LikelihoodEvaluator, h: Box, x, k: int, rng=None) -> np.ndarray:
    """log of the probability that the measurement leaves ``h``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if isinstance(ev, MonteCarloLikelihood):
        with np.errstate(divide="ignore"):
            return np.log1p(-ev.count_inside(h, x, k, rng) / ev.M)
    ll = ev.log_no_event(h, x, k, rng)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ll > -np.log(2.0), np.log(-np.expm1(ll)), np.log1p(-np.exp(ll)))
    return np.where(ll >= 0.0, -np.inf, out)


def make_evaluator(kind: str, model: StateSpaceModel, D: int = 3, M: int = 1,
                   variance_scale: Optional[float] = None) -> LikelihoodEvaluator:
    if kind == "analytic":
        return AnalyticLikelihood(model)
    if kind == "mixture":
        return MixtureLikelihood(model, D, variance_scale)
    if kind == "mc":
        return MonteCarloLikelihood(model, M)
    raise ValueError(f"unknown evaluator kind {kind!r}")
