"""Particle filters under event-based sampling.

Two filters share the :class:`ParticleSet` representation:

* :func:`step_bpf`, the bootstrap filter: resample, propagate through the
  transition density, weight by the switching likelihood.
* :func:`step_apf_fa`, an approximately fully adapted auxiliary filter built on
  a linearized joint Gaussian of (x_k, y_k) given x_{k-1}. At events the
  proposal is the conditional Gaussian given y_k; at no-events the uniform
  density on H_k is replaced by a Gaussian mixture, which turns both the
  proposal and the predictive likelihood into closed-form mixtures.

Resampling is multinomial and happens every step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyMask, EmptyParticleSet
from .gaussian import LOG_2PI, batch_condition, batch_logpdf, logsumexp, mixture_from_box, psd_sqrt
from .likelihood import AnalyticLikelihood, LikelihoodEvaluator, log_likelihood
from .model import StateSpaceModel
from .trigger import Event, HybridMeasurement, NoEvent


class FilterKind(str, enum.Enum):
    BPF = "BPF"
    APF_FA = "APF_FA"


@dataclass
class ParticleSet:
    particles: np.ndarray
    log_weights: np.ndarray
    k: int = 0
    ancestors: Optional[np.ndarray] = None
    degenerate: bool = False
    accepted: Optional[int] = None  # particles with nonzero weight before any fallback

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        self.particles = p.reshape(-1, 1) if p.ndim == 1 else p
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.particles.shape[0] == 0:
            raise EmptyParticleSet("a particle set needs at least one particle")

    @classmethod
    def uniform(cls, particles, k: int = 0) -> "ParticleSet":
        particles = np.asarray(particles, dtype=float)
        n = particles.shape[0]
        return cls(particles, np.full(n, -np.log(n)), k)

    @classmethod
    def from_prior(cls, model: StateSpaceModel, n: int, rng) -> "ParticleSet":
        return cls.uniform(model.sample_prior(n, rng), 0)

    @property
    def N(self) -> int:
        return self.particles.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def cov(self) -> np.ndarray:
        r = self.particles - self.mean()
        return (self.weights[:, None] * r).T @ r

    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w**2))


def normalize_log_weights(logw: np.ndarray):
    """Return normalized log weights and whether a uniform fallback was needed."""
    total = logsumexp(logw)
    if not np.isfinite(total):
        n = logw.size
        return np.full(n, -np.log(n)), True
    return logw - total, False


def resample_categorical(log_weights: np.ndarray, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws from the categorical distribution given by ``log_weights``."""
    w = np.exp(log_weights - logsumexp(log_weights))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n_out), side="right")
    return np.minimum(idx, w.size - 1)


def _finish(particles, logw, k, ancestors) -> ParticleSet:
    logw = np.where(np.isnan(logw), -np.inf, logw)
    accepted = int(np.isfinite(logw).sum())
    logw, degenerate = normalize_log_weights(logw)
    return ParticleSet(particles, logw, k, ancestors, degenerate, accepted)


def step_bpf(ps: ParticleSet, meas: HybridMeasurement, model: StateSpaceModel,
             ev: LikelihoodEvaluator, rng: np.random.Generator, lik_rng=None) -> ParticleSet:
    k = ps.k + 1
    a = resample_categorical(ps.log_weights, ps.N, rng)
    x = model.sample_transition(ps.particles[a], k, rng)
    logw = log_likelihood(ev, meas, x, k, lik_rng if lik_rng is not None else rng)
    return _finish(x, logw, k, a)


def propagate_secondary(ps: ParticleSet, model: StateSpaceModel, rng: np.random.Generator,
                        n_out: Optional[int] = None) -> ParticleSet:
    """Bootstrap one-step prediction: resample by weight, propagate, uniform weights."""
    n_out = ps.N if n_out is None else n_out
    a = resample_categorical(ps.log_weights, n_out, rng)
    x = model.sample_transition(ps.particles[a], ps.k + 1, rng)
    return ParticleSet(x, np.full(n_out, -np.log(n_out)), ps.k + 1, a)


@dataclass(frozen=True)
class APFConfig:
    D: int = 3
    variance_scale: Optional[float] = None


def _sample_gaussians(mean, cov, rng):
    z = rng.standard_normal(mean.shape)
    return mean + np.einsum("nij,nj->ni", psd_sqrt(cov), z)


def step_apf_fa(ps: ParticleSet, meas: HybridMeasurement, model: StateSpaceModel,
                rng: np.random.Generator, ev: Optional[LikelihoodEvaluator] = None,
                config: APFConfig = APFConfig(), lik_rng=None) -> ParticleSet:
    """One step of the approximate fully adapted auxiliary particle filter.

    ``ev`` evaluates the exact no-event likelihood in the weight numerator
    (analytic by default).
    """
    ev = AnalyticLikelihood(model) if ev is None else ev
    k = ps.k + 1
    xp = ps.particles
    mx, my, sxx, sxy, syy = model.joint_moments(xp, k)

    if isinstance(meas, Event):
        y = meas.y
        log_pred = batch_logpdf(y, my, syy)
        a = resample_categorical(ps.log_weights + log_pred, ps.N, rng)
        mu_p, cov_p = batch_condition(mx[a], my[a], sxx, sxy[a], syy[a], y)
        x = _sample_gaussians(mu_p, cov_p, rng)
        log_q = batch_logpdf(x, mu_p, cov_p) + log_pred[a]
    elif isinstance(meas, NoEvent):
        mix = mixture_from_box(meas.box, config.D, config.variance_scale)
        # log alpha_j + log N(z_j | mu_y, S_yy + V_j), shape (N, J)
        s_j = syy[:, None] + mix.covs[None]
        log_c = np.log(mix.weights) + batch_logpdf(mix.means[None], my[:, None, :], s_j)
        log_pred = logsumexp(log_c, axis=-1)
        a = resample_categorical(ps.log_weights + log_pred, ps.N, rng)
        log_ca = log_c[a]
        j = resample_categorical_rows(log_ca, rng)
        z = mix.means[None]
        mu_all, cov_all = batch_condition(
            mx[a][:, None, :], my[a][:, None, :], sxx, sxy[a][:, None], s_j[a], z
        )
        n = np.arange(ps.N)
        x = _sample_gaussians(mu_all[n, j], cov_all[n, j], rng)
        log_q = logsumexp(log_ca + batch_logpdf(x[:, None, :], mu_all, cov_all), axis=-1)
    else:
        raise TypeError(f"not a hybrid measurement: {meas!r}")

    log_num = log_likelihood(ev, meas, x, k, lik_rng if lik_rng is not None else rng)
    log_num = log_num + model.transition_logpdf(x, xp[a], k)
    with np.errstate(invalid="ignore"):
        logw = log_num - log_q
    return _finish(x, logw, k, a)


def resample_categorical_rows(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of an ``(N, J)`` array of log weights."""
    w = np.exp(log_w - logsumexp(log_w, axis=-1)[:, None])
    cdf = np.cumsum(w, axis=-1)
    u = rng.random(log_w.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=-1), log_w.shape[1] - 1)


def step(kind: FilterKind, ps, meas, model, ev, rng, apf=APFConfig(), lik_rng=None) -> ParticleSet:
    if FilterKind(kind) is FilterKind.BPF:
        return step_bpf(ps, meas, model, ev, rng, lik_rng)
    return step_apf_fa(ps, meas, model, rng, ev, apf, lik_rng)


def kde_bandwidth(ps: ParticleSet) -> np.ndarray:
    """Per-axis Silverman bandwidth from the weighted particle spread."""
    n, d = ps.particles.shape
    sd = np.sqrt(np.clip(np.diag(ps.cov()), 0.0, None))
    h = sd * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0)) if d > 1 else 1.06 * sd * n ** (-0.2)
    return np.maximum(h, MIN_BANDWIDTH)


MIN_BANDWIDTH = 1e-6


def posterior_log_density(ps: ParticleSet, x) -> float:
    """Weighted Gaussian KDE of the particle posterior evaluated at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = kde_bandwidth(ps)
    z = (x - ps.particles) / h
    lk = -0.5 * np.sum(z**2 + LOG_2PI, axis=-1) - np.sum(np.log(h))
    return float(logsumexp(ps.log_weights + lk))


def cross_entropy(log_densities, gammas=None, mask: str = "all") -> float:
    """Average negative log posterior density over the selected steps."""
    ld = np.asarray(log_densities, dtype=float)
    if mask == "all":
        sel = np.ones(ld.size, dtype=bool)
    else:
        if gammas is None:
            raise ValueError("gammas are required for event masks")
        g = np.asarray(gammas).astype(bool)
        if mask == "events":
            sel = g
        elif mask == "noevents":
            sel = ~g
        else:
            raise ValueError(f"unknown mask {mask!r}")
    if not sel.any():
        raise EmptyMask(f"mask {mask!r} selects no steps")
    return float(-ld[sel].mean())
