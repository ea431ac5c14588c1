"""State-space models with additive Gaussian noise.

All model functions are vectorized over a leading particle axis: states have
shape ``(N, n)`` and measurements ``(N, m)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .gaussian import Gaussian, JointGaussian, batch_logpdf, psd_sqrt
from .rng import Streams


class StateSpaceModel(ABC):
    """x_k = f_k(x_{k-1}) + w_k,  y_k = h_k(x_k) + v_k,  w ~ N(0, Q), v ~ N(0, R).

    ``k`` always names the step being produced: ``transition_mean(x, k)`` is the
    mean of x_k given x_{k-1} = x.
    """

    state_dim: int
    meas_dim: int
    prior: Gaussian

    @abstractmethod
    def transition_mean(self, x: np.ndarray, k: int) -> np.ndarray: ...

    @abstractmethod
    def process_cov(self, k: int) -> np.ndarray: ...

    @abstractmethod
    def measurement_mean(self, x: np.ndarray, k: int) -> np.ndarray: ...

    @abstractmethod
    def measurement_cov(self, k: int) -> np.ndarray: ...

    @abstractmethod
    def measurement_jacobian(self, x: np.ndarray, k: int) -> np.ndarray:
        """dh/dx at each row of ``x``, shape ``(N, m, n)``."""

    # derived densities and samplers

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.prior.sample(rng, n)

    def sample_transition(self, x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        mean = self.transition_mean(x, k)
        noise = rng.standard_normal(mean.shape) @ psd_sqrt(self.process_cov(k)).T
        return mean + noise

    def transition_logpdf(self, x_new: np.ndarray, x_prev: np.ndarray, k: int) -> np.ndarray:
        return batch_logpdf(x_new, self.transition_mean(x_prev, k), self.process_cov(k))

    def sample_measurement(self, x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        mean = self.measurement_mean(x, k)
        noise = rng.standard_normal(mean.shape) @ psd_sqrt(self.measurement_cov(k)).T
        return mean + noise

    def measurement_logpdf(self, y: np.ndarray, x: np.ndarray, k: int) -> np.ndarray:
        return batch_logpdf(y, self.measurement_mean(x, k), self.measurement_cov(k))

    def joint_moments(self, x_prev: np.ndarray, k: int):
        """Linearized moments of p(x_k, y_k | x_{k-1}) for every row of ``x_prev``.

        The measurement is linearized about the propagated mean. Returns
        ``(mean_x, mean_y, cov_xx, cov_xy, cov_yy)`` with shapes
        ``(N,n), (N,m), (n,n), (N,n,m), (N,m,m)``.
        """
        mean_x = self.transition_mean(x_prev, k)
        q = self.process_cov(k)
        jac = self.measurement_jacobian(mean_x, k)
        mean_y = self.measurement_mean(mean_x, k)
        cov_xy = np.einsum("ij,nkj->nik", q, jac)
        cov_yy = jac @ cov_xy + self.measurement_cov(k)
        return mean_x, mean_y, q, cov_xy, 0.5 * (cov_yy + np.swapaxes(cov_yy, -1, -2))


def joint_gaussian_at(model: StateSpaceModel, x_prev, k: int) -> JointGaussian:
    x_prev = np.asarray(x_prev, dtype=float).reshape(1, model.state_dim)
    mx, my, sxx, sxy, syy = model.joint_moments(x_prev, k)
    return JointGaussian(mx[0], my[0], sxx, sxy[0], syy[0])


def simulate(model: StateSpaceModel, T: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw x_0 from the prior and return ``(x_{1:T}, y_{1:T})``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = Streams(seed).generator("trajectory")
    x = model.sample_prior(1, rng)
    states = np.empty((T, model.state_dim))
    meas = np.empty((T, model.meas_dim))
    for k in range(1, T + 1):
        x = model.sample_transition(x, k, rng)
        states[k - 1] = x[0]
        meas[k - 1] = model.sample_measurement(x, k, rng)[0]
    return states, meas


@dataclass(frozen=True)
class BenchmarkModel(StateSpaceModel):
    """The classic multimodal growth model.

    x_k = x/2 + 25x/(1+x^2) + 8cos(1.2k) + w,  y_k = x_k^2/20 + v.
    """

    q: float = 1.0
    r: float = 0.1
    prior_var: float = 25.0
    state_dim: int = field(default=1, init=False)
    meas_dim: int = field(default=1, init=False)

    @property
    def prior(self) -> Gaussian:
        return Gaussian([0.0], [[self.prior_var]])

    def transition_mean(self, x, k):
        return x / 2 + 25 * x / (1 + x**2) + 8 * np.cos(1.2 * k)

    def process_cov(self, k):
        return np.array([[self.q]])

    def measurement_mean(self, x, k):
        return x**2 / 20

    def measurement_cov(self, k):
        return np.array([[self.r]])

    def measurement_jacobian(self, x, k):
        return (x / 10)[:, :, None]

    def sample_transition(self, x, k, rng):
        return self.transition_mean(x, k) + np.sqrt(self.q) * rng.standard_normal(x.shape)

    def sample_measurement(self, x, k, rng):
        return self.measurement_mean(x, k) + np.sqrt(self.r) * rng.standard_normal(x.shape)


class LinearGaussianModel(StateSpaceModel):
    """x_k = A x_{k-1} + w,  y_k = C x_k + v (time invariant)."""

    def __init__(self, A, C, Q, R, prior_mean, prior_cov):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.state_dim = self.A.shape[0]
        self.meas_dim = self.C.shape[0]
        self.prior = Gaussian(prior_mean, prior_cov)

    @classmethod
    def scalar(cls, a=0.9, q=1.0, r=1.0, p0=1.0) -> "LinearGaussianModel":
        return cls([[a]], [[1.0]], [[q]], [[r]], [0.0], [[p0]])

    def transition_mean(self, x, k):
        return x @ self.A.T

    def process_cov(self, k):
        return self.Q

    def measurement_mean(self, x, k):
        return x @ self.C.T

    def measurement_cov(self, k):
        return self.R

    def measurement_jacobian(self, x, k):
        return np.broadcast_to(self.C, (x.shape[0],) + self.C.shape)


MODELS = {
    "benchmark": BenchmarkModel,
    "lg": LinearGaussianModel.scalar,
}


def make_model(name: str, **params) -> StateSpaceModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**params)
