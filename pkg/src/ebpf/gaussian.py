"""Multivariate Gaussian algebra: conditioning, products, box integrals, mixtures.

Single-object operations (:func:`condition`, :func:`product`,
:func:`box_probability`, :func:`mixture_from_box`) act on the dataclasses
below. The ``batch_*`` kernels do the same algebra on stacks of moments with a
leading particle axis and are what the filters use in their inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import log_ndtr

from .errors import NonDiagonalCovariance, SingularCovariance

LOG_2PI = np.log(2.0 * np.pi)
SYM_TOL = 1e-10
PSD_TOL = 1e-10
COND_TOL = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _check_invertible(a: np.ndarray) -> None:
    s = np.linalg.svd(a, compute_uv=False)
    smax = s.max(axis=-1)
    if np.any(smax <= 0.0) or np.any(s.min(axis=-1) <= COND_TOL * smax):
        raise SingularCovariance("covariance is singular to working precision")


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        cov = symmetrize(cov)
        if np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return batch_logpdf(x, self.mean, self.cov)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ psd_sqrt(self.cov).T

    def is_diagonal(self) -> bool:
        return bool(np.all(self.cov[~np.eye(self.dim, dtype=bool)] == 0.0))


@dataclass(frozen=True)
class JointGaussian:
    """Joint density of (x, y) in block form."""

    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_xx: np.ndarray
    cov_xy: np.ndarray
    cov_yy: np.ndarray

    def __post_init__(self):
        mx = np.atleast_1d(np.asarray(self.mean_x, dtype=float))
        my = np.atleast_1d(np.asarray(self.mean_y, dtype=float))
        n, m = mx.size, my.size
        sxx = symmetrize(np.asarray(self.cov_xx, dtype=float).reshape(n, n))
        sxy = np.asarray(self.cov_xy, dtype=float).reshape(n, m)
        syy = symmetrize(np.asarray(self.cov_yy, dtype=float).reshape(m, m))
        for name, val in zip(
            ("mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy"), (mx, my, sxx, sxy, syy)
        ):
            object.__setattr__(self, name, val)
        if np.linalg.eigvalsh(self.assembled().cov).min() < -PSD_TOL * max(1.0, np.abs(self.assembled().cov).max()):
            raise ValueError("joint covariance is not positive semidefinite")

    @property
    def dims(self) -> Tuple[int, int]:
        return self.mean_x.size, self.mean_y.size

    def assembled(self) -> Gaussian:
        mean = np.concatenate([self.mean_x, self.mean_y])
        cov = np.block([[self.cov_xx, self.cov_xy], [self.cov_xy.T, self.cov_yy]])
        return Gaussian(mean, cov)

    def marginal_x(self) -> Gaussian:
        return Gaussian(self.mean_x, self.cov_xx)

    def marginal_y(self) -> Gaussian:
        return Gaussian(self.mean_y, self.cov_yy)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``{y : lower <= y <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box has lower > upper on some axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def full(cls, dim: int, proxy: float = 1e9) -> "Box":
        return cls(-proxy * np.ones(dim), proxy * np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, y) -> np.ndarray:
        """Membership test; boundary points are inside. Broadcasts over leading axes."""
        y = np.asarray(y, dtype=float)
        return np.all((y >= self.lower) & (y <= self.upper), axis=-1)

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    __hash__ = None


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.asarray(self.means, dtype=float).reshape(w.size, -1)
        d = mu.shape[1]
        cov = symmetrize(np.asarray(self.covs, dtype=float).reshape(w.size, d, d))
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)

    @property
    def components(self) -> List[Gaussian]:
        return [Gaussian(m, c) for m, c in zip(self.means, self.covs)]

    def __len__(self):
        return self.weights.size

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.means.shape[1])
        lp = batch_logpdf(x[:, None, :], self.means[None], self.covs[None])
        return logsumexp(lp + np.log(self.weights), axis=-1)


# ---------------------------------------------------------------------------
# batched kernels


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """A square root ``L`` with ``L @ L.T == cov`` that tolerates singular input."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def logsumexp(a: np.ndarray, axis=-1) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return np.squeeze(out, axis=axis)


def batch_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """log N(x | mean, cov) broadcasting over leading axes; ``cov`` must be SPD."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = x.shape[-1]
    r = x - mean
    if d == 1:
        var = cov[..., 0, 0]
        return -0.5 * (LOG_2PI + np.log(var) + r[..., 0] ** 2 / var)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    shape = np.broadcast_shapes(r.shape[:-1], chol.shape[:-2])
    chol = np.broadcast_to(chol, shape + (d, d))
    r = np.broadcast_to(r, shape + (d,))
    z = np.linalg.solve(chol, r[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * LOG_2PI + logdet + np.sum(z**2, axis=-1))


def batch_condition(mean_x, mean_y, cov_xx, cov_xy, cov_yy, y):
    """Vectorized conditioning of a joint Gaussian on ``y`` (broadcasting)."""
    gain = np.swapaxes(np.linalg.solve(cov_yy, np.swapaxes(cov_xy, -1, -2)), -1, -2)
    mean = mean_x + np.einsum("...ij,...j->...i", gain, y - mean_y)
    cov = symmetrize(cov_xx - gain @ np.swapaxes(cov_xy, -1, -2))
    return mean, cov


def log_box_mass(mean: np.ndarray, var: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """log P(lower <= Y <= upper) for independent axes Y_i ~ N(mean_i, var_i).

    ``mean`` and ``var`` broadcast over leading axes; the last axis is summed.
    Zero-variance axes are treated as point masses.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    std = np.sqrt(var)
    pos = std > 0
    safe = np.where(pos, std, 1.0)
    a = (lower - mean) / safe
    b = (upper - mean) / safe
    # Evaluate in whichever tail keeps both CDFs small.
    flip = a + b > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = log_lo - log_hi
        out = log_hi + np.where(diff > -np.log(2.0), np.log(-np.expm1(diff)), np.log1p(-np.exp(diff)))
    out = np.where(hi > lo, out, -np.inf)
    point = np.where((mean >= lower) & (mean <= upper), 0.0, -np.inf)
    out = np.where(pos, out, point)
    return np.sum(out, axis=-1)


# ---------------------------------------------------------------------------
# operations


def condition(joint: JointGaussian, y) -> Gaussian:
    """Distribution of x given y under a joint Gaussian."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != joint.mean_y.shape:
        raise ValueError(f"y has shape {y.shape}, expected {joint.mean_y.shape}")
    _check_invertible(joint.cov_yy)
    mean, cov = batch_condition(joint.mean_x, joint.mean_y, joint.cov_xx, joint.cov_xy, joint.cov_yy, y)
    return Gaussian(mean, cov)


def product(a: Gaussian, b: Gaussian) -> Tuple[float, Gaussian]:
    """Pointwise product of two Gaussian densities as ``exp(log_scale) * N(x | m3, S3)``."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    s = a.cov + b.cov
    _check_invertible(s)
    log_scale = float(batch_logpdf(a.mean, b.mean, s))
    # (A^-1 + B^-1)^-1 = A (A+B)^-1 B, which avoids inverting A and B separately.
    cov = symmetrize(a.cov @ np.linalg.solve(s, b.cov))
    mean = b.cov @ np.linalg.solve(s, a.mean) + a.cov @ np.linalg.solve(s, b.mean)
    return log_scale, Gaussian(mean, cov)


def box_probability(g: Gaussian, h: Box) -> float:
    if g.dim != h.dim:
        raise ValueError("dimension mismatch")
    if not g.is_diagonal():
        raise NonDiagonalCovariance("box_probability needs a diagonal covariance")
    return float(np.exp(log_box_mass(g.mean, np.diag(g.cov), h.lower, h.upper)))


def mixture_from_box(h: Box, D: int, variance_scale: Optional[float] = None) -> GaussianMixture:
    """Approximate the uniform density on ``h`` by ``D**m`` equally weighted Gaussians.

    Means sit at the midpoints of a D-cell partition of each axis. The default
    per-axis variance is the axis half-width divided by D.
    """
    if D < 1:
        raise ValueError("D must be a positive integer")
    m = h.dim
    offsets = (np.arange(D) + 0.5) / D
    axes = [h.lower[i] + offsets * (h.upper[i] - h.lower[i]) for i in range(m)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    if variance_scale is None:
        var = h.half_width / D
    else:
        if variance_scale <= 0:
            raise ValueError("variance_scale must be positive")
        var = np.full(m, float(variance_scale))
    n = grid.shape[0]
    covs = np.broadcast_to(np.diag(var), (n, m, m))
    return GaussianMixture(np.full(n, 1.0 / n), grid, covs)
