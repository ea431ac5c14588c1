"""Brute-force reference computations for tests and calibration runs.

Nothing here reuses the numeric kernels of the main modules; models are only
queried for their defining functions (transition mean, measurement mean and
noise covariances).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import SingularCovariance, ToleranceNotMet


# ---------------------------------------------------------------------------
# first-trigger distribution by forward simulation


@dataclass
class MCTriggerPMF:
    pmf: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    censored: float
    repetitions: int

    @property
    def max_n(self) -> int:
        return self.pmf.size


def _binomial_band(counts: np.ndarray, total: int, level: float = 0.90):
    a = (1.0 - level) / 2.0
    lo = np.where(counts > 0, stats.beta.ppf(a, counts, total - counts + 1), 0.0)
    hi = np.where(counts < total, stats.beta.ppf(1 - a, counts + 1, total - counts), 1.0)
    return lo, hi


def naive_mc_trigger_pmf(model, rule, R: int, max_n: int, seed: int,
                         bounds: Optional[Sequence] = None, k0: int = 0,
                         initial_states: Optional[np.ndarray] = None) -> MCTriggerPMF:
    """Empirical pmf of the first trigger time after step ``k0``.

    With ``bounds`` (a sequence of boxes for steps k0+1, k0+2, ...) the sensor
    checks the true measurements against those precomputed sets. Without them
    the run is filterless: the trigger set is a send-on-delta box centered on
    the measurement taken at ``k0``. Trajectories start from
    ``initial_states`` (shape ``(R, n)``) or from the model prior.
    Trigger times past ``max_n`` are reported as ``censored`` mass.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    rng = np.random.default_rng(seed)
    n = model.state_dim
    if initial_states is None:
        mu = np.asarray(model.prior.mean, dtype=float)
        cov = np.asarray(model.prior.cov, dtype=float)
        w, v = np.linalg.eigh(cov)
        x = mu + rng.standard_normal((R, n)) @ (v * np.sqrt(np.clip(w, 0, None))).T
    else:
        x = np.array(initial_states, dtype=float).reshape(R, n)

    def noise_sqrt(cov):
        w, v = np.linalg.eigh(np.asarray(cov, dtype=float))
        return (v * np.sqrt(np.clip(w, 0, None))).T

    def measure(x, k):
        mean = model.measurement_mean(x, k)
        return mean + rng.standard_normal(mean.shape) @ noise_sqrt(model.measurement_cov(k))

    if bounds is None:
        y0 = measure(x, k0)
        hw = rule.half_width(model.meas_dim)
        lo_c, hi_c = y0 - hw, y0 + hw
    else:
        if len(bounds) < max_n:
            raise ValueError("need at least max_n precomputed bounds")

    first = np.zeros(R, dtype=int)  # 0 = not yet triggered
    for i in range(1, max_n + 1):
        k = k0 + i
        mean = model.transition_mean(x, k)
        x = mean + rng.standard_normal(mean.shape) @ noise_sqrt(model.process_cov(k))
        y = measure(x, k)
        if bounds is None:
            lo, hi = lo_c, hi_c
        else:
            lo, hi = bounds[i - 1].lower, bounds[i - 1].upper
        outside = np.any((y < lo) | (y > hi), axis=-1)
        first[(first == 0) & outside] = i
        if np.all(first > 0):
            break
    counts = np.bincount(first, minlength=max_n + 1)[: max_n + 1]
    pmf = counts[1:] / R
    lo, hi = _binomial_band(counts[1:], R)
    return MCTriggerPMF(pmf, lo, hi, counts[0] / R, R)


# ---------------------------------------------------------------------------
# box integrals by quadrature


def quadrature_box_integral(gaussian, box, tol: float = 1e-10) -> float:
    """P(Y in box) for Y ~ gaussian (separable covariance) by adaptive quadrature."""
    mean = np.atleast_1d(np.asarray(gaussian.mean, dtype=float))
    cov = np.atleast_2d(np.asarray(gaussian.cov, dtype=float))
    if np.any(cov[~np.eye(mean.size, dtype=bool)] != 0):
        raise ValueError("quadrature oracle handles separable (diagonal) covariances only")
    total = 1.0
    for mu, var, a, b in zip(mean, np.diag(cov), box.lower, box.upper):
        if b <= a:
            return 0.0
        sd = np.sqrt(var)
        # beyond 40 sd the density is below double precision
        a_eff, b_eff = max(a, mu - 40 * sd), min(b, mu + 40 * sd)
        if b_eff <= a_eff:
            return 0.0

        def pdf(t):
            return np.exp(-0.5 * ((t - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))

        pts = [mu] if a_eff < mu < b_eff else None
        val, err = integrate.quad(pdf, a_eff, b_eff, epsabs=tol / 10, epsrel=tol / 10, limit=200, points=pts)
        if err > tol:
            raise ToleranceNotMet(f"quadrature error estimate {err:g} exceeds {tol:g}")
        total *= val
    return float(total)


# ---------------------------------------------------------------------------
# exhaustive horizon search


def tc_curve(p_T: Sequence[float], c: float, n_max: int) -> np.ndarray:
    """T_c(n) for n = 1..n_max, all at once."""
    p = np.zeros(n_max)
    src = np.asarray(p_T, dtype=float)[:n_max]
    p[: src.size] = src
    n = np.arange(1, n_max + 1, dtype=float)
    i = n.copy()
    gain = np.clip(i[None, :] - c * n[:, None], 0.0, None)
    gain *= i[None, :] < n[:, None]
    below = np.concatenate([[0.0], np.cumsum(p)[:-1]])  # mass strictly before n
    return gain @ p + (1.0 - c) * n * (1.0 - below)


def exhaustive_tc_argmax(p_T: Sequence[float], c: float, n_max: int):
    """First global maximizer of T_c over 1..n_max and its value."""
    curve = tc_curve(p_T, c, n_max)
    idx = int(np.argmax(curve))
    return idx + 1, float(curve[idx])


# ---------------------------------------------------------------------------
# Kalman filter


@dataclass
class KalmanResult:
    means: np.ndarray
    covs: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    innovations: np.ndarray
    innovation_covs: np.ndarray


def kalman_filter(A, C, Q, R, m0, P0, measurements) -> KalmanResult:
    A, C, Q, R, P = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, C, Q, R, P0))
    m = np.atleast_1d(np.asarray(m0, dtype=float))
    ys = np.asarray(measurements, dtype=float).reshape(len(measurements), -1)
    T, n, d = ys.shape[0], m.size, ys.shape[1]
    out = KalmanResult(np.empty((T, n)), np.empty((T, n, n)), np.empty((T, n)),
                       np.empty((T, n, n)), np.empty((T, d)), np.empty((T, d, d)))
    for t, y in enumerate(ys):
        m = A @ m
        P = A @ P @ A.T + Q
        out.pred_means[t], out.pred_covs[t] = m, P
        S = C @ P @ C.T + R
        if np.linalg.cond(S) > 1e12:
            raise SingularCovariance("innovation covariance is singular")
        K = np.linalg.solve(S, C @ P).T
        e = y - C @ m
        m = m + K @ e
        P = P - K @ S @ K.T
        P = 0.5 * (P + P.T)
        out.means[t], out.covs[t] = m, P
        out.innovations[t], out.innovation_covs[t] = e, S
    return out
