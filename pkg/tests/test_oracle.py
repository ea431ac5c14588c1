import ast
import pathlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import ebpf.oracle as oracle
from ebpf.errors import ToleranceNotMet
from ebpf.gaussian import Box, Gaussian
from ebpf.model import BenchmarkModel, LinearGaussianModel
from ebpf.oracle import exhaustive_tc_argmax, kalman_filter, naive_mc_trigger_pmf, quadrature_box_integral
from ebpf.trigger import TriggerRule


def test_oracle_imports_no_main_kernels():
    tree = ast.parse(pathlib.Path(oracle.__file__).read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level:
            imported.add(node.module)
    assert imported <= {"errors"}


# --- naive Monte Carlo ---------------------------------------------------------------


def test_mc_huge_delta_censors_everything():
    r = naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("SOD", 1e9), R=2000, max_n=10, seed=0)
    assert r.censored == 1.0 and r.pmf.sum() == 0.0


def test_mc_tiny_delta_triggers_at_once():
    r = naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("SOD", 1e-9), R=2000, max_n=10, seed=0)
    assert r.pmf[0] == 1.0


def test_mc_deterministic_and_banded():
    a = naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("SOD", 2.5), R=5000, max_n=30, seed=3)
    b = naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("SOD", 2.5), R=5000, max_n=30, seed=3)
    np.testing.assert_array_equal(a.pmf, b.pmf)
    assert np.all(a.lower <= a.pmf) and np.all(a.pmf <= a.upper)
    assert a.pmf.sum() + a.censored == pytest.approx(1.0)


def test_mc_with_bounds_matches_geometric():
    # y = x + v with x frozen at 0 and unit noise: every step triggers independently
    m = LinearGaussianModel.scalar(a=0.0, q=0.0, r=1.0, p0=0.0)
    boxes = [Box([-1.0], [1.0])] * 20
    r = naive_mc_trigger_pmf(m, TriggerRule("IBT", 1.0), R=100_000, max_n=20, seed=1, bounds=boxes)
    p = 0.3173105
    ref = p * (1 - p) ** np.arange(20)
    se = np.sqrt(ref * (1 - ref) / 100_000)
    assert np.all(np.abs(r.pmf - ref) <= 4 * se + 1e-12)


def test_mc_benchmark_shape_at_wide_delta():
    r = naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("SOD", 7.5), R=100_000, max_n=40, seed=2)
    assert r.pmf[:10].sum() > r.pmf[10:].sum()
    assert np.max(r.upper - r.lower) < 0.01


def test_mc_needs_enough_bounds():
    with pytest.raises(ValueError):
        naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("IBT", 1.0), R=10, max_n=5, seed=0,
                             bounds=[Box([0.0], [1.0])])
    with pytest.raises(ValueError):
        naive_mc_trigger_pmf(BenchmarkModel(), TriggerRule("IBT", 1.0), R=0, max_n=5, seed=0)


# --- quadrature --------------------------------------------------------------------------


def test_quadrature_examples():
    g = Gaussian([0.0], [[1.0]])
    assert quadrature_box_integral(g, Box([-1.96], [1.96])) == pytest.approx(0.9500042097, abs=1e-9)
    assert quadrature_box_integral(g, Box([0.5], [0.5])) == 0.0
    assert quadrature_box_integral(g, Box.full(1)) == pytest.approx(1.0, abs=1e-10)


def test_quadrature_separable_2d():
    g = Gaussian([0.0, 1.0], np.diag([1.0, 4.0]))
    assert quadrature_box_integral(g, Box([-1.96, 1 - 3.92], [1.96, 1 + 3.92])) == pytest.approx(0.95**2, abs=1e-4)


def test_quadrature_rejects_correlation():
    with pytest.raises(ValueError):
        quadrature_box_integral(Gaussian([0, 0], [[1, 0.5], [0.5, 1]]), Box([-1, -1], [1, 1]))


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_quadrature_tolerance_error():
    with pytest.raises(ToleranceNotMet):
        quadrature_box_integral(Gaussian([0.0], [[1.0]]), Box([-30.0], [30.0]), tol=1e-300)


# --- exhaustive T_c ---------------------------------------------------------------------------


def test_exhaustive_first_index_on_ties():
    # all mass at n = 1: T_c(n) = max(1 - c n, 0), so n = 2, 3, ... tie at 0 and n = 1 wins
    n, v = exhaustive_tc_argmax([1.0], 0.5, 10)
    assert n == 1 and v == pytest.approx(0.5)
    # a flat curve returns its first index
    n, _ = exhaustive_tc_argmax([0.0] * 10, 0.999, 1)
    assert n == 1


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.99))
def test_exhaustive_matches_scan(seed, c):
    from ebpf.horizon import tc_value
    p = np.random.default_rng(seed).dirichlet(np.ones(15))
    n, v = exhaustive_tc_argmax(p, c, 40)
    vals = [tc_value(p, c, k) for k in range(1, 41)]
    assert v == pytest.approx(max(vals), abs=1e-10)
    assert n == 1 + int(np.argmax(np.round(vals, 10)))


# --- Kalman ------------------------------------------------------------------------------


def test_kalman_noise_free_recovers_state():
    A, C = np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2)
    x = np.array([0.0, 1.0])
    ys = []
    for _ in range(5):
        x = A @ x
        ys.append(C @ x)
    # R must stay invertible, so use a negligible measurement variance
    kf = kalman_filter(A, C, np.zeros((2, 2)), np.eye(2) * 1e-9, [0.0, 1.0], np.zeros((2, 2)), ys)
    np.testing.assert_allclose(kf.means[-1], x, atol=1e-9)


def test_kalman_static_state_variance():
    p0, r = 2.0, 0.5
    ys = np.random.default_rng(0).normal(1.0, np.sqrt(r), size=(12, 1))
    kf = kalman_filter([[1.0]], [[1.0]], [[0.0]], [[r]], [0.0], [[p0]], ys)
    for k in range(1, 13):
        assert kf.covs[k - 1, 0, 0] == pytest.approx(1.0 / (1.0 / p0 + k / r), rel=1e-12)


def test_kalman_innovations_white():
    m = LinearGaussianModel.scalar(a=0.8, q=1.0, r=0.5, p0=1.0)
    rng = np.random.default_rng(4)
    x = m.sample_prior(1, rng)
    ys = []
    for k in range(1, 5001):
        x = m.sample_transition(x, k, rng)
        ys.append(m.sample_measurement(x, k, rng)[0])
    kf = kalman_filter(m.A, m.C, m.Q, m.R, m.prior.mean, m.prior.cov, ys)
    e = kf.innovations[:, 0] / np.sqrt(kf.innovation_covs[:, 0, 0])
    n = e.size
    for lag in range(1, 11):
        rho = np.corrcoef(e[:-lag], e[lag:])[0, 1]
        assert abs(rho) <= 3 / np.sqrt(n)
    assert abs(e.var() - 1.0) <= 3 * np.sqrt(2 / n)
