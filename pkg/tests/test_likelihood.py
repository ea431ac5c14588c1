import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ebpf.errors import NonDiagonalCovariance
from ebpf.gaussian import Box
from ebpf.likelihood import (AnalyticLikelihood, MixtureLikelihood, MonteCarloLikelihood, log_complement,
                             log_likelihood, make_evaluator)
from ebpf.model import BenchmarkModel, LinearGaussianModel
from ebpf.oracle import quadrature_box_integral
from ebpf.gaussian import Gaussian
from ebpf.trigger import Event, NoEvent

UNIT = LinearGaussianModel.scalar(a=1.0, q=1.0, r=1.0)  # y = x + N(0, 1)
X0 = np.zeros((1, 1))
H95 = Box([-1.96], [1.96])


def test_event_is_measurement_density():
    m = BenchmarkModel()
    x = np.array([[-3.0], [0.5], [4.0]])
    got = log_likelihood(AnalyticLikelihood(m), Event([0.8]), x, 1)
    ref = stats.norm(x[:, 0] ** 2 / 20, np.sqrt(0.1)).logpdf(0.8)
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_full_support_no_event():
    meas = NoEvent(Box.full(1))
    assert log_likelihood(AnalyticLikelihood(UNIT), meas, X0, 1)[0] == 0.0
    mc = MonteCarloLikelihood(UNIT, M=7)
    assert mc.count_inside(meas.box, X0, 1, np.random.default_rng(0))[0] == 7
    assert log_likelihood(mc, meas, X0, 1, np.random.default_rng(0))[0] == 0.0


def test_analytic_95_box():
    got = log_likelihood(AnalyticLikelihood(UNIT), NoEvent(H95), X0, 1)[0]
    assert got == pytest.approx(np.log(0.95), abs=1e-3)


def test_analytic_matches_quadrature():
    m = BenchmarkModel()
    x = np.array([[2.0], [-5.0], [7.0]])
    h = Box([0.1], [1.9])
    got = np.exp(log_likelihood(AnalyticLikelihood(m), NoEvent(h), x, 1))
    ref = [quadrature_box_integral(Gaussian([xi**2 / 20], [[0.1]]), h) for xi in x[:, 0]]
    np.testing.assert_allclose(got, ref, rtol=1e-9)


def test_mixture_close_to_analytic():
    a = log_likelihood(AnalyticLikelihood(UNIT), NoEvent(H95), X0, 1)[0]
    b = log_likelihood(MixtureLikelihood(UNIT, D=3), NoEvent(H95), X0, 1)[0]
    assert abs(a - b) <= 0.1


def test_mixture_error_non_increasing_in_D():
    m = BenchmarkModel()
    h = Box([-2.5], [2.5])
    x = np.linspace(-12, 12, 97)[:, None]
    exact = log_likelihood(AnalyticLikelihood(m), NoEvent(h), x, 1)
    errs = [np.max(np.abs(log_likelihood(MixtureLikelihood(m, D=D), NoEvent(h), x, 1) - exact))
            for D in (1, 3, 9, 27)]
    assert all(b <= a for a, b in zip(errs, errs[1:])), errs


def test_analytic_rejects_correlated_noise():
    m = LinearGaussianModel(np.eye(2), np.eye(2), np.eye(2), [[1.0, 0.5], [0.5, 1.0]], [0, 0], np.eye(2))
    with pytest.raises(NonDiagonalCovariance):
        log_likelihood(AnalyticLikelihood(m), NoEvent(Box([-1, -1], [1, 1])), np.zeros((1, 2)), 1)


def test_mc_zero_count_is_rejection():
    far = Box([100.0], [101.0])
    ll = log_likelihood(MonteCarloLikelihood(UNIT, 1), NoEvent(far), np.zeros((5, 1)), 1,
                        np.random.default_rng(1))
    assert np.all(ll == -np.inf)


def test_mc_is_unbiased():
    rng = np.random.default_rng(8)
    mc = MonteCarloLikelihood(UNIT, M=1)
    x = np.zeros((10_000, 1))  # 10^4 independent single-draw evaluations
    vals = np.exp(log_likelihood(mc, NoEvent(H95), x, 1, rng))
    p = np.exp(log_likelihood(AnalyticLikelihood(UNIT), NoEvent(H95), X0, 1)[0])
    assert abs(vals.mean() - p) <= 3 * np.sqrt(p * (1 - p) / x.shape[0])


def test_mc_needs_rng():
    with pytest.raises(ValueError):
        log_likelihood(MonteCarloLikelihood(UNIT), NoEvent(H95), X0, 1)


def test_complement_examples():
    ev = AnalyticLikelihood(UNIT)
    assert log_complement(ev, Box.full(1), X0, 1)[0] == -np.inf
    assert log_complement(ev, Box([0.0], [0.0]), X0, 1)[0] == 0.0
    assert log_complement(ev, H95, X0, 1)[0] == pytest.approx(np.log(0.05), rel=2e-2)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 10))
def test_complement_and_likelihood_sum_to_one(x, c, w):
    ev = AnalyticLikelihood(UNIT)
    h = Box([c - w], [c + w])
    xs = np.array([[x]])
    total = np.exp(log_likelihood(ev, NoEvent(h), xs, 1)) + np.exp(log_complement(ev, h, xs, 1))
    assert abs(total[0] - 1.0) <= 1e-12


@given(st.floats(-10, 10), st.floats(0, 5), st.floats(0, 5))
def test_enlarging_box_never_lowers_likelihood(x, w, extra):
    ev = AnalyticLikelihood(BenchmarkModel())
    xs = np.array([[x]])
    small = log_likelihood(ev, NoEvent(Box([1.0 - w], [1.0 + w])), xs, 1)
    big = log_likelihood(ev, NoEvent(Box([1.0 - w - extra], [1.0 + w + extra])), xs, 1)
    assert big[0] >= small[0] - 1e-12


def test_make_evaluator():
    m = BenchmarkModel()
    assert make_evaluator("analytic", m).label() == "analytic"
    assert make_evaluator("mixture", m, D=5).label() == "mixture(D=5)"
    assert make_evaluator("mc", m, M=3).label() == "mc(M=3)"
    with pytest.raises(ValueError):
        make_evaluator("nope", m)
    with pytest.raises(ValueError):
        MonteCarloLikelihood(m, M=0)
    with pytest.raises(ValueError):
        MixtureLikelihood(m, D=0)


def test_unknown_measurement_type():
    with pytest.raises(TypeError):
        log_likelihood(AnalyticLikelihood(UNIT), object(), X0, 1)
