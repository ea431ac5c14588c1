import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebpf.errors import EmptyParticleSet
from ebpf.filter import ParticleSet
from ebpf.gaussian import Box
from ebpf.model import BenchmarkModel, LinearGaussianModel
from ebpf.oracle import kalman_filter
from ebpf.trigger import Event, NoEvent, TriggerKind, TriggerRule, build_set, decide, ibt_center

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_build_set_scalar():
    h = build_set(TriggerRule(TriggerKind.IBT, 2.5), [0.0])
    assert h == Box([-2.5], [2.5])


def test_build_set_weighted():
    h = build_set(TriggerRule("SOD", 1.0, weight=(1.0, 2.0)), [1.0, -1.0])
    np.testing.assert_allclose(h.lower, [0.0, -1.5])
    np.testing.assert_allclose(h.upper, [2.0, -0.5])


def test_build_set_huge_weight_collapses():
    h = build_set(TriggerRule("IBT", 1.0, weight=(1e12,)), [3.0])
    # each side sits within 1e-12 of the center, up to one ulp of rounding
    np.testing.assert_allclose(h.lower, [3.0], rtol=0, atol=1e-12 + 1e-15)
    np.testing.assert_allclose(h.upper, [3.0], rtol=0, atol=1e-12 + 1e-15)


def test_rule_validation():
    with pytest.raises(ValueError):
        TriggerRule("IBT", -1.0)
    with pytest.raises(ValueError):
        TriggerRule("IBT", 1.0, weight=(0.0,))
    with pytest.raises(ValueError):
        TriggerRule("XYZ", 1.0)
    with pytest.raises(ValueError):
        TriggerRule("IBT", 1.0, weight=(1.0, 1.0)).half_width(1)


def test_event_must_be_finite():
    with pytest.raises(ValueError):
        Event([np.nan])


def test_decide_boundary_center_and_outside():
    rule = TriggerRule("IBT", 2.0, weight=(4.0,))
    h = build_set(rule, [1.0])
    assert isinstance(decide(rule, [1.5], h), NoEvent)  # boundary: 1 + 2/4
    assert isinstance(decide(rule, [1.0], h), NoEvent)
    ev = decide(rule, [1.5 + 1e-9], h)
    assert isinstance(ev, Event) and ev.gamma == 1


@given(st.lists(finite, min_size=1, max_size=4), st.floats(0.0, 10.0))
def test_set_centered_on_y_contains_y(y, delta):
    rule = TriggerRule("SOD", delta)
    assert isinstance(decide(rule, y, build_set(rule, y)), NoEvent)


@given(st.lists(finite, min_size=1, max_size=3), st.floats(0.01, 10.0), st.floats(0.1, 10.0))
def test_scaling_delta_and_weight_together_is_invariant(center, delta, scale):
    w = tuple(np.linspace(0.5, 2.0, len(center)))
    a = build_set(TriggerRule("IBT", delta, weight=w), center)
    b = build_set(TriggerRule("IBT", delta * scale, weight=tuple(scale * np.array(w))), center)
    np.testing.assert_allclose(a.lower, b.lower, atol=1e-12, rtol=1e-12)
    np.testing.assert_allclose(a.upper, b.upper, atol=1e-12, rtol=1e-12)


@given(st.lists(finite, min_size=1, max_size=3), st.floats(0.01, 5.0))
def test_sod_does_not_retrigger_on_repeat(y, delta):
    rule = TriggerRule("SOD", delta)
    first = decide(rule, y, build_set(rule, np.array(y) + 10 * delta + 1.0))
    assert isinstance(first, Event)
    assert isinstance(decide(rule, y, build_set(rule, first.y)), NoEvent)


def test_ibt_center_single_particle():
    m = BenchmarkModel()
    ps = ParticleSet.uniform(np.array([[3.0]]))
    np.testing.assert_allclose(ibt_center(ps, m, 1), [9.0 / 20])


def test_ibt_center_hand_example():
    ps = ParticleSet.uniform(np.array([[-2.0], [2.0]]))
    np.testing.assert_allclose(ibt_center(ps, BenchmarkModel(), 1), [0.2])


def test_ibt_center_weighted():
    ps = ParticleSet(np.array([[0.0], [2.0]]), np.log([0.75, 0.25]))
    np.testing.assert_allclose(ibt_center(ps, BenchmarkModel(), 1), [0.25 * 0.2])


def test_ibt_center_matches_kalman_prediction():
    m = LinearGaussianModel.scalar(a=0.9, q=1.0, r=1.0, p0=1.0)
    kf = kalman_filter(m.A, m.C, m.Q, m.R, [0.0], [[1.0]], [[0.7]])
    pred_mean, pred_var = kf.pred_means[0, 0], kf.pred_covs[0, 0, 0]
    rng = np.random.default_rng(4)
    n = 100_000
    x = pred_mean + np.sqrt(pred_var) * rng.standard_normal((n, 1))
    c = ibt_center(ParticleSet.uniform(x), m, 1)[0]
    assert abs(c - pred_mean) <= 3 * np.sqrt(pred_var / n)


def test_ibt_center_empty():
    class Empty:
        N = 0

    with pytest.raises(EmptyParticleSet):
        ibt_center(Empty(), BenchmarkModel(), 1)
