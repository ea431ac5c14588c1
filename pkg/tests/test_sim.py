import dataclasses

import numpy as np
import pytest

from ebpf.filter import ParticleSet, step
from ebpf.likelihood import AnalyticLikelihood
from ebpf.model import BenchmarkModel, simulate
from ebpf.rng import Streams
from ebpf.sim import (OpenLoop, PeriodicDownlink, Precompute, SimConfig, expected_particle_count,
                      precompute_from_prior, run)
from ebpf.trigger import Event, TriggerRule


def first_forced(records):
    return next((r.k for r in records if r.forced), len(records) + 1)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(T=0)
    with pytest.raises(ValueError):
        SimConfig(N=1)
    with pytest.raises(ValueError):
        SimConfig(protocol=OpenLoop())  # needs a send-on-delta rule
    with pytest.raises(ValueError):
        Precompute(c=1.5)
    with pytest.raises(ValueError):
        Precompute(alpha=0.9, n_hat=3)
    SimConfig(trigger=TriggerRule("SOD", 1.0), protocol=OpenLoop())


def test_run_is_deterministic():
    cfg = SimConfig(T=150, seed=4, protocol=Precompute(c=0.1))
    a, sa = run(cfg)
    b, sb = run(cfg)
    np.testing.assert_equal(dataclasses.astuple(sa), dataclasses.astuple(sb))  # nan-aware
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.posterior_mean, y.posterior_mean)


def test_zero_delta_always_triggers_and_matches_plain_filter():
    cfg = SimConfig(trigger=TriggerRule("IBT", 0.0), T=100, N=50, seed=2)
    recs, summary = run(cfg)
    assert summary.C_r == 1.0
    model = BenchmarkModel()
    streams = Streams(cfg.seed)
    _, ys = simulate(model, cfg.T, cfg.seed)
    ps = ParticleSet.from_prior(model, cfg.N, streams.generator("init"))
    ev = AnalyticLikelihood(model)
    for k, rec in enumerate(recs, start=1):
        ps = step("BPF", ps, Event(ys[k - 1]), model, ev, streams.generator("filter", k))
        np.testing.assert_array_equal(rec.posterior_mean, ps.mean())


def test_record_invariants():
    recs, s = run(SimConfig(T=300, seed=1, protocol=Precompute(c=0.25, n_hat_max=3)))
    assert recs[0].gamma == 1 and not recs[0].forced
    assert all(r.gamma == 1 for r in recs if r.forced)
    assert all(r.box is not None for r in recs)
    assert s.C_r * s.T == sum(r.gamma for r in recs)
    assert any(r.forced for r in recs)


def test_periodic_never_forces():
    recs, s = run(SimConfig(T=300, seed=1))
    assert s.forced_fraction == 0.0
    assert all(r.box is not None for r in recs)


def test_open_loop_sod_centers_on_last_sent():
    recs, _ = run(SimConfig(trigger=TriggerRule("SOD", 1.0), T=200, seed=0, protocol=OpenLoop()))
    last = None
    for r in recs:
        if r.k > 1:
            np.testing.assert_allclose(r.box.center, last)
        if r.gamma:
            last = r.measurement


def test_certain_trigger_gives_unit_horizon():
    recs, s = run(SimConfig(trigger=TriggerRule("IBT", 0.0), T=60, seed=3, protocol=Precompute(c=0.1)))
    assert all(r.n_hat == 1 for r in recs)
    assert s.forced_fraction == 0.0 and s.C_r == 1.0


@pytest.mark.parametrize("kind", ["BPF", "APF_FA"])
def test_precompute_matches_periodic_until_forced(kind):
    """Between natural events both protocols hold bit-identical particle sets."""
    for seed in range(10):
        base = dict(T=120, N=60, seed=seed, filter=kind)
        a, _ = run(SimConfig(protocol=Precompute(c=0.1), **base), keep_particles=True)
        b, _ = run(SimConfig(protocol=PeriodicDownlink(), **base), keep_particles=True)
        stop = first_forced(a)
        for ra, rb in zip(a[: stop - 1], b[: stop - 1]):
            assert ra.gamma == rb.gamma
            np.testing.assert_array_equal(ra.particles.particles, rb.particles.particles)
            np.testing.assert_array_equal(ra.particles.log_weights, rb.particles.log_weights)


def test_communication_rate_near_quarter_at_delta_2_5():
    rates = [run(SimConfig(T=1500, seed=s))[1].C_r for s in range(3)]
    assert 0.2 <= np.mean(rates) <= 0.3


def test_expected_particle_count_examples():
    assert expected_particle_count(np.zeros(9), 100) == pytest.approx(100.0)
    assert expected_particle_count(np.ones(9), 100) == pytest.approx(10.0)


def test_expected_particle_count_tracks_accept_reject():
    _, s = run(SimConfig(evaluator="mc", T=3000, seed=5))
    assert abs(s.mean_accepted - s.expected_accepted) <= 0.03 * s.expected_accepted


@pytest.mark.slow
def test_horizon_cap_trend():
    means = []
    for cap in (2, 5, 10, 50):
        m = [run(SimConfig(T=400, seed=s, protocol=Precompute(c=0.1, n_hat_max=cap)))[1].mean_inter_event
             for s in range(5)]
        means.append(np.mean(m))
    assert all(b >= a - 0.05 for a, b in zip(means, means[1:])), means


@pytest.mark.slow
def test_forced_fraction_small_for_small_c():
    c = 0.05
    forced = events = 0
    per_seed = []
    for s in range(100):
        recs, summary = run(SimConfig(T=150, seed=s, protocol=Precompute(c=c)))
        f = sum(r.forced for r in recs)
        forced += f
        events += summary.events
        per_seed.append(summary.forced_fraction)
    frac = forced / events
    assert frac <= c + 3 * np.std(per_seed) / np.sqrt(len(per_seed))


def test_quantile_and_fixed_horizons():
    _, s = run(SimConfig(T=200, seed=0, protocol=Precompute(n_hat=3)))
    assert s.mean_n_hat == 3.0
    recs, _ = run(SimConfig(T=200, seed=0, protocol=Precompute(c=0.1, alpha=0.5)))
    assert all(r.n_hat >= 1 for r in recs)


def test_precompute_from_prior_shapes():
    out = precompute_from_prior(SimConfig(N=40, seed=1), 12)
    assert len(out.boxes) == 12 and out.per_step.shape == (12,)
    np.testing.assert_allclose(out.first_trigger[0], out.per_step[0])
    assert out.first_trigger.sum() <= 1.0 + 1e-12
