import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from wigtraj.core import BarrierSpec, PacketSpec, ScenarioConfig
from wigtraj.errors import BackflowDominant, EmptyRegion, ZeroMass
from wigtraj.observables import (TimeSeriesObservable, backflow_fraction, bandwidth_change, count_lobes, density_at, flux_at,
                                 jackknife, mean_arrival_time, mean_presence_time, moments, momentum_distribution,
                                 presence_distribution, tail_fraction, time_delay, transit_time,
                                 transmission_probability)
from wigtraj.records import collect_run
from wigtraj.trajectories import run_ensemble

FREE = BarrierSpec(0.0, 0.0, 1.0)
H = 0.5


def free_config(**kw):
    base = dict(packet=PacketSpec(0.0, 1.0, 2.0), barrier=FREE, t_final=60.0, n_snapshots=601,
                ensemble_size=50_000, detectors=(20.0,), seed=5)
    base.update(kw)
    return ScenarioConfig(**base)


def free_density(x, t, packet, h=H):
    """Smoothed density of a free Gaussian packet: q_t is Gaussian with variance sx^2 + dk^2 t^2."""
    var = packet.sigma_x**2 + (packet.delta_k * t) ** 2 + h * h
    return np.exp(-0.5 * (x - packet.x0 - packet.k0 * t) ** 2 / var) / np.sqrt(2 * np.pi * var)


def free_flux(x, t, packet, h=H):
    """E[p K_h(q_t - x)] using E[p | q_t] linear in q_t with slope dk^2 t / var(q_t)."""
    v = packet.sigma_x**2 + (packet.delta_k * t) ** 2
    m = packet.x0 + packet.k0 * t
    slope = packet.delta_k**2 * t / v
    # the product of N(q; m, v) and K_h(q - x) is Gaussian in q with this mean
    q_mean = (m * h * h + x * v) / (v + h * h)
    return (packet.k0 + slope * (q_mean - m)) * free_density(x, t, packet, h)


def series(t, v, e=None):
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    return TimeSeriesObservable(t, v, np.zeros_like(v) if e is None else e)


# ---------------------------------------------------------------- snapshot estimators


def test_initial_density_and_flux():
    packet = PacketSpec.from_delta_k(-92.5, 1.0, 0.04)
    cfg = ScenarioConfig(packet=packet, barrier=BarrierSpec(1.0, 0.0, 5.0), t_final=1.0, ensemble_size=200_000)
    snap = run_ensemble(cfg, snapshot_indices=[0])[0]
    rho, e = density_at(-92.5, snap, H)
    exact = 1.0 / math.sqrt(2 * math.pi * (12.5**2 + H * H))
    assert abs(exact - 0.031890) < 1e-6
    assert abs(rho - exact) < 3 * e
    j, ej = flux_at(-92.5, snap, H)
    assert abs(j - 1.0 * exact) < 3 * ej
    with pytest.raises(ValueError):
        density_at(0.0, snap, 0.0)


def test_free_moments_follow_spreading_law():
    cfg = free_config(n_snapshots=7, ensemble_size=100_000)
    snaps = run_ensemble(cfg)
    pk = cfg.packet
    for snap in snaps:
        m = moments(snap)
        assert abs(m.mean_q - pk.k0 * snap.time) < 3.5 * m.std_errors[0]
        law = pk.sigma_x**2 + (pk.delta_k * snap.time) ** 2
        assert abs(m.var_q - law) < 3.5 * m.std_errors[2]
        assert abs(m.var_p - pk.delta_k**2) < 3.5 * m.std_errors[3]


def test_free_transmission_tends_to_one():
    cfg = free_config(packet=PacketSpec(-20.0, 1.0, 2.0), t_final=60.0, n_snapshots=2)
    snap = run_ensemble(cfg, snapshot_indices=[-1])[0]
    v, e = transmission_probability(snap, 0.0)
    pk = cfg.packet
    exact = stats.norm.cdf((pk.x0 + 60.0) / math.hypot(pk.sigma_x, 60.0 * pk.delta_k))
    assert abs(v - exact) < 3 * e
    late = run_ensemble(dataclasses.replace(cfg, t_final=600.0), snapshot_indices=[-1])[0]
    assert transmission_probability(late, 0.0)[0] > 0.999


def test_classical_wide_barrier_transmits_nothing():
    cfg = ScenarioConfig(packet=PacketSpec.from_delta_k(-92.5, 1.0, 0.04), barrier=BarrierSpec(1.0, 0.0, 5.0),
                         t_final=200.0, n_snapshots=2, mode="classical", ensemble_size=20_000)
    snap = run_ensemble(cfg, snapshot_indices=[-1])[0]
    assert transmission_probability(snap, 0.0)[0] == 0.0


def test_momentum_histogram_at_start():
    pk = PacketSpec.from_delta_k(-43.0, 1.0, 0.125)
    cfg = ScenarioConfig(packet=pk, barrier=FREE, t_final=1.0, ensemble_size=100_000)
    snap = run_ensemble(cfg, snapshot_indices=[0])[0]
    hist = momentum_distribution(snap, bins=60, k0=1.0)
    expected = np.diff(stats.norm.cdf(hist.bin_edges, 1.0, 0.125))
    z = (hist.masses - expected) / np.where(hist.std_errors > 0, hist.std_errors, 1.0)
    assert np.mean(np.abs(z) < 3) > 0.95
    assert abs(hist.mean - 1.0) < 3 * hist.mean_err
    assert abs(hist.variance - 0.125**2) < 3 * hist.variance_err
    assert hist.total_weight == pytest.approx(1.0)
    with pytest.raises(EmptyRegion):
        momentum_distribution(snap, region="transmitted", x_b=0.0)


# ---------------------------------------------------------------- free packet time series


@pytest.fixture(scope="module")
def free_record():
    return collect_run(free_config())


def test_free_detector_series_match_analytic(free_record):
    pk = free_record.config.packet
    t = free_record.times
    for obs, exact in ((free_record.density[0], free_density(20.0, t, pk)),
                       (free_record.flux[0], free_flux(20.0, t, pk))):
        tol = np.maximum(4 * obs.std_errors, 0.02 * exact.max())
        assert np.all(np.abs(obs.values - exact) <= tol)


def test_free_flux_integrates_to_one(free_record):
    v, e = free_record.flux[0].integral()
    # the flux integral is the probability that crossed by t_final, Phi(L-shift / spread) at t = 60
    pk = free_record.config.packet
    exact = integrate.quad(lambda t: free_flux(20.0, t, pk), 0, 60, limit=200)[0]
    assert abs(v - exact) < 3 * e + 1e-4
    assert 0.99 < exact < 1.0


def test_free_mean_times(free_record):
    pk = free_record.config.packet
    for obs, fn, getter in ((free_record.density[0], free_density, mean_presence_time),
                            (free_record.flux[0], free_flux, mean_arrival_time)):
        num = integrate.quad(lambda t: t * fn(20.0, t, pk), 0, 60, limit=200)[0]
        den = integrate.quad(lambda t: fn(20.0, t, pk), 0, 60, limit=200)[0]
        mean, err = getter(20.0, obs)
        assert abs(mean - num / den) < 4 * err + 1e-3
    # a free packet arrives later than L/k0 on average, since slow components dominate 1/p
    assert mean_arrival_time(20.0, free_record.flux[0])[0] > 20.0


def test_delay_of_run_against_itself_is_zero(free_record):
    f = free_record.flux[0]
    assert time_delay(20.0, f, f)[0] == 0.0


def test_transit_time_same_detector_is_zero(free_record):
    d = free_record.density[0]
    value, err = transit_time(20.0, 20.0, d, d)
    assert value == 0.0 and err == 0.0


# ---------------------------------------------------------------- time-series algebra


def test_presence_of_constant_series_is_uniform():
    t = np.linspace(0, 10, 101)
    dist = presence_distribution(0.0, series(t, np.full(t.size, 3.0)))
    np.testing.assert_allclose(dist.values, 0.1, rtol=1e-12)
    assert mean_presence_time(0.0, series(t, np.full(t.size, 3.0)))[0] == pytest.approx(5.0, abs=1e-12)


@given(st.floats(2.0, 8.0), st.floats(0.3, 1.5), st.floats(0.1, 10.0))
def test_normalization_and_symmetric_lobe(centre, width, scale):
    t = np.linspace(0, 10, 2001)
    v = scale * np.exp(-0.5 * ((t - centre) / width) ** 2)
    dist = presence_distribution(0.0, series(t, v))
    w = np.full(t.size, t[1] - t[0])
    w[[0, -1]] *= 0.5
    assert abs(np.dot(w, dist.values) - 1.0) < 1e-12
    trunc_free = min(centre, 10 - centre) > 6 * width
    if trunc_free:
        assert mean_presence_time(0.0, series(t, v))[0] == pytest.approx(centre, abs=1e-6)


@given(st.floats(-5.0, 5.0))
def test_mean_time_shifts_with_grid(shift):
    t = np.linspace(0, 10, 201)
    v = np.exp(-((t - 4.0) ** 2)) + 0.3 * np.exp(-((t - 6.0) ** 2))
    a = mean_presence_time(0.0, series(t, v))[0]
    b = mean_presence_time(0.0, series(t + shift, v))[0]
    assert b - a == pytest.approx(shift, abs=1e-9)


def test_error_propagation_without_blocks():
    t = np.linspace(0, 10, 201)
    v = np.exp(-((t - 5.0) ** 2))
    e = np.full(t.size, 1e-3)
    mean, err = mean_presence_time(0.0, series(t, v, e))
    rng = np.random.default_rng(0)
    draws = [mean_presence_time(0.0, series(t, v + rng.normal(0, 1e-3, t.size)))[0] for _ in range(400)]
    assert err == pytest.approx(np.std(draws), rel=0.15)


def test_zero_mass_refused():
    t = np.linspace(0, 10, 101)
    with pytest.raises(ZeroMass):
        mean_presence_time(0.0, series(t, np.zeros(t.size)))
    with pytest.raises(ZeroMass):
        mean_presence_time(0.0, series(t, np.full(t.size, 1e-6), np.full(t.size, 1e-3)))


def test_backflow_refused():
    t = np.linspace(0, 10, 201)
    v = np.exp(-((t - 3.0) ** 2)) - 0.5 * np.exp(-((t - 7.0) ** 2))
    assert backflow_fraction(series(t, v)) == pytest.approx(1 / 3, rel=1e-2)
    with pytest.raises(BackflowDominant):
        mean_arrival_time(0.0, series(t, v))
    assert mean_arrival_time(0.0, series(t, v), threshold=0.5)[0] < 3.0


def test_nonuniform_grid_rejected():
    with pytest.raises(ValueError):
        series([0.0, 1.0, 3.0], [1.0, 1.0, 1.0])


def test_count_lobes():
    t = np.linspace(0, 10, 1001)
    one = np.exp(-((t - 5) ** 2))
    two = one + np.exp(-((t - 8.5) ** 2) / 0.1)
    assert count_lobes(series(t, one)) == 1
    assert count_lobes(series(t, two)) == 2
    rng = np.random.default_rng(1)
    noisy = one + rng.normal(0, 1e-3, t.size)
    assert count_lobes(series(t, noisy)) == 1
    assert count_lobes(series(t, np.zeros(t.size))) == 0


def test_tail_fraction():
    t = np.linspace(0, 10, 1001)
    assert tail_fraction(series(t, np.exp(-((t - 3) ** 2)))) < 1e-12
    assert tail_fraction(series(t, np.ones(t.size))) == pytest.approx(0.05, abs=1e-3)


@given(st.integers(2, 50), st.integers(0, 10_000))
def test_jackknife_of_a_mean_is_the_block_standard_error(n_blocks, seed):
    x = np.random.default_rng(seed).normal(size=n_blocks)
    sums = np.column_stack([x, np.ones(n_blocks)])
    est, err = jackknife(lambda s: s[0] / s[1], sums)
    assert est == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / math.sqrt(n_blocks), rel=1e-9)


def test_bandwidth_halving_diagnostic(free_record):
    # a free packet of width >= 2 is smooth on the scale h = 0.5
    assert free_record.diagnostics["bandwidth_change"] < 0.02
    assert free_record.diagnostics["under_resolved"] == 0.0
    t = np.linspace(-1, 1, 11)
    assert bandwidth_change(np.exp(-t**2), np.exp(-t**2)) == 0.0
    assert bandwidth_change(np.ones(3), np.array([1.0, 1.1, 1.0])) == pytest.approx(0.1)


def test_oracle_flags_a_sharp_detector_signal():
    from wigtraj.oracle import record_from_oracle

    sharp = ScenarioConfig(packet=PacketSpec(-5.0, 1.0, 0.3), barrier=FREE, t_final=1.0, n_snapshots=11,
                           detectors=(-5.0,))
    rec = record_from_oracle(sharp, domain=(-40.0, 40.0), n_points=2048, dt=0.01)
    assert rec.diagnostics["under_resolved"] == 1.0
