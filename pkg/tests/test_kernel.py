import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from wigtraj.core import BarrierSpec, force, potential
from wigtraj.errors import ZeroRate
from wigtraj.kernel import (FAR_FIELD_RATE, build_rate_table, delta_prime_pair, draw_jumps, jump_rate, max_force,
                            omega_smooth, rate_exact, sample_jump)

WIDE = BarrierSpec(1.0, 0.0, 5.0)
NARROW = BarrierSpec(1.0, 0.0, 1.0)


def omega_by_quadrature(s, q, barrier):
    """(2/pi) * int V(q - y) sin(2 s y) dy, the defining integral, by QUADPACK's oscillatory rule."""
    half = 12 * barrier.sigma
    c = q - barrier.d
    val, _ = integrate.quad(lambda y: potential(q - y, barrier), c - half, c + half, weight="sin", wvar=2 * s,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2.0 / math.pi * val


def test_omega_examples():
    assert omega_smooth(0.0, 3.0, WIDE) == 0.0
    assert omega_smooth(0.7, 0.0, WIDE) == 0.0
    expected = 10 / math.sqrt(math.pi) * math.exp(-1) * math.sin(1.0)
    assert omega_smooth(0.2, 2.5, WIDE) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1.74650, abs=1e-5)
    assert omega_by_quadrature(0.2, 2.5, WIDE) == pytest.approx(expected, rel=1e-8)


def test_closed_form_matches_quadrature_on_grid():
    b = BarrierSpec(1.0, 0.5, 5.0)
    s_vals = np.linspace(-0.6, 0.6, 50)
    q_vals = np.linspace(-25, 25, 50)
    worst = 0.0
    for s in s_vals:
        for q in q_vals:
            ref = omega_by_quadrature(s, q, b)
            got = omega_smooth(s, q, b)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-3))
    assert worst < 1e-8


@given(st.floats(-3, 3), st.floats(-30, 30))
def test_omega_odd_in_s(s, q):
    assert omega_smooth(-s, q, WIDE) == -omega_smooth(s, q, WIDE)


@pytest.mark.parametrize("q", [0.5, 2.5, 5.0, 9.0, -7.0])
def test_moments_of_kernel(q):
    zeroth, _ = integrate.quad(lambda s: omega_smooth(s, q, WIDE), -3, 3, limit=400, epsabs=1e-13)
    first, _ = integrate.quad(lambda s: s * omega_smooth(s, q, WIDE), -3, 3, limit=400, epsabs=1e-13)
    assert abs(zeroth) < 1e-12
    assert first == pytest.approx(force(q, WIDE), rel=1e-6, abs=1e-12)


def abs_mass_quad(q, barrier):
    """int |omega| ds by adaptive quadrature with breakpoints at the sine zeros."""
    x = q - barrier.d
    if x == 0:
        return 0.0
    s_max = 7.0 / barrier.sigma
    period = math.pi / (2 * abs(x))
    pts = np.arange(period, s_max, period)[:500]
    val, _ = integrate.quad(lambda s: abs(omega_smooth(s, q, barrier)), 0, s_max, points=pts if pts.size else None,
                            limit=2000, epsabs=1e-13, epsrel=1e-11)
    return 2 * val


@pytest.mark.parametrize("q", [0.3, 1.0, 2.5, 5.0, 12.0, 30.0])
def test_rate_exact_matches_adaptive_quadrature(q):
    assert rate_exact(q, WIDE) == pytest.approx(abs_mass_quad(q, WIDE), rel=1e-9)


def test_rate_table_properties():
    table = build_rate_table(WIDE)
    assert table(0.0) == 0.0
    assert table(7.3) == pytest.approx(table(-7.3), rel=1e-14)
    nodes = table.q_grid[::97]
    assert np.allclose(table(nodes), rate_exact(nodes, WIDE), rtol=1e-12)
    mid = 0.5 * (table.q_grid[:-1] + table.q_grid[1:])[::13]
    assert np.allclose(table(mid), rate_exact(mid, WIDE), rtol=1e-4)
    right = table.nu_values[table.q_grid >= 0]
    assert np.all(np.diff(right) >= -1e-12)
    assert jump_rate(3.0, WIDE, table) == pytest.approx(rate_exact(3.0, WIDE), rel=1e-4)


def test_rate_saturates_instead_of_decaying():
    """Away from the barrier |omega| keeps a fixed Gaussian envelope, so nu tends to 4 v0 / pi."""
    assert rate_exact(20 * 5.0, WIDE) == pytest.approx(FAR_FIELD_RATE, rel=1e-6)
    assert rate_exact(4 * 5.0, WIDE) == pytest.approx(FAR_FIELD_RATE, rel=1e-3)
    table = build_rate_table(WIDE, halfwidth=12.0)
    assert table(13 * 5.0) == 0.0  # outside the jump window
    assert table.nu_max == pytest.approx(FAR_FIELD_RATE, rel=1e-6)


def test_sample_jump_zero_rate():
    with pytest.raises(ZeroRate):
        sample_jump(0.0, WIDE, np.random.default_rng(0))
    with pytest.raises(ZeroRate):
        sample_jump(1.0, BarrierSpec(0.0, 0.0, 5.0), np.random.default_rng(0))


def test_sample_jump_signs(rng):
    for _ in range(500):
        prop = sample_jump(2.5, WIDE, rng)
        assert prop.weight_factor == math.copysign(1.0, math.sin(2 * prop.s * 2.5))


def test_jump_distribution_matches_quadrature_cdf():
    q = 2.5
    n = 1_000_000
    s, sg = draw_jumps(q, WIDE, n, seed=5)
    assert np.all(sg == np.sign(np.sin(2 * s * q)))
    grid = np.linspace(-1.6, 1.6, 4001)
    dens = np.abs(omega_smooth(grid, q, WIDE))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    cdf /= cdf[-1]
    ks = stats.kstest(s, lambda x: np.interp(x, grid, cdf)).statistic
    assert ks < 1.63 / math.sqrt(n)


def test_python_and_engine_samplers_agree(rng):
    a = np.array([sample_jump(4.0, WIDE, rng).s for _ in range(5000)])
    b, _ = draw_jumps(4.0, WIDE, 5000, seed=9)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_jump_mirror_symmetry():
    b = BarrierSpec(1.0, 2.0, 5.0)
    s1, _ = draw_jumps(2.0 + 3.0, b, 20_000, seed=1)
    s2, _ = draw_jumps(2.0 - 3.0, b, 20_000, seed=2)
    assert stats.ks_2samp(s1, -s2).pvalue > 1e-3


def test_delta_prime_pair_examples():
    a, b = delta_prime_pair(0.0, 1e-3, WIDE)
    assert a.weight_factor == 0.0 and b.weight_factor == 0.0
    a, b = delta_prime_pair(3.0, 1e-3, WIDE)
    am, bm = delta_prime_pair(-3.0, 1e-3, WIDE)
    assert a.weight_factor == -am.weight_factor
    assert (a.s, b.s) == (1e-3, -1e-3)
    with pytest.raises(ValueError):
        delta_prime_pair(3.0, 0.0, WIDE)


def test_delta_prime_pair_action_converges():
    """Applied to a smooth momentum density the pair reproduces F G'(p), with O(eps^2) error."""
    q = 3.0
    f = force(q, WIDE)
    p = 0.3

    def g(x):
        return np.exp(-((x - 1.0) ** 2) / 0.5)

    def g_prime(x):
        return -2 * (x - 1.0) / 0.5 * g(x)

    errors = []
    for eps in (4e-3, 2e-3, 1e-3):
        pair = delta_prime_pair(q, eps, WIDE)
        action = sum(j.weight_factor * g(p - j.s) for j in pair)
        errors.append(abs(action - f * g_prime(p)))
    assert errors[-1] < 1e-6
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.05)


def test_max_force():
    q = np.linspace(-20, 20, 200_001)
    assert max_force(WIDE) == pytest.approx(np.max(np.abs(force(q, WIDE))), rel=1e-8)
