import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from wigtraj.core import BarrierSpec, force
from wigtraj.dynamics import PhaseSpacePoint, energy, propagate, step

WIDE = BarrierSpec(1.0, 0.0, 5.0)
FREE = BarrierSpec(0.0, 0.0, 5.0)


@given(st.floats(-100, 100), st.floats(-3, 3), st.floats(1e-4, 1.0))
def test_free_step_is_exact(q, p, dt):
    out = step(PhaseSpacePoint(q, p), dt, FREE)
    assert out.q == q + p * dt
    assert out.p == p


@given(st.floats(-20, 20), st.floats(-2, 2), st.floats(1e-3, 0.2))
def test_step_reversible(q, p, dt):
    fwd = step(PhaseSpacePoint(q, p), dt, WIDE)
    back = step(fwd, -dt, WIDE)
    assert back.q == pytest.approx(q, abs=1e-13 * max(1.0, abs(q)))
    assert back.p == pytest.approx(p, abs=1e-13)


def test_propagate_identity_and_ballistic():
    pt = PhaseSpacePoint(-92.5, 1.0)
    assert propagate(pt, 0.0, 0.05, WIDE) == pt
    out = propagate(pt, 85.2, 0.05, FREE)
    assert out.q == pytest.approx(-92.5 + 85.2, abs=1e-12)
    with pytest.raises(ValueError):
        propagate(pt, 1.0, 0.0, WIDE)


def test_energy_drift_small():
    pt = PhaseSpacePoint(5.0, 1.0)
    e0 = energy(pt, WIDE)
    drift = 0.0
    for _ in range(10_000):
        pt = step(pt, 0.01, WIDE)
        drift = max(drift, abs(energy(pt, WIDE) - e0))
    assert drift < 1e-6


def test_energy_error_second_order():
    def max_error(dt):
        pt = PhaseSpacePoint(-20.0, 1.5)
        e0 = energy(pt, WIDE)
        worst = 0.0
        for _ in range(int(round(30.0 / dt))):
            pt = step(pt, dt, WIDE)
            worst = max(worst, abs(energy(pt, WIDE) - e0))
        return worst

    ratio = max_error(0.1) / max_error(0.05)
    assert 3.5 <= ratio <= 4.5


def test_position_converges_to_reference():
    """Verlet endpoints approach an adaptive high-order solution at second order."""
    q0, p0, t_end = -20.0, 1.2, 40.0

    def rhs(t, y):
        return [y[1], force(y[0], WIDE)]

    ref = solve_ivp(rhs, (0, t_end), [q0, p0], method="DOP853", rtol=1e-12, atol=1e-12).y[:, -1]
    errs = [abs(propagate(PhaseSpacePoint(q0, p0), t_end, dt, WIDE).q - ref[0]) for dt in (0.1, 0.05, 0.025)]
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_time_reversibility_of_propagate():
    pt = PhaseSpacePoint(-10.0, 1.2)
    duration = 37.3
    fwd = propagate(pt, duration, 0.05, WIDE)
    back = propagate(fwd, -duration, 0.05, WIDE)
    assert abs(back.q - pt.q) < 1e-10 * duration
    assert abs(back.p - pt.p) < 1e-10 * duration


def test_classical_turning_point():
    pt = PhaseSpacePoint(-10.0, 0.9)
    assert energy(pt, WIDE) < 1.0
    out = propagate(pt, 100.0, 0.05, WIDE)
    assert out.p < 0
    assert out.q < -10.0


def test_classical_transmission_matches_tail():
    """Only packet components with p^2/2 > V0 cross the barrier classically."""
    n = 20_000
    rng = np.random.default_rng(3)
    p = rng.normal(1.0, 0.4, n)
    crossed = 0
    for pi in p[:2000]:
        out = propagate(PhaseSpacePoint(-30.0, float(pi)), 300.0, 0.05, WIDE)
        crossed += out.q > 0
    expected = np.mean(p[:2000] > math.sqrt(2.0))
    assert crossed / 2000 == expected
