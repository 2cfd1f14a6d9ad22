"""Classical characteristics: velocity-Verlet motion in the Gaussian barrier.

The jitted kernels here are shared with the trajectory engine so that the
classical-mode ensemble reproduces :func:`propagate` bit for bit.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba as nb

from .core import BarrierSpec


class PhaseSpacePoint(NamedTuple):
    q: float
    p: float


@nb.njit(cache=True, inline="always")
def force_jit(q, v0, d, sigma):
    x = q - d
    s2 = sigma * sigma
    return 2.0 * v0 * x / s2 * math.exp(-(x * x) / s2)


@nb.njit(cache=True, inline="always")
def verlet_step(q, p, h, v0, d, sigma):
    p_half = p + 0.5 * h * force_jit(q, v0, d, sigma)
    q_new = q + h * p_half
    p_new = p_half + 0.5 * h * force_jit(q_new, v0, d, sigma)
    return q_new, p_new


@nb.njit(cache=True)
def propagate_jit(q, p, duration, dt, v0, d, sigma):
    """floor(|duration|/dt) full steps plus one fractional step.

    A negative duration runs the same substep sequence backwards in reverse
    order (fractional step first), which makes forward-then-backward an exact
    inverse up to round-off.
    """
    if duration == 0.0:
        return q, p
    if v0 == 0.0:
        return q + p * duration, p
    span = abs(duration)
    n_full = int(math.floor(span / dt))
    rest = span - n_full * dt
    if rest < 1e-12 * dt:
        rest = 0.0
    if duration > 0:
        for _ in range(n_full):
            q, p = verlet_step(q, p, dt, v0, d, sigma)
        if rest > 0.0:
            q, p = verlet_step(q, p, rest, v0, d, sigma)
    else:
        if rest > 0.0:
            q, p = verlet_step(q, p, -rest, v0, d, sigma)
        for _ in range(n_full):
            q, p = verlet_step(q, p, -dt, v0, d, sigma)
    return q, p


def step(point: PhaseSpacePoint, dt: float, barrier: BarrierSpec) -> PhaseSpacePoint:
    """One velocity-Verlet step (negative dt steps backwards in time)."""
    q, p = verlet_step(float(point[0]), float(point[1]), float(dt), barrier.v0, barrier.d, barrier.sigma)
    return PhaseSpacePoint(q, p)


def propagate(point: PhaseSpacePoint, duration: float, dt: float, barrier: BarrierSpec) -> PhaseSpacePoint:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    q, p = propagate_jit(float(point[0]), float(point[1]), float(duration), float(dt),
                         barrier.v0, barrier.d, barrier.sigma)
    return PhaseSpacePoint(q, p)


def energy(point: PhaseSpacePoint, barrier: BarrierSpec) -> float:
    q, p = point
    x = q - barrier.d
    return 0.5 * p * p + barrier.v0 * math.exp(-(x * x) / barrier.sigma**2)
