"""Nonlocal momentum-transfer kernel of the Wigner equation for a Gaussian barrier.

For V(q) = v0 exp(-(q-d)^2/sigma^2) the smooth part of the kernel has the
closed form

    w(s, q) = (2 v0 sigma / sqrt(pi)) exp(-sigma^2 s^2) sin(2 s (q - d)),

odd in s, with zeroth moment 0 and first moment F(q). Its absolute mass
nu(q) = int |w| ds depends on q only through z = (q - d)/sigma and saturates
at 4 v0 / pi a couple of barrier widths away from the centre; it does *not*
decay, which is why jumps are confined to a finite window around the barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

from .core import BarrierSpec, force
from .errors import ZeroRate

FAR_FIELD_RATE = 4.0 / math.pi  # nu / v0 for |q - d| >> sigma

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_U_MAX = 6.5  # exp(-u^2) < 5e-19 beyond


class JumpProposal(NamedTuple):
    s: float
    weight_factor: float


def omega_smooth(s, q, barrier: BarrierSpec):
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    sig = barrier.sigma
    amp = 2.0 * barrier.v0 * sig / math.sqrt(math.pi)
    out = amp * np.exp(-(sig * s) ** 2) * np.sin(2.0 * s * (q - barrier.d))
    return float(out) if np.ndim(out) == 0 else out


def _abs_sin_gauss_integral(z: float) -> float:
    """(2/sqrt(pi)) * integral over R of |sin(2 u z)| exp(-u^2) du, lobe by lobe."""
    z = abs(z)
    if z == 0.0:
        return 0.0
    half_period = math.pi / (2.0 * z)
    n_lobes = int(math.ceil(_U_MAX / half_period))
    edges = np.minimum(np.arange(n_lobes + 1) * half_period, _U_MAX)
    a, b = edges[:-1], edges[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.abs(np.sin(2.0 * u * z)) * np.exp(-u * u)
    total = np.sum(half[:, None] * _GL_W[None, :] * vals)
    return 4.0 / math.sqrt(math.pi) * float(total)


def rate_exact(q, barrier: BarrierSpec):
    """nu(q) = int |w(s, q)| ds by Gauss-Legendre quadrature over the sine lobes."""
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    z = (q_arr - barrier.d) / barrier.sigma
    out = barrier.v0 * np.array([_abs_sin_gauss_integral(v) for v in z])
    return float(out[0]) if np.ndim(q) == 0 else out


@dataclass(frozen=True)
class RateTable:
    """Tabulated nu(q) on a uniform grid spanning d +- halfwidth*sigma (odd size, so d is a node).

    Outside the grid the rate is 0: the table span is the jump window.
    """

    q_grid: np.ndarray
    nu_values: np.ndarray

    @property
    def q_lo(self) -> float:
        return float(self.q_grid[0])

    @property
    def dq(self) -> float:
        return float(self.q_grid[1] - self.q_grid[0])

    @property
    def nu_max(self) -> float:
        return float(self.nu_values.max()) if self.nu_values.size else 0.0

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        out = np.interp(q, self.q_grid, self.nu_values, left=0.0, right=0.0)
        return float(out) if np.ndim(out) == 0 else out


def build_rate_table(barrier: BarrierSpec, halfwidth: float = 12.0, n_points: int = 2049) -> RateTable:
    q_grid = np.linspace(barrier.d - halfwidth * barrier.sigma, barrier.d + halfwidth * barrier.sigma, n_points)
    nu = rate_exact(q_grid, barrier)
    # exact evenness about d despite grid round-off
    nu = 0.5 * (nu + nu[::-1])
    return RateTable(q_grid=q_grid, nu_values=nu)


def jump_rate(q, barrier: BarrierSpec, table: RateTable | None = None):
    if table is None:
        table = build_rate_table(barrier)
    return table(q)


def sample_jump(q: float, barrier: BarrierSpec, rng: np.random.Generator) -> JumpProposal:
    """Draw s with density |w(s, q)| / nu(q); the weight factor is the sign of w.

    Exact rejection sampling: propose s from the Gaussian envelope
    exp(-sigma^2 s^2) and accept with probability |sin(2 s (q - d))|.
    """
    x = q - barrier.d
    if barrier.v0 == 0.0 or x == 0.0:
        raise ZeroRate(f"jump rate vanishes at q={q}")
    scale = 1.0 / (math.sqrt(2.0) * barrier.sigma)
    while True:
        s = rng.normal(0.0, scale)
        sn = math.sin(2.0 * s * x)
        if rng.random() < abs(sn):
            return JumpProposal(s, 1.0 if sn > 0 else -1.0)


def delta_prime_pair(q: float, epsilon: float, barrier: BarrierSpec) -> tuple[JumpProposal, JumpProposal]:
    """Central-difference regularization of the F(q) delta'(s) kernel term.

    Jumps s = +eps and s = -eps with weights -F/(2 eps) and +F/(2 eps).
    Acting on a momentum density G this gives
    F/(2 eps) [G(p + eps) - G(p - eps)] -> F dG/dp, the term that cancels the
    force on Newtonian characteristics.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    f = force(q, barrier)
    return JumpProposal(epsilon, -f / (2.0 * epsilon)), JumpProposal(-epsilon, f / (2.0 * epsilon))


def max_force(barrier: BarrierSpec) -> float:
    return math.sqrt(2.0) * barrier.v0 * math.exp(-0.5) / barrier.sigma


@nb.njit(cache=True)
def sample_jump_jit(x, sigma):
    """Numba twin of :func:`sample_jump` using the thread-local numpy stream."""
    scale = 1.0 / (math.sqrt(2.0) * sigma)
    while True:
        s = np.random.normal(0.0, scale)
        sn = math.sin(2.0 * s * x)
        if np.random.random() < abs(sn):
            return s, (1.0 if sn > 0 else -1.0)


@nb.njit(cache=True, inline="always")
def table_rate_jit(q, q_lo, dq, values):
    n = values.shape[0]
    u = (q - q_lo) / dq
    if u < 0.0 or u > n - 1:
        return 0.0
    i = int(u)
    if i >= n - 1:
        return values[n - 1]
    frac = u - i
    return values[i] * (1.0 - frac) + values[i + 1] * frac


@nb.njit(cache=True)
def _draw_jumps_jit(x, sigma, n, seed):
    np.random.seed(seed)
    s = np.empty(n)
    sg = np.empty(n)
    for i in range(n):
        s[i], sg[i] = sample_jump_jit(x, sigma)
    return s, sg


def draw_jumps(q: float, barrier: BarrierSpec, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n independent jump proposals at q (arrays of s and sign) from the engine's sampler."""
    x = q - barrier.d
    if barrier.v0 == 0.0 or x == 0.0:
        raise ZeroRate(f"jump rate vanishes at q={q}")
    return _draw_jumps_jit(float(x), float(barrier.sigma), int(n), int(seed) % 2**32)
