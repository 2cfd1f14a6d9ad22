"""Units, packet and barrier specifications, and the initial Wigner distribution.

All internal arithmetic uses natural units with hbar = m = V0 = 1, where V0
is the barrier height of the preset experiments (0.3 eV) and lengths are
measured in reduced de Broglie wavelengths 1/k0 of an electron with kinetic
energy V0/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .errors import ValidationError

# CODATA values via scipy.constants
_HBAR_JS = constants.hbar
_ELECTRON_MASS_KG = constants.m_e
_EV_J = constants.electron_volt

KINDS = ("length", "time", "energy", "momentum")


@dataclass(frozen=True)
class UnitSystem:
    """Natural unit system anchored to an energy scale in eV.

    The energy unit is the barrier height. The length unit follows from
    hbar^2 / (m L^2) = E_unit, i.e. L = hbar / sqrt(2 m E0) with E0 = E_unit/2
    the packet kinetic energy, and the time unit is hbar / E_unit.
    """

    energy_unit_eV: float = 0.3
    mass_kg: float = _ELECTRON_MASS_KG
    hbar: float = field(default=1.0, init=False)
    mass: float = field(default=1.0, init=False)
    v0: float = field(default=1.0, init=False)
    length_unit_nm: float = field(init=False)
    time_unit_fs: float = field(init=False)

    def __post_init__(self):
        if not self.energy_unit_eV > 0:
            raise ValidationError("energy_unit_positive", "energy unit must be positive")
        e_unit = self.energy_unit_eV * _EV_J
        length_m = _HBAR_JS / math.sqrt(self.mass_kg * e_unit)
        time_s = _HBAR_JS / e_unit
        object.__setattr__(self, "length_unit_nm", length_m * 1e9)
        object.__setattr__(self, "time_unit_fs", time_s * 1e15)
        # energy * time = hbar and hbar^2/(m L^2) = energy, both to round-off
        if not math.isclose(e_unit * time_s, _HBAR_JS, rel_tol=1e-12):
            raise ValidationError("units_consistent", "energy*time != hbar")
        if not math.isclose(_HBAR_JS**2 / (self.mass_kg * length_m**2), e_unit, rel_tol=1e-12):
            raise ValidationError("units_consistent", "hbar^2/(m L^2) != energy unit")

    @property
    def momentum_unit_per_nm(self) -> float:
        """Natural momentum hbar*k in units of hbar * nm^-1 (i.e. a wavenumber)."""
        return 1.0 / self.length_unit_nm

    def factor(self, kind: str) -> float:
        if kind == "length":
            return self.length_unit_nm
        if kind == "time":
            return self.time_unit_fs
        if kind == "energy":
            return self.energy_unit_eV
        if kind == "momentum":
            return self.momentum_unit_per_nm
        raise ValueError(f"unknown quantity kind {kind!r}; expected one of {KINDS}")


DEFAULT_UNITS = UnitSystem()


def convert(value, kind: str, units: UnitSystem = DEFAULT_UNITS):
    """Natural units to nm / fs / eV / nm^-1."""
    return value * units.factor(kind)


def to_natural(value, kind: str, units: UnitSystem = DEFAULT_UNITS):
    """Inverse of :func:`convert`."""
    return value / units.factor(kind)


@dataclass(frozen=True)
class PacketSpec:
    """Gaussian wave packet: centre x0, mean wavenumber k0, position width sigma_x.

    The momentum spread is delta_k = 1/(2 sigma_x) (minimum uncertainty).
    """

    x0: float
    k0: float
    sigma_x: float

    def __post_init__(self):
        if not (math.isfinite(self.x0) and math.isfinite(self.k0)):
            raise ValidationError("packet_finite", "x0 and k0 must be finite")
        if not self.sigma_x > 0 or not math.isfinite(self.sigma_x):
            raise ValidationError("sigma_x_positive", f"sigma_x must be > 0, got {self.sigma_x}")
        if not self.k0 > 0:
            raise ValidationError("k0_positive", f"k0 must be > 0, got {self.k0}")

    @classmethod
    def from_delta_k(cls, x0: float, k0: float, delta_k: float) -> "PacketSpec":
        if not delta_k > 0:
            raise ValidationError("delta_k_positive", f"delta_k must be > 0, got {delta_k}")
        return cls(x0=x0, k0=k0, sigma_x=1.0 / (2.0 * delta_k))

    @property
    def delta_k(self) -> float:
        return 1.0 / (2.0 * self.sigma_x)


@dataclass(frozen=True)
class BarrierSpec:
    """Gaussian barrier V(q) = v0 * exp(-(q - d)^2 / sigma^2)."""

    v0: float = 1.0
    d: float = 0.0
    sigma: float = 5.0

    def __post_init__(self):
        if not self.v0 >= 0 or not math.isfinite(self.v0):
            raise ValidationError("v0_nonnegative", f"barrier height must be >= 0, got {self.v0}")
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ValidationError("sigma_positive", f"barrier width must be > 0, got {self.sigma}")
        if not math.isfinite(self.d):
            raise ValidationError("d_finite", "barrier centre must be finite")


MODES = ("quantum", "classical")
CHARACTERISTICS = ("free", "force")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run.

    ``characteristics`` selects how quantum-mode trajectories move between
    momentum jumps: ``"free"`` streams freely and takes the whole potential
    from the smooth jump kernel, ``"force"`` follows Newtonian trajectories and
    adds the regularized derivative-of-delta jumps that cancel the force.
    ``jump_window`` is the half-width, in barrier widths, of the region in
    which jumps are attempted (the rate table span).
    """

    packet: PacketSpec
    barrier: BarrierSpec
    t_final: float
    dt: float = 0.05
    n_snapshots: int = 512
    ensemble_size: int = 100_000
    seed: int = 1
    mode: str = "quantum"
    detectors: tuple[float, ...] = ()
    bandwidth: float = 0.5
    epsilon_dprime: float = 1e-3
    jump_attempt_bias: float = 8.0
    characteristics: str = "free"
    jump_window: float = 12.0
    max_jumps: int = 64
    x_boundary: float | None = None
    momentum_times: tuple[float, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(float(x) for x in self.detectors))
        object.__setattr__(self, "momentum_times", tuple(float(x) for x in self.momentum_times))
        checks = [
            ("dt_positive", self.dt > 0 and math.isfinite(self.dt), f"dt must be > 0, got {self.dt}"),
            ("t_final_positive", self.t_final > 0 and math.isfinite(self.t_final),
             f"t_final must be > 0, got {self.t_final}"),
            ("ensemble_positive", self.ensemble_size >= 1,
             f"ensemble_size must be >= 1, got {self.ensemble_size}"),
            ("snapshots_min", self.n_snapshots >= 2, f"n_snapshots must be >= 2, got {self.n_snapshots}"),
            ("bandwidth_positive", self.bandwidth > 0, f"bandwidth must be > 0, got {self.bandwidth}"),
            ("epsilon_positive", self.epsilon_dprime > 0,
             f"epsilon_dprime must be > 0, got {self.epsilon_dprime}"),
            ("bias_above_one", self.jump_attempt_bias > 1.0,
             f"jump_attempt_bias must be > 1, got {self.jump_attempt_bias}"),
            ("mode_known", self.mode in MODES, f"mode must be one of {MODES}, got {self.mode!r}"),
            ("characteristics_known", self.characteristics in CHARACTERISTICS,
             f"characteristics must be one of {CHARACTERISTICS}, got {self.characteristics!r}"),
            ("window_positive", self.jump_window > 0, f"jump_window must be > 0, got {self.jump_window}"),
            ("max_jumps_nonnegative", self.max_jumps >= 0, f"max_jumps must be >= 0, got {self.max_jumps}"),
            ("seed_range", 0 <= self.seed < 2**64, f"seed must fit in 64 unsigned bits, got {self.seed}"),
            ("detectors_finite", all(math.isfinite(x) for x in self.detectors), "detectors must be finite"),
            ("momentum_times_range", all(0 <= t <= self.t_final for t in self.momentum_times),
             "momentum_times must lie in [0, t_final]"),
        ]
        for invariant, ok, message in checks:
            if not ok:
                raise ValidationError(invariant, message)

    @property
    def boundary(self) -> float:
        """Transmission boundary x_b; defaults to the barrier centre."""
        return self.barrier.d if self.x_boundary is None else self.x_boundary

    def snapshot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_snapshots)


def potential(q, barrier: BarrierSpec):
    """Gaussian barrier potential; tails below float range become 0.0."""
    x = np.asarray(q, dtype=float) - barrier.d
    out = barrier.v0 * np.exp(-(x * x) / barrier.sigma**2)
    return float(out) if np.ndim(out) == 0 else out


def force(q, barrier: BarrierSpec):
    """F = -dV/dq = 2 v0 (q - d)/sigma^2 exp(-(q - d)^2/sigma^2)."""
    x = np.asarray(q, dtype=float) - barrier.d
    s2 = barrier.sigma**2
    out = 2.0 * barrier.v0 * x / s2 * np.exp(-(x * x) / s2)
    return float(out) if np.ndim(out) == 0 else out


def initial_wigner(q, p, packet: PacketSpec):
    """Wigner function of the initial packet, normalized to unit phase-space integral.

    W = (1/pi) exp(-(q-x0)^2 / (2 sigma_x^2)) exp(-2 sigma_x^2 (p-k0)^2),
    so that integrating over p gives |psi(q, 0)|^2.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    sx = packet.sigma_x
    out = (1.0 / math.pi) * np.exp(-((q - packet.x0) ** 2) / (2 * sx * sx)) * np.exp(
        -2 * sx * sx * (p - packet.k0) ** 2
    )
    return float(out) if np.ndim(out) == 0 else out


def wavefunction0(x, packet: PacketSpec):
    """psi(x, 0) of the Gaussian packet, unit L2 norm."""
    x = np.asarray(x, dtype=float)
    sx = packet.sigma_x
    amp = (2 * math.pi * sx * sx) ** -0.25
    return amp * np.exp(-(((x - packet.x0) / (2 * sx)) ** 2) + 1j * packet.k0 * x)


def sample_initial(packet: PacketSpec, rng: np.random.Generator, size=None):
    """Exact draw(s) from the initial Wigner distribution (independent Gaussians)."""
    q = rng.normal(packet.x0, packet.sigma_x, size)
    p = rng.normal(packet.k0, packet.delta_k, size)
    if size is None:
        from .dynamics import PhaseSpacePoint

        return PhaseSpacePoint(float(q), float(p))
    return q, p
