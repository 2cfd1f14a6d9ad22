"""Phase-space quantum dynamics by Monte Carlo over quantum trajectories.

Solves the Wigner equation for a 1D Gaussian packet scattering on a Gaussian
barrier, measures detector-based tunneling times, and checks everything
against a split-step Schroedinger reference solver.
"""

__version__ = "0.1.0"

from .core import (DEFAULT_UNITS, BarrierSpec, PacketSpec, ScenarioConfig, UnitSystem, convert, force,
                   initial_wigner, potential, sample_initial, to_natural)
from .errors import (BackflowDominant, ComparisonFailed, ComputeError, ConfigError, DomainTooSmall, EmptyEnsemble,
                     EmptyRegion, GridMismatch, IoError, OutOfDomain, ParseError, ValidationError, WigtrajError,
                     ZeroMass, ZeroRate)

__all__ = [
    "__version__", "DEFAULT_UNITS", "BarrierSpec", "PacketSpec", "ScenarioConfig", "UnitSystem", "convert", "force",
    "initial_wigner", "potential", "sample_initial", "to_natural", "BackflowDominant", "ComparisonFailed",
    "ComputeError", "ConfigError", "DomainTooSmall", "EmptyEnsemble", "EmptyRegion", "GridMismatch", "IoError",
    "OutOfDomain", "ParseError", "ValidationError", "WigtrajError", "ZeroMass", "ZeroRate",
]
