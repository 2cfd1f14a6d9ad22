"""Exception hierarchy.

Every error carries the process exit code the command line maps it to:
2 for configuration problems, 3 for compute failures, 4 for I/O and 5 for
a comparison that ran but did not pass.
"""


class WigtrajError(Exception):
    exit_code = 3


class ConfigError(WigtrajError, ValueError):
    exit_code = 2


class ParseError(ConfigError):
    """Malformed configuration text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(ConfigError):
    """A configuration value violates a named invariant."""

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


class ComputeError(WigtrajError):
    exit_code = 3


class ZeroRate(ComputeError):
    """A jump was requested where the jump rate vanishes."""


class EmptyEnsemble(ComputeError):
    pass


class EmptyRegion(ComputeError):
    pass


class ZeroMass(ComputeError):
    """A time distribution has no significant positive mass to normalize."""


class BackflowDominant(ComputeError):
    """Reverse flux through the detector is too large for an arrival-time distribution."""


class DomainTooSmall(ComputeError):
    pass


class OutOfDomain(ComputeError):
    pass


class GridMismatch(ComputeError):
    pass


class IoError(WigtrajError):
    exit_code = 4


class ComparisonFailed(WigtrajError):
    exit_code = 5
