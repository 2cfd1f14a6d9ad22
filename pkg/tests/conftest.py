import warnings

import numpy as np
import pytest
from hypothesis import settings

from wigtraj.core import BarrierSpec, PacketSpec, ScenarioConfig

# numba warns once per process when the installed TBB is too old and falls back to another threading layer
warnings.filterwarnings("ignore", message=".*TBB.*")

# first calls trigger numba compilation, which would trip per-example deadlines
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def short_barrier_config(**changes) -> ScenarioConfig:
    """Packet centred on a narrow full-height barrier for a short time.

    The integrated jump rate along a path stays near 2.5, so the signed
    weights remain manageable while the quantum evolution differs visibly from
    the classical one.
    """
    kw = dict(
        packet=PacketSpec(0.0, 1.0, 2.0),
        barrier=BarrierSpec(1.0, 0.0, 1.0),
        t_final=2.0,
        n_snapshots=64,
        ensemble_size=100_000,
        detectors=(-2.0, 0.0, 2.0),
        seed=7,
    )
    kw.update(changes)
    return ScenarioConfig(**kw)


def weak_barrier_config(**changes) -> ScenarioConfig:
    """Slow packet on the flank of a weak barrier; tractable for both characteristics."""
    kw = dict(
        packet=PacketSpec(-1.0, 0.5, 1.0),
        barrier=BarrierSpec(0.05, 0.0, 1.0),
        t_final=2.0,
        n_snapshots=32,
        ensemble_size=200_000,
        detectors=(-1.0, 1.0),
        epsilon_dprime=0.05,
        jump_window=6.0,
        seed=11,
    )
    kw.update(changes)
    return ScenarioConfig(**kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
