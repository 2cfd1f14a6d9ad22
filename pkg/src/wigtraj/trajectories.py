"""Quantum-trajectory Monte Carlo for the Wigner equation.

Each trajectory starts from an exact draw of the initial Wigner function and
moves along characteristics interrupted by random momentum jumps. Jump
attempts form a homogeneous Poisson stream of intensity ``mu`` (a majorant of
the local kernel mass M(q)). At an attempt the jump is accepted with
probability C = M(q)/mu; the momentum changes by s drawn from |kernel|/M and
the weight picks up the kernel sign. A rejected attempt multiplies the weight
by 1/(1 - C). With these factors the weighted phase-space density obeys the
Wigner equation exactly, so every linear functional is estimated without
bias. The price is a weight magnitude that grows like exp(int M dt) along the
path; keep the time spent inside the jump window short or the estimates are
noise dominated.

Classical mode makes no attempts at all: weight 1 on Newtonian trajectories,
i.e. the classically evolving initial distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, NamedTuple

import numba as nb
import numpy as np

from .core import BarrierSpec, ScenarioConfig
from .dynamics import PhaseSpacePoint, propagate_jit, force_jit
from .errors import ConfigError, EmptyEnsemble
from .kernel import build_rate_table, max_force, sample_jump_jit, table_rate_jit


class WeightedSample(NamedTuple):
    q: float
    p: float
    w: float


@dataclass(frozen=True)
class EnsembleSnapshot:
    """Signed-weight sample of the Wigner function at one time."""

    time: float
    q: np.ndarray
    p: np.ndarray
    w: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return int(self.q.shape[0])

    @property
    def samples(self) -> list[WeightedSample]:
        return [WeightedSample(float(a), float(b), float(c)) for a, b, c in zip(self.q, self.p, self.w)]


@dataclass(frozen=True)
class QuantumTrajectory:
    jumps: list[tuple[float, float]]
    weight: float
    snapshots: list[tuple[float, PhaseSpacePoint, float]]
    capped: bool = False


class SimulationBlock(NamedTuple):
    """Raw output for trajectories [start, stop): arrays shaped (n_snapshots, m)."""

    start: int
    q: np.ndarray
    p: np.ndarray
    w: np.ndarray
    n_jumps: np.ndarray
    capped: np.ndarray
    jump_t: np.ndarray
    jump_s: np.ndarray


@lru_cache(maxsize=16)
def _rate_table(v0: float, d: float, sigma: float, window: float):
    return build_rate_table(BarrierSpec(v0, d, sigma), halfwidth=window)


def attempt_rate(config: ScenarioConfig) -> float:
    """Majorant mu of the jump-attempt Poisson stream (0 when no jumps are possible)."""
    b = config.barrier
    if config.mode != "quantum" or b.v0 == 0.0 or config.max_jumps == 0:
        return 0.0
    table = _rate_table(b.v0, b.d, b.sigma, config.jump_window)
    peak = table.nu_max
    if config.characteristics == "force":
        peak += max_force(b) / config.epsilon_dprime
    return config.jump_attempt_bias * peak


def trajectory_seeds(seed: int, start: int, stop: int) -> np.ndarray:
    """32-bit stream seeds derived from (seed, trajectory index)."""
    out = np.empty(stop - start, dtype=np.int64)
    for j, i in enumerate(range(start, stop)):
        out[j] = np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0]
    return out


@nb.njit(parallel=True, cache=True)
def _simulate_kernel(seeds, x0, sx, k0, dk, v0, d, sigma, t_snap, dt, quantum, force_chars,
                     mu, eps, q_lo, dq, nu_vals, max_jumps,
                     out_q, out_p, out_w, n_jumps, capped, jump_t, jump_s):
    m = seeds.shape[0]
    n_snap = t_snap.shape[0]
    newtonian = (not quantum) or force_chars
    for i in nb.prange(m):
        np.random.seed(seeds[i])
        q = x0 + sx * np.random.standard_normal()
        p = k0 + dk * np.random.standard_normal()
        w = 1.0
        t = 0.0
        nj = 0
        out_q[0, i] = q
        out_p[0, i] = p
        out_w[0, i] = w
        attempting = quantum and mu > 0.0 and max_jumps > 0
        t_att = t + np.random.exponential(1.0 / mu) if attempting else np.inf
        k = 1
        while k < n_snap:
            t_next = t_snap[k]
            if t_att < t_next:
                span = t_att - t
                if newtonian:
                    q, p = propagate_jit(q, p, span, dt, v0, d, sigma)
                else:
                    q = q + p * span
                t = t_att
                nu = table_rate_jit(q, q_lo, dq, nu_vals)
                mass = nu
                fpart = 0.0
                if force_chars:
                    fq = force_jit(q, v0, d, sigma)
                    fpart = abs(fq) / eps
                    mass += fpart
                c = mass / mu
                if np.random.random() < c:
                    if force_chars and np.random.random() * mass < fpart:
                        # derivative-of-delta pair: s=+eps carries -F, s=-eps carries +F
                        sgn_f = 1.0 if fq > 0 else -1.0
                        if np.random.random() < 0.5:
                            s = eps
                            sg = -sgn_f
                        else:
                            s = -eps
                            sg = sgn_f
                    else:
                        s, sg = sample_jump_jit(q - d, sigma)
                    p += s
                    w *= sg
                    jump_t[i, nj] = t
                    jump_s[i, nj] = s
                    nj += 1
                else:
                    w /= 1.0 - c
                if nj >= max_jumps:
                    capped[i] = True
                    t_att = np.inf
                else:
                    t_att = t + np.random.exponential(1.0 / mu)
            else:
                span = t_next - t
                if newtonian:
                    q, p = propagate_jit(q, p, span, dt, v0, d, sigma)
                else:
                    q = q + p * span
                t = t_next
                out_q[k, i] = q
                out_p[k, i] = p
                out_w[k, i] = w
                k += 1
        n_jumps[i] = nj


def _kernel_inputs(config: ScenarioConfig):
    b = config.barrier
    mu = attempt_rate(config)
    if mu > 0:
        table = _rate_table(b.v0, b.d, b.sigma, config.jump_window)
        return mu, table.q_lo, table.dq, table.nu_values
    return 0.0, 0.0, 1.0, np.zeros(2)


def _run_streams(config: ScenarioConfig, seeds: np.ndarray, t_snap: np.ndarray, start: int) -> SimulationBlock:
    m = seeds.shape[0]
    n_snap = t_snap.shape[0]
    b = config.barrier
    pk = config.packet
    mu, q_lo, dq, nu_vals = _kernel_inputs(config)
    out_q = np.empty((n_snap, m))
    out_p = np.empty((n_snap, m))
    out_w = np.empty((n_snap, m))
    n_jumps = np.zeros(m, dtype=np.int64)
    capped = np.zeros(m, dtype=np.bool_)
    width = max(config.max_jumps, 1)
    jump_t = np.full((m, width), np.nan)
    jump_s = np.full((m, width), np.nan)
    _simulate_kernel(seeds, pk.x0, pk.sigma_x, pk.k0, pk.delta_k,
                     b.v0, b.d, b.sigma, t_snap, config.dt, config.mode == "quantum",
                     config.characteristics == "force", mu, config.epsilon_dprime,
                     q_lo, dq, nu_vals, config.max_jumps,
                     out_q, out_p, out_w, n_jumps, capped, jump_t, jump_s)
    return SimulationBlock(start, out_q, out_p, out_w, n_jumps, capped, jump_t, jump_s)


def simulate(config: ScenarioConfig, start: int = 0, stop: int | None = None,
             snapshot_times: np.ndarray | None = None) -> SimulationBlock:
    """Run trajectories with indices [start, stop); deterministic per index."""
    if stop is None:
        stop = config.ensemble_size
    if not 0 <= start <= stop:
        raise ConfigError(f"bad trajectory range [{start}, {stop})")
    t_snap = config.snapshot_times() if snapshot_times is None else np.asarray(snapshot_times, dtype=float)
    return _run_streams(config, trajectory_seeds(config.seed, start, stop), t_snap, start)


def generate_trajectory(config: ScenarioConfig, rng: np.random.Generator | int) -> QuantumTrajectory:
    """One trajectory; ``rng`` supplies the stream seed (or is the seed itself)."""
    seed = int(rng) if isinstance(rng, (int, np.integer)) else int(rng.integers(2**32))
    t_snap = config.snapshot_times()
    blk = _run_streams(config, np.array([seed % 2**32], dtype=np.int64), t_snap, 0)
    n = int(blk.n_jumps[0])
    jumps = [(float(blk.jump_t[0, j]), float(blk.jump_s[0, j])) for j in range(n)]
    snaps = [(float(t), PhaseSpacePoint(float(blk.q[k, 0]), float(blk.p[k, 0])), float(blk.w[k, 0]))
             for k, t in enumerate(t_snap)]
    return QuantumTrajectory(jumps=jumps, weight=float(blk.w[-1, 0]), snapshots=snaps, capped=bool(blk.capped[0]))


def run_ensemble(config: ScenarioConfig, snapshot_indices=None) -> list[EnsembleSnapshot]:
    """All trajectories held in memory; use :func:`iter_blocks` for large ensembles."""
    blk = simulate(config)
    t_snap = config.snapshot_times()
    idx = range(len(t_snap)) if snapshot_indices is None else snapshot_indices
    return [EnsembleSnapshot(float(t_snap[k]), blk.q[k].copy(), blk.p[k].copy(), blk.w[k].copy()) for k in idx]


def block_bounds(n: int, n_blocks: int = 32) -> np.ndarray:
    """Contiguous trajectory-index blocks [bounds[b], bounds[b+1])."""
    n_blocks = max(1, min(n_blocks, n))
    return np.linspace(0, n, n_blocks + 1).round().astype(int)


def iter_blocks(config: ScenarioConfig, n_blocks: int = 32, chunk: int = 4096,
                snapshot_times: np.ndarray | None = None) -> Iterator[tuple[int, SimulationBlock]]:
    """Yield (block index, chunk) in trajectory-index order.

    Blocks are contiguous index ranges used for jackknife errors; chunk
    boundaries never straddle blocks, so reductions are independent of how
    work was split across threads.
    """
    bounds = block_bounds(config.ensemble_size, n_blocks)
    n_blocks = len(bounds) - 1
    for b in range(n_blocks):
        for start in range(bounds[b], bounds[b + 1], chunk):
            stop = min(start + chunk, bounds[b + 1])
            yield b, simulate(config, start, stop, snapshot_times)


def estimate_functional(symbol: Callable, snapshot: EnsembleSnapshot) -> tuple[float, float]:
    """Mean of w * A(q, p) over trajectories and its standard error.

    ``symbol`` must accept numpy arrays. The sum is numpy's pairwise
    reduction in trajectory-index order, hence reproducible.
    """
    n = snapshot.n_trajectories
    if n == 0:
        raise EmptyEnsemble("snapshot has no trajectories")
    contrib = snapshot.w * np.broadcast_to(np.asarray(symbol(snapshot.q, snapshot.p), dtype=float), snapshot.q.shape)
    value = float(np.sum(contrib) / n)
    if n < 2:
        return value, math.inf
    return value, float(np.std(contrib, ddof=1) / math.sqrt(n))


def classical_position(config: ScenarioConfig, q0: float, p0: float) -> np.ndarray:
    """Reference positions of a jump-free Newtonian trajectory at the snapshot times."""
    b = config.barrier
    t = config.snapshot_times()
    out = np.empty_like(t)
    q, p = q0, p0
    out[0] = q
    for k in range(1, len(t)):
        q, p = propagate_jit(q, p, t[k] - t[k - 1], config.dt, b.v0, b.d, b.sigma)
        out[k] = q
    return out


__all__ = [
    "WeightedSample", "EnsembleSnapshot", "QuantumTrajectory", "SimulationBlock", "attempt_rate",
    "trajectory_seeds", "simulate", "block_bounds", "generate_trajectory", "run_ensemble", "iter_blocks",
    "estimate_functional", "classical_position",
]
