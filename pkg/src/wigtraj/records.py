"""Run records: every reported series of one simulation, MC or oracle.

A Monte Carlo run is reduced on the fly. Trajectories are generated in
chunks that never straddle the 32 contiguous jackknife blocks, and each chunk
is reduced with numpy's pairwise sums, so the record depends on the seed and
ensemble size only, not on the thread count.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .core import ScenarioConfig
from .errors import EmptyEnsemble, EmptyRegion
from .observables import (BANDWIDTH_TOLERANCE, N_BLOCKS, REGIONS, Histogram, TimeSeriesObservable,
                          bandwidth_change, default_momentum_edges, gaussian_kernel, histogram_from_block_sums,
                          jackknife, momentum_block_sums)
from .trajectories import iter_blocks


@dataclass
class RunRecord:
    name: str
    source: str  # "mc" or "oracle"
    mode: str
    config: ScenarioConfig
    times: np.ndarray
    detectors: tuple[float, ...]
    density: list[TimeSeriesObservable]
    flux: list[TimeSeriesObservable]
    snapshot_columns: dict[str, np.ndarray]
    momentum: dict[tuple[float, str], Histogram] = field(default_factory=dict)
    diagnostics: dict[str, float] = field(default_factory=dict)

    def detector_index(self, x: float) -> int:
        for i, d in enumerate(self.detectors):
            if math.isclose(d, x, rel_tol=1e-12, abs_tol=1e-12):
                return i
        raise KeyError(f"no detector at {x}")

    def density_at(self, x: float) -> TimeSeriesObservable:
        return self.density[self.detector_index(x)]

    def flux_at(self, x: float) -> TimeSeriesObservable:
        return self.flux[self.detector_index(x)]

    def final_transmission(self) -> tuple[float, float]:
        return float(self.snapshot_columns["trans_prob"][-1]), float(self.snapshot_columns["trans_prob_err"][-1])


SNAPSHOT_COLUMNS = ("mean_q", "mean_q_err", "mean_p", "mean_p_err", "var_q", "var_q_err", "var_p", "var_p_err",
                    "trans_prob", "trans_prob_err")
_LINEAR = ("w", "wq", "wp", "wq2", "wp2", "trans", "refl")


def _sample_std_error(sum_c: np.ndarray, sum_c2: np.ndarray, n: int) -> np.ndarray:
    if n < 2:
        return np.full_like(sum_c, np.inf)
    mean = sum_c / n
    var = np.maximum(sum_c2 - n * mean * mean, 0.0) / (n - 1)
    return np.sqrt(var / n)


def collect_run(config: ScenarioConfig, chunk: int = 4096, n_blocks: int = N_BLOCKS,
                n_momentum_bins: int = 201) -> RunRecord:
    """Simulate ``config`` and reduce the ensemble into a :class:`RunRecord`."""
    if config.ensemble_size < 1:
        raise EmptyEnsemble("ensemble_size must be positive")
    t_grid = config.snapshot_times()
    extra = np.array(sorted(set(config.momentum_times) - set(t_grid.tolist())), dtype=float)
    t_all = np.union1d(t_grid, extra)
    grid_idx = np.searchsorted(t_all, t_grid)
    mom_idx = [int(np.searchsorted(t_all, t)) for t in config.momentum_times]
    n_t = t_grid.size
    dets = config.detectors
    h = config.bandwidth
    x_b = config.boundary
    edges = default_momentum_edges(config.packet.k0, n_momentum_bins)

    n_b = min(n_blocks, config.ensemble_size)
    lin = {k: np.zeros((n_b, n_t)) for k in _LINEAR}
    sq = {k: np.zeros(n_t) for k in ("w", "wq", "wp", "trans", "refl")}
    dens = np.zeros((len(dets), n_b, n_t))
    dens_sq = np.zeros((len(dets), n_t))
    dens_diff = np.zeros((len(dets), n_t))
    dens_diff_sq = np.zeros((len(dets), n_t))
    flx = np.zeros((len(dets), n_b, n_t))
    flx_sq = np.zeros((len(dets), n_t))
    mom = {(j, r): np.zeros((n_b, edges.size - 1 + 3)) for j in range(len(mom_idx)) for r in REGIONS}
    counts = np.zeros(n_b)
    jumps_total = 0
    capped_total = 0
    max_abs_w = 0.0
    t0 = _time.perf_counter()

    for b, blk in iter_blocks(config, n_b, chunk, t_all):
        q = blk.q[grid_idx]
        p = blk.p[grid_idx]
        w = blk.w[grid_idx]
        m = q.shape[1]
        counts[b] += m
        contrib = {
            "w": w, "wq": w * q, "wp": w * p, "wq2": w * q * q, "wp2": w * p * p,
            "trans": w * (q > x_b), "refl": w * (q <= x_b),
        }
        for k, c in contrib.items():
            lin[k][b] += np.sum(c, axis=1)
            if k in sq:
                sq[k] += np.sum(c * c, axis=1)
        for j, x in enumerate(dets):
            kd = w * gaussian_kernel(q - x, h)
            dens[j, b] += np.sum(kd, axis=1)
            dens_sq[j] += np.sum(kd * kd, axis=1)
            kdiff = kd - w * gaussian_kernel(q - x, 0.5 * h)
            dens_diff[j] += np.sum(kdiff, axis=1)
            dens_diff_sq[j] += np.sum(kdiff * kdiff, axis=1)
            kf = kd * p
            flx[j, b] += np.sum(kf, axis=1)
            flx_sq[j] += np.sum(kf * kf, axis=1)
        for j, k in enumerate(mom_idx):
            qk, pk, wk = blk.q[k], blk.p[k], blk.w[k]
            mom[(j, "all")][b] += momentum_block_sums(pk, wk, edges)
            sel = qk > x_b
            mom[(j, "transmitted")][b] += momentum_block_sums(pk[sel], wk[sel], edges)
        jumps_total += int(blk.n_jumps.sum())
        capped_total += int(blk.capped.sum())
        max_abs_w = max(max_abs_w, float(np.max(np.abs(blk.w))))

    n = int(counts.sum())
    tot = {k: v.sum(axis=0) for k, v in lin.items()}
    cols: dict[str, np.ndarray] = {}
    for name, key, key2 in (("q", "wq", "wq2"), ("p", "wp", "wp2")):
        cols[f"mean_{name}"] = tot[key] / n
        cols[f"mean_{name}_err"] = _sample_std_error(tot[key], sq[key], n)
        stacked = np.concatenate([lin[key], lin[key2], counts[:, None]], axis=1)
        var, var_err = jackknife(lambda s: s[n_t:2 * n_t] / s[-1] - (s[:n_t] / s[-1]) ** 2, stacked)
        cols[f"var_{name}"] = var
        cols[f"var_{name}_err"] = var_err
    cols["trans_prob"] = tot["trans"] / n
    cols["trans_prob_err"] = _sample_std_error(tot["trans"], sq["trans"], n)
    cols["refl_prob"] = tot["refl"] / n
    cols["refl_prob_err"] = _sample_std_error(tot["refl"], sq["refl"], n)
    cols["norm"] = tot["w"] / n
    cols["norm_err"] = _sample_std_error(tot["w"], sq["w"], n)

    density = []
    flux = []
    for j in range(len(dets)):
        ds = dens[j].sum(axis=0)
        density.append(TimeSeriesObservable(t_grid, ds / n, _sample_std_error(ds, dens_sq[j], n), dens[j], counts))
        fs = flx[j].sum(axis=0)
        flux.append(TimeSeriesObservable(t_grid, fs / n, _sample_std_error(fs, flx_sq[j], n), flx[j], counts))

    momentum = {}
    for j, t in enumerate(config.momentum_times):
        for r in REGIONS:
            try:
                momentum[(t, r)] = histogram_from_block_sums(edges, mom[(j, r)], r, n)
            except EmptyRegion:  # nothing transmitted in this sample
                continue

    change = max((bandwidth_change(d.values, d.values - dens_diff[j] / n,
                                   _sample_std_error(dens_diff[j], dens_diff_sq[j], n))
                  for j, d in enumerate(density)), default=0.0)
    diagnostics = {
        "n_trajectories": float(n),
        "mean_jumps": jumps_total / n,
        "cap_hits": float(capped_total),
        "max_abs_weight": max_abs_w,
        "bandwidth_change": change,
        "under_resolved": float(change > BANDWIDTH_TOLERANCE),
        "wall_seconds": _time.perf_counter() - t0,
    }
    return RunRecord(config.name, "mc", config.mode, config, t_grid, dets, density, flux, cols, momentum,
                     diagnostics)
