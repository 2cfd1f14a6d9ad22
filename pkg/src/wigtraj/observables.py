"""Detector densities and fluxes, time distributions, moments and momentum histograms.

Snapshot-level estimators are linear functionals of the signed-weight sample
(normalized by the trajectory count) and quote the sample standard error.
Time-series statistics such as mean presence times are ratios of integrals;
when a series carries per-block sums over contiguous trajectory blocks their
errors come from a delete-one-block jackknife, which keeps the correlation
between time points (they share trajectories) intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import BackflowDominant, EmptyEnsemble, EmptyRegion, ZeroMass
from .trajectories import EnsembleSnapshot, estimate_functional

BACKFLOW_THRESHOLD = 0.02
N_BLOCKS = 32
REGIONS = ("all", "transmitted")


def gaussian_kernel(u, h: float):
    return np.exp(-0.5 * (u / h) ** 2) / (math.sqrt(2.0 * math.pi) * h)


def jackknife(estimator: Callable[[np.ndarray], np.ndarray], block_sums: np.ndarray):
    """Delete-one-block jackknife.

    ``block_sums`` has the block index first; ``estimator`` maps summed
    statistics (block axis removed) to an array or scalar. Returns
    (estimate on the full sum, standard error).
    """
    block_sums = np.asarray(block_sums, dtype=float)
    total = block_sums.sum(axis=0)
    full = np.asarray(estimator(total), dtype=float)
    n_b = block_sums.shape[0]
    if n_b < 2:
        return full, np.full_like(full, np.inf)
    loo = np.array([estimator(total - block_sums[b]) for b in range(n_b)], dtype=float)
    err = np.sqrt((n_b - 1) / n_b * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, err


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


@dataclass(frozen=True)
class TimeSeriesObservable:
    """Values on a uniform time grid.

    Optional ``block_sums`` (n_blocks, n_times) hold per-block sums of
    per-trajectory contributions and ``block_counts`` the trajectory count per
    block; values = block_sums.sum(0) / block_counts.sum().
    """

    times: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    block_sums: np.ndarray | None = None
    block_counts: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.std_errors, dtype=float)
        if not (t.shape == v.shape == e.shape and t.ndim == 1):
            raise ValueError("times, values and std_errors must be 1-D and equally long")
        if t.size >= 3:
            dt = np.diff(t)
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
                raise ValueError("time grid must be uniform")
        if np.any(e < 0):
            raise ValueError("std_errors must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "std_errors", e)

    @property
    def has_blocks(self) -> bool:
        return self.block_sums is not None and self.block_counts is not None and len(self.block_counts) >= 2

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def integral(self) -> tuple[float, float]:
        w = _trapezoid_weights(self.times)
        value = float(np.dot(w, self.values))
        if self.has_blocks:
            _, err = self.jackknife(lambda s, n: np.dot(w, s) / n)
            return value, float(err)
        return value, float(math.sqrt(np.dot(w**2, self.std_errors**2)))

    def jackknife(self, stat: Callable[[np.ndarray, float], float]):
        """Jackknife of stat(summed contributions, count) over trajectory blocks."""
        sums = np.column_stack([self.block_sums, self.block_counts])
        return jackknife(lambda tot: stat(tot[:-1], tot[-1]), sums)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    masses: np.ndarray
    std_errors: np.ndarray
    mean: float = math.nan
    mean_err: float = math.nan
    variance: float = math.nan
    variance_err: float = math.nan
    total_weight: float = math.nan

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.shape(self.masses) != (edges.size - 1,) or np.shape(self.std_errors) != (edges.size - 1,):
            raise ValueError("masses and std_errors need one entry per bin")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


class Moments(NamedTuple):
    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    std_errors: tuple[float, float, float, float]


# ---------------------------------------------------------------- snapshot level


def density_at(X: float, snapshot: EnsembleSnapshot, h: float) -> tuple[float, float]:
    """Kernel-smoothed position density sum w K_h(q - X) / n."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return estimate_functional(lambda q, p: gaussian_kernel(q - X, h), snapshot)


BANDWIDTH_TOLERANCE = 0.02


def bandwidth_change(values_h: np.ndarray, values_half: np.ndarray, diff_errors=None) -> float:
    """Largest change of a density series when the bandwidth is halved, relative to its peak.

    With Monte Carlo input, ``diff_errors`` are the standard errors of the
    difference and only the part beyond three of them counts, so sampling
    noise at the smaller bandwidth is not mistaken for structure. Values above
    ``BANDWIDTH_TOLERANCE`` mean the kernel blurs what the detector should
    resolve.
    """
    values_h = np.asarray(values_h, dtype=float)
    peak = float(np.max(np.abs(values_h))) if values_h.size else 0.0
    if peak == 0.0:
        return 0.0
    change = np.abs(values_h - np.asarray(values_half, dtype=float))
    if diff_errors is not None:
        change = np.maximum(change - 3.0 * np.asarray(diff_errors, dtype=float), 0.0)
    return float(np.max(change) / peak)


def flux_at(X: float, snapshot: EnsembleSnapshot, h: float) -> tuple[float, float]:
    """Kernel-smoothed probability flux sum w p K_h(q - X) / n (unit mass)."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return estimate_functional(lambda q, p: p * gaussian_kernel(q - X, h), snapshot)


def moments(snapshot: EnsembleSnapshot) -> Moments:
    """Means and central second moments of q and p with delta-method errors."""
    n = snapshot.n_trajectories
    if n == 0:
        raise EmptyEnsemble("snapshot has no trajectories")
    out = []
    errs = []
    for x in (snapshot.q, snapshot.p):
        m1, e1 = estimate_functional(lambda q, p, x=x: x, snapshot)
        c1 = snapshot.w * x
        c2 = snapshot.w * x * x
        m2 = float(np.sum(c2) / n)
        var = m2 - m1 * m1
        lin = c2 - 2.0 * m1 * c1
        ev = float(np.std(lin, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        out.append((m1, var))
        errs.append((e1, ev))
    return Moments(out[0][0], out[1][0], out[0][1], out[1][1], (errs[0][0], errs[1][0], errs[0][1], errs[1][1]))


def transmission_probability(snapshot: EnsembleSnapshot, x_b: float) -> tuple[float, float]:
    """Signed-weight mass beyond x_b. Only meaningful once the transmitted lobe has cleared x_b."""
    return estimate_functional(lambda q, p: (q > x_b).astype(float), snapshot)


def reflection_probability(snapshot: EnsembleSnapshot, x_b: float) -> tuple[float, float]:
    return estimate_functional(lambda q, p: (q <= x_b).astype(float), snapshot)


def default_momentum_edges(k0: float, n_bins: int = 201) -> np.ndarray:
    return np.linspace(-3.0 * k0, 3.0 * k0, n_bins + 1)


def _region_mask(q: np.ndarray, region: str, x_b: float) -> np.ndarray:
    if region == "all":
        return np.ones(q.shape, dtype=bool)
    if region == "transmitted":
        return q > x_b
    raise ValueError(f"region must be one of {REGIONS}, got {region!r}")


def momentum_block_sums(p: np.ndarray, w: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-bin weight sums followed by sum w, sum w p, sum w p^2 (the histogram statistics)."""
    idx = np.searchsorted(edges, p, side="right") - 1
    inside = (idx >= 0) & (idx < edges.size - 1)
    hist = np.bincount(idx[inside], weights=w[inside], minlength=edges.size - 1)
    return np.concatenate([hist, [np.sum(w), np.sum(w * p), np.sum(w * p * p)]])


def histogram_from_block_sums(edges: np.ndarray, block_sums: np.ndarray, region: str = "all",
                              n_trajectories: int | None = None) -> Histogram:
    """Normalized histogram from per-block statistics; ``total_weight`` is the region's probability."""
    nb = edges.size - 1
    total = block_sums.sum(axis=0)
    mass = total[nb]
    if not mass > 0 or not np.isfinite(mass):
        raise EmptyRegion(f"no positive weight in region {region!r}")

    def est(s):
        m = s[nb]
        mean = s[nb + 1] / m
        return np.concatenate([s[:nb] / m, [mean, s[nb + 2] / m - mean * mean]])

    val, err = jackknife(est, block_sums)
    n = n_trajectories if n_trajectories else 1
    return Histogram(edges, val[:nb], err[:nb], float(val[nb]), float(err[nb]), float(val[nb + 1]),
                     float(err[nb + 1]), float(mass) / n)


def momentum_distribution(snapshot: EnsembleSnapshot, region: str = "all", bins=None, x_b: float = 0.0,
                          k0: float = 1.0, n_blocks: int = N_BLOCKS) -> Histogram:
    """Weighted, normalized p histogram over the samples in ``region``.

    ``bins`` may be an edge array or a bin count (default 201) spread over
    [-3 k0, 3 k0]. Bin errors, the mean and the variance (with errors) come
    from a jackknife over contiguous trajectory blocks.
    """
    if snapshot.n_trajectories == 0:
        raise EmptyEnsemble("snapshot has no trajectories")
    mask = _region_mask(snapshot.q, region, x_b)
    if isinstance(bins, (list, tuple, np.ndarray)):
        edges = np.asarray(bins, dtype=float)
    else:
        edges = default_momentum_edges(k0, 201 if bins is None else int(bins))
    if not np.any(mask):
        raise EmptyRegion(f"no samples in region {region!r}")
    n = snapshot.n_trajectories
    n_blocks = max(2, min(n_blocks, n))
    bounds = np.linspace(0, n, n_blocks + 1).round().astype(int)
    sums = np.array([
        momentum_block_sums(snapshot.p[a:b][mask[a:b]], snapshot.w[a:b][mask[a:b]], edges)
        for a, b in zip(bounds[:-1], bounds[1:])
    ])
    return histogram_from_block_sums(edges, sums, region, n)


# ---------------------------------------------------------------- time-series level


def _normalized(X: float, series: TimeSeriesObservable, what: str) -> TimeSeriesObservable:
    integral, err = series.integral()
    if not integral > 0 or (err > 0 and integral < err):
        raise ZeroMass(f"{what} at X={X} has no significant positive mass (integral {integral:.3g} +- {err:.3g})")
    w = _trapezoid_weights(series.times)
    if series.has_blocks:
        _, errs = series.jackknife(lambda s, n: s / np.dot(w, s))
        values = series.values / integral
        return TimeSeriesObservable(series.times, values, errs, series.block_sums, series.block_counts)
    return TimeSeriesObservable(series.times, series.values / integral, series.std_errors / integral)


def _mean_time(X: float, series: TimeSeriesObservable, what: str) -> tuple[float, float]:
    t = series.times
    w = _trapezoid_weights(t)
    integral, _ = series.integral()
    _normalized(X, series, what)  # mass check
    mean = float(np.dot(w * t, series.values) / integral)
    if series.has_blocks:
        _, err = series.jackknife(lambda s, n: np.dot(w * t, s) / np.dot(w, s))
        return mean, float(err)
    grad = w * (t - mean) / integral
    return mean, float(math.sqrt(np.dot(grad**2, series.std_errors**2)))


def presence_distribution(X: float, series: TimeSeriesObservable) -> TimeSeriesObservable:
    """Detector density series normalized to unit time integral."""
    return _normalized(X, series, "density")


def mean_presence_time(X: float, series: TimeSeriesObservable) -> tuple[float, float]:
    """int t D(t) dt / int D(t) dt over the simulated window (trapezoid rule)."""
    return _mean_time(X, series, "density")


def backflow_fraction(series: TimeSeriesObservable) -> float:
    w = _trapezoid_weights(series.times)
    total = np.dot(w, np.abs(series.values))
    if total == 0:
        return 0.0
    return float(-np.dot(w, np.minimum(series.values, 0.0)) / total)


def _check_backflow(X: float, series: TimeSeriesObservable, threshold: float):
    frac = backflow_fraction(series)
    if frac > threshold:
        raise BackflowDominant(f"reverse flux fraction {frac:.3f} at X={X} exceeds {threshold}")


def arrival_distribution(X: float, series: TimeSeriesObservable,
                         threshold: float = BACKFLOW_THRESHOLD) -> TimeSeriesObservable:
    """Flux series normalized to unit time integral; refuses when backflow is significant."""
    _check_backflow(X, series, threshold)
    return _normalized(X, series, "flux")


def mean_arrival_time(X: float, series: TimeSeriesObservable,
                      threshold: float = BACKFLOW_THRESHOLD) -> tuple[float, float]:
    _check_backflow(X, series, threshold)
    return _mean_time(X, series, "flux")


def transit_time(Xi: float, Xf: float, series_i: TimeSeriesObservable,
                 series_f: TimeSeriesObservable) -> tuple[float, float]:
    """Difference of mean presence times at Xf and Xi.

    Both series come from the same trajectories, so with block sums the error
    is a joint jackknife of the difference.
    """
    ti, ei = mean_presence_time(Xi, series_i)
    tf, ef = mean_presence_time(Xf, series_f)
    if series_i.has_blocks and series_f.has_blocks and len(series_i.block_counts) == len(series_f.block_counts):
        w = _trapezoid_weights(series_i.times)
        t = series_i.times
        k = series_i.times.size
        sums = np.column_stack([series_i.block_sums, series_f.block_sums])

        def stat(s):
            a, b = s[:k], s[k:]
            return np.dot(w * t, b) / np.dot(w, b) - np.dot(w * t, a) / np.dot(w, a)

        _, err = jackknife(stat, sums)
        return tf - ti, float(err)
    return tf - ti, math.hypot(ei, ef)


def time_delay(X: float, tunneling: TimeSeriesObservable, free: TimeSeriesObservable,
               threshold: float = BACKFLOW_THRESHOLD) -> tuple[float, float]:
    """Mean arrival time of the tunneling run minus that of the free run at X (independent runs)."""
    if tunneling.times.shape != free.times.shape or not np.allclose(tunneling.times, free.times):
        raise ValueError("tunneling and free series must share the time grid")
    a, ea = mean_arrival_time(X, tunneling, threshold)
    b, eb = mean_arrival_time(X, free, threshold)
    return a - b, math.hypot(ea, eb)


def count_lobes(series: TimeSeriesObservable, threshold: float = 0.1, min_gap_fraction: float = 0.02) -> int:
    """Number of separated excursions above threshold * peak.

    Runs of above-threshold points separated by fewer than
    ``min_gap_fraction`` of the grid are merged, so isolated noise dips do not
    split a lobe.
    """
    v = series.values
    if v.size == 0 or not np.any(v > 0):
        return 0
    above = v > threshold * v.max()
    min_gap = max(1, int(min_gap_fraction * v.size))
    lobes = 0
    gap = min_gap
    for flag in above:
        if flag:
            if gap >= min_gap:
                lobes += 1
            gap = 0
        else:
            gap += 1
    return lobes


def tail_fraction(series: TimeSeriesObservable, fraction: float = 0.05) -> float:
    """Share of the |series| integral in the last ``fraction`` of the window; flags truncation."""
    w = _trapezoid_weights(series.times)
    a = np.abs(series.values)
    total = np.dot(w, a)
    if total == 0:
        return 0.0
    cut = series.times[-1] - fraction * (series.times[-1] - series.times[0])
    return float(np.dot(w * (series.times >= cut), a) / total)
