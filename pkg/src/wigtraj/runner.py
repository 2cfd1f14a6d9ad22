"""Run orchestration, CSV output and run-to-run comparison."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import platform
import tempfile
import time as _time
from pathlib import Path

import numpy as np

from . import __version__
from .config import detector_set, emit_config, get_preset
from .core import DEFAULT_UNITS, ScenarioConfig, convert
from .errors import ComputeError, GridMismatch, IoError
from .observables import mean_arrival_time, mean_presence_time, tail_fraction, time_delay, transit_time
from .records import SNAPSHOT_COLUMNS, RunRecord, collect_run

DETECTOR_COLUMNS = ("time_natural", "time_fs", "detector_x", "density", "density_err", "flux", "flux_err")
MOMENTUM_COLUMNS = ("time_natural", "time_fs", "region", "p_lo", "p_hi", "mass", "mass_err")
TIMES_COLUMNS = ("name", "value_natural", "value_fs", "err", "err_fs", "status")
SCALAR_COLUMNS = ("name", "value", "err")


def _g(v) -> str:
    return format(float(v), ".17g")


def _label(v) -> str:
    """Shortest text that reads back to the same float."""
    return repr(float(v))


def _fs(v) -> float:
    return float(convert(v, "time", DEFAULT_UNITS))


def atomic_write(path: Path, text: str) -> None:
    """Whole-file write through a temp file in the same directory and a rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- derived times


def _time_entry(name, fn):
    try:
        value, err = fn()
        return (name, value, err, "ok")
    except ComputeError as exc:
        return (name, math.nan, math.nan, type(exc).__name__)


def derived_times(record: RunRecord, free: RunRecord | None = None) -> list[tuple[str, float, float, str]]:
    """Mean presence/arrival per detector, the transit time across +-0.67 sigma and delays behind the barrier."""
    rows = []
    b = record.config.barrier
    for x, dens, flux in zip(record.detectors, record.density, record.flux):
        rows.append(_time_entry(f"mean_presence@{_label(x)}", lambda d=dens, x=x: mean_presence_time(x, d)))
        rows.append(_time_entry(f"mean_arrival@{_label(x)}", lambda f=flux, x=x: mean_arrival_time(x, f)))
    xi, xf = b.d - 0.67 * b.sigma, b.d + 0.67 * b.sigma
    try:
        di, df = record.density_at(xi), record.density_at(xf)
        rows.append(_time_entry(f"transit@{_label(xi)}:{_label(xf)}", lambda: transit_time(xi, xf, di, df)))
    except KeyError:
        pass
    if free is not None:
        for x in record.detectors:
            if x > b.d:
                rows.append(_time_entry(f"delay@{_label(x)}",
                                        lambda x=x: time_delay(x, record.flux_at(x), free.flux_at(x))))
    return rows


def summary_scalars(record: RunRecord) -> list[tuple[str, float, float]]:
    c = record.snapshot_columns
    out = [
        ("transmission", c["trans_prob"][-1], c["trans_prob_err"][-1]),
        ("reflection", c["refl_prob"][-1], c["refl_prob_err"][-1]),
        ("norm", c["norm"][-1], c["norm_err"][-1]),
    ]
    for (t, region), h in sorted(record.momentum.items()):
        tag = f"{region}@{_label(t)}"
        out.append((f"momentum_mean_{tag}", h.mean, h.mean_err))
        out.append((f"momentum_var_{tag}", h.variance, h.variance_err))
        out.append((f"momentum_weight_{tag}", h.total_weight, math.nan))
    for x, dens in zip(record.detectors, record.density):
        out.append((f"density_tail_fraction@{_label(x)}", tail_fraction(dens), math.nan))
    for k, v in sorted(record.diagnostics.items()):
        if k != "wall_seconds":
            out.append((f"diag_{k}", v, math.nan))
    return out


# ---------------------------------------------------------------- writing


def write_record(record: RunRecord, out_dir: Path, free: RunRecord | None = None,
                 wall_seconds: float | None = None) -> dict:
    out_dir = Path(out_dir)
    t = record.times
    t_fs = np.array([_fs(v) for v in t])
    cols = record.snapshot_columns
    snap_rows = [[_g(t[i]), _g(t_fs[i])] + [_g(cols[c][i]) for c in SNAPSHOT_COLUMNS] for i in range(t.size)]
    atomic_write(out_dir / "snapshots.csv", _csv_text(("time_natural", "time_fs") + SNAPSHOT_COLUMNS, snap_rows))

    det_rows = []
    for x, dens, flux in zip(record.detectors, record.density, record.flux):
        for i in range(t.size):
            det_rows.append([_g(t[i]), _g(t_fs[i]), _g(x), _g(dens.values[i]), _g(dens.std_errors[i]),
                             _g(flux.values[i]), _g(flux.std_errors[i])])
    atomic_write(out_dir / "detectors.csv", _csv_text(DETECTOR_COLUMNS, det_rows))

    mom_rows = []
    for (tm, region), h in sorted(record.momentum.items()):
        for j in range(h.masses.size):
            mom_rows.append([_g(tm), _g(_fs(tm)), region, _g(h.bin_edges[j]), _g(h.bin_edges[j + 1]),
                             _g(h.masses[j]), _g(h.std_errors[j])])
    atomic_write(out_dir / "momentum.csv", _csv_text(MOMENTUM_COLUMNS, mom_rows))

    times = derived_times(record, free)
    time_rows = [[n, _g(v), _g(_fs(v)), _g(e), _g(_fs(e)), s] for n, v, e, s in times]
    atomic_write(out_dir / "times.csv", _csv_text(TIMES_COLUMNS, time_rows))

    scalars = summary_scalars(record)
    atomic_write(out_dir / "scalars.csv", _csv_text(SCALAR_COLUMNS, [[n, _g(v), _g(e)] for n, v, e in scalars]))

    manifest = {
        "name": record.name,
        "source": record.source,
        "mode": record.mode,
        "seed": record.config.seed,
        "ensemble_size": record.config.ensemble_size,
        "config": emit_config(record.config),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "diagnostics": {k: v for k, v in record.diagnostics.items() if k != "wall_seconds"},
        "wall_seconds": wall_seconds if wall_seconds is not None else record.diagnostics.get("wall_seconds"),
        "free_reference": free is not None,
    }
    # wall time lives only in the manifest; the CSVs stay byte-identical across reruns
    atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"times": times, "scalars": scalars, "out_dir": str(out_dir)}


def free_variant(config: ScenarioConfig) -> ScenarioConfig:
    return dataclasses.replace(config, barrier=dataclasses.replace(config.barrier, v0=0.0),
                               name=config.name if config.name.endswith("-free") else config.name + "-free")


def run_record(config: ScenarioConfig, solver: str = "mc") -> RunRecord:
    if solver == "mc":
        return collect_run(config)
    if solver == "oracle":
        from .oracle import record_from_oracle

        return record_from_oracle(config)
    raise ValueError(f"solver must be 'mc' or 'oracle', got {solver!r}")


def run_scenario(config: ScenarioConfig, out_dir, solver: str = "mc", with_free: bool = True) -> dict:
    """Run one scenario (plus its free-packet reference for delays) and write all outputs."""
    t0 = _time.perf_counter()
    record = run_record(config, solver)
    free = None
    if with_free and config.barrier.v0 != 0.0:
        free = run_record(free_variant(config), solver)
    report = write_record(record, Path(out_dir), free, _time.perf_counter() - t0)
    report["record"] = record
    report["free"] = free
    return report


# ---------------------------------------------------------------- comparison


@dataclasses.dataclass
class SeriesComparison:
    observable: str
    detector: float
    max_sigma: float
    max_rel_peak: float
    passed: bool


def compare_series(a_vals, a_err, b_vals, b_err, n_sigma: float = 3.0, rel_peak: float = 0.05):
    """Pointwise check |a - b| <= max(n_sigma * combined sigma, rel_peak * peak).

    The peak is the smaller of the two series' peaks, so a runaway series
    cannot widen its own tolerance. A comparison whose combined error exceeds
    that peak somewhere cannot resolve the signal; it is reported as not
    passed rather than vacuously within n_sigma.

    Returns (max deviation in sigma units, max deviation relative to peak, pass).
    """
    a_vals, b_vals = np.asarray(a_vals, float), np.asarray(b_vals, float)
    comb = np.hypot(np.asarray(a_err, float), np.asarray(b_err, float))
    diff = np.abs(a_vals - b_vals)
    if diff.size == 0:
        return 0.0, 0.0, True
    peak = min(float(np.max(np.abs(a_vals))), float(np.max(np.abs(b_vals))))
    with np.errstate(divide="ignore", invalid="ignore"):
        in_sigma = np.where(comb > 0, diff / comb, np.where(diff > 0, np.inf, 0.0))
        rel = diff / peak if peak > 0 else np.where(diff > 0, np.inf, 0.0)
    tol = np.maximum(n_sigma * comb, rel_peak * peak)
    informative = bool(np.all(comb <= peak)) if peak > 0 else bool(np.all(comb == 0))
    ok = bool(np.all(np.isfinite(diff)) and np.all(diff <= tol) and informative)
    return float(np.max(in_sigma)), float(np.max(rel)), ok


def compare_records(a: RunRecord, b: RunRecord, n_sigma: float = 3.0, rel_peak: float = 0.05) -> dict:
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=1e-12, atol=1e-12):
        raise GridMismatch("time grids differ")
    if len(a.detectors) != len(b.detectors) or not np.allclose(a.detectors, b.detectors):
        raise GridMismatch("detector sets differ")
    rows = []
    for x, da, fa, db, fb in zip(a.detectors, a.density, a.flux, b.density, b.flux):
        for name, sa, sb in (("density", da, db), ("flux", fa, fb)):
            s, r, ok = compare_series(sa.values, sa.std_errors, sb.values, sb.std_errors, n_sigma, rel_peak)
            rows.append(SeriesComparison(name, x, s, r, ok))
    ta, tea = a.final_transmission()
    tb, teb = b.final_transmission()
    ratio = ta / tb if tb != 0 else math.inf
    return {"series": rows, "passed": all(r.passed for r in rows), "transmission_a": ta, "transmission_a_err": tea,
            "transmission_b": tb, "transmission_b_err": teb, "transmission_ratio": ratio}


def read_run(out_dir) -> dict:
    """Load detector series and final transmission from a run directory."""
    out_dir = Path(out_dir)
    try:
        with open(out_dir / "detectors.csv", newline="", encoding="utf-8") as fh:
            det = list(csv.DictReader(fh))
        with open(out_dir / "snapshots.csv", newline="", encoding="utf-8") as fh:
            snaps = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read run in {out_dir}: {exc}") from exc
    series: dict[float, dict[str, list[float]]] = {}
    for row in det:
        s = series.setdefault(float(row["detector_x"]), {k: [] for k in DETECTOR_COLUMNS if k != "detector_x"})
        for k in s:
            s[k].append(float(row[k]))
    return {
        "times": np.array([float(r["time_natural"]) for r in snaps]),
        "series": {x: {k: np.array(v) for k, v in s.items()} for x, s in series.items()},
        "transmission": float(snaps[-1]["trans_prob"]) if snaps else math.nan,
        "transmission_err": float(snaps[-1]["trans_prob_err"]) if snaps else math.nan,
    }


def compare(dir_a, dir_b, n_sigma: float = 3.0, rel_peak: float = 0.05) -> dict:
    a, b = read_run(dir_a), read_run(dir_b)
    if a["times"].shape != b["times"].shape or not np.allclose(a["times"], b["times"], rtol=1e-12, atol=1e-12):
        raise GridMismatch("time grids differ")
    if sorted(a["series"]) != sorted(b["series"]):
        raise GridMismatch("detector sets differ")
    rows = []
    for x in sorted(a["series"]):
        sa, sb = a["series"][x], b["series"][x]
        if not np.allclose(sa["time_natural"], sb["time_natural"], rtol=1e-12, atol=1e-12):
            raise GridMismatch(f"detector {x}: time grids differ")
        for name in ("density", "flux"):
            s, r, ok = compare_series(sa[name], sa[name + "_err"], sb[name], sb[name + "_err"], n_sigma, rel_peak)
            rows.append(SeriesComparison(name, x, s, r, ok))
    ratio = a["transmission"] / b["transmission"] if b["transmission"] != 0 else math.inf
    return {"series": rows, "passed": all(r.passed for r in rows), "transmission_a": a["transmission"],
            "transmission_a_err": a["transmission_err"], "transmission_b": b["transmission"],
            "transmission_b_err": b["transmission_err"], "transmission_ratio": ratio}


def format_comparison(report: dict) -> str:
    lines = [f"{'observable':<8} {'detector':>10} {'max dev/sigma':>14} {'max dev/peak':>13}  result"]
    for r in report["series"]:
        lines.append(f"{r.observable:<8} {r.detector:>10.4g} {r.max_sigma:>14.3g} {r.max_rel_peak:>13.3g}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    lines.append(f"transmission A = {report['transmission_a']:.6g} +- {report['transmission_a_err']:.2g}, "
                 f"B = {report['transmission_b']:.6g} +- {report['transmission_b_err']:.2g}, "
                 f"A/B = {report['transmission_ratio']:.4g}")
    lines.append("overall: " + ("PASS" if report["passed"] else "FAIL"))
    return "\n".join(lines)


# ---------------------------------------------------------------- full reproduction


def _with_probe(config: ScenarioConfig, **changes) -> ScenarioConfig:
    return dataclasses.replace(config, detectors=detector_set(config.barrier.sigma, probe=True), **changes)


def reproduce_presets(out_dir, ensemble_size: int | None = None, seed: int = 1,
                      presets: tuple[str, ...] = ("narrow", "wide")) -> dict:
    """Per preset: quantum and classical MC, free references and the oracle, plus comparisons.

    Returns the headline numbers; everything is also written below ``out_dir``.
    """
    out = Path(out_dir)
    summary = {}
    for name in presets:
        base = get_preset(name)
        kw = {"seed": seed}
        if ensemble_size is not None:
            kw["ensemble_size"] = ensemble_size
        quantum = _with_probe(base, **kw)
        classical = dataclasses.replace(quantum, mode="classical", name=name + "-classical")
        runs = {
            "quantum": run_scenario(quantum, out / name / "quantum"),
            "classical": run_scenario(classical, out / name / "classical", with_free=False),
            "oracle": run_scenario(quantum, out / name / "oracle", solver="oracle"),
        }
        free_oracle = runs["oracle"]["free"]
        write_record(runs["quantum"]["free"], out / name / "quantum-free")
        write_record(free_oracle, out / name / "oracle-free")
        cmp_oracle = compare_records(runs["quantum"]["record"], runs["oracle"]["record"])
        cmp_mode = compare_records(runs["quantum"]["record"], runs["classical"]["record"])
        summary[name] = {
            "times": {src: {n: (v, e, s) for n, v, e, s in runs[src]["times"]} for src in ("quantum", "oracle")},
            "free_times": {src: {n: (v, e, s) for n, v, e, s in derived_times(runs[src]["free"])}
                           for src in ("quantum", "oracle")},
            "transmission": {src: runs[src]["record"].final_transmission() for src in runs},
            "oracle_comparison": cmp_oracle,
            "mode_comparison": cmp_mode,
        }
        atomic_write(out / name / "compare-quantum-oracle.txt", format_comparison(cmp_oracle) + "\n")
        atomic_write(out / name / "compare-quantum-classical.txt", format_comparison(cmp_mode) + "\n")
    table = format_headline(summary)
    atomic_write(out / "summary.txt", table + "\n")
    summary["table"] = table
    return summary


def format_headline(summary: dict) -> str:
    lines = [f"{'preset':<7} {'source':<7} {'quantity':<28} {'value [fs]':>12} {'err [fs]':>10}  status"]
    for name in ("narrow", "wide"):
        if name not in summary:
            continue
        s = summary[name]
        for src in ("quantum", "oracle"):
            for key, (v, e, st) in s["times"][src].items():
                if key.startswith(("transit", "delay")):
                    lines.append(f"{name:<7} {src:<7} {key:<28} {_fs(v):>12.4g} {_fs(e):>10.3g}  {st}")
            for key, (v, e, st) in s["free_times"][src].items():
                if key.startswith("transit"):
                    lines.append(f"{name:<7} {src:<7} {'free ' + key:<28} {_fs(v):>12.4g} {_fs(e):>10.3g}  {st}")
        for src, (tv, te) in s["transmission"].items():
            lines.append(f"{name:<7} {src:<7} {'transmission':<28} {tv:>12.4g} {te:>10.3g}  (probability)")
        lines.append(f"{name:<7} {'':<7} {'MC vs oracle':<28} {'PASS' if s['oracle_comparison']['passed'] else 'FAIL':>12}")
    return "\n".join(lines)
