"""Command line: ``wigtraj {run,oracle,compare,presets,reproduce-paper}``.

Exit codes: 0 ok, 2 configuration error, 3 compute error, 4 I/O error,
5 comparison ran but failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import emit_config, get_preset, parse_config, preset_names
from .core import DEFAULT_UNITS, convert
from .errors import ComparisonFailed, ConfigError, WigtrajError


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="named preset (see `wigtraj presets`)")
    p.add_argument("--config", help="INI config file, layered over --preset if both are given")
    p.add_argument("--seed", type=int)
    p.add_argument("--ensemble", type=int, help="number of trajectories")
    p.add_argument("--mode", choices=("quantum", "classical"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-free", action="store_true", help="skip the free-packet reference run")


def _scenario(args):
    if args.config:
        cfg = parse_config(args.config, args.preset)
    elif args.preset:
        cfg = get_preset(args.preset)
    else:
        raise ConfigError("give --preset and/or --config")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.ensemble is not None:
        changes["ensemble_size"] = args.ensemble
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _print_times(report) -> None:
    for name, v, e, status in report["times"]:
        if status == "ok":
            print(f"{name:<32} {convert(v, 'time', DEFAULT_UNITS):>12.5g} fs  +- {convert(e, 'time', DEFAULT_UNITS):.3g}")
        else:
            print(f"{name:<32} {'n/a':>12}     ({status})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wigtraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="Monte Carlo run")
    _add_scenario_args(p)
    p = sub.add_parser("oracle", help="split-step Schroedinger reference run")
    _add_scenario_args(p)
    p = sub.add_parser("compare", help="compare detector series of two run directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--rel-peak", type=float, default=0.05)
    p = sub.add_parser("presets", help="list presets or print one as config text")
    p.add_argument("name", nargs="?")
    p = sub.add_parser("reproduce-paper", help="both presets, all modes, oracle and comparisons")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ensemble", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "oracle"):
            from .runner import run_scenario

            cfg = _scenario(args)
            report = run_scenario(cfg, args.out, solver="mc" if args.command == "run" else "oracle",
                                  with_free=not args.no_free)
            _print_times(report)
            print(f"outputs written to {args.out}")
        elif args.command == "compare":
            from .runner import compare, format_comparison

            report = compare(args.dir_a, args.dir_b, args.sigma, args.rel_peak)
            print(format_comparison(report))
            if not report["passed"]:
                raise ComparisonFailed("comparison failed")
        elif args.command == "presets":
            if args.name:
                print(emit_config(get_preset(args.name)), end="")
            else:
                for n in preset_names():
                    print(n)
        elif args.command == "reproduce-paper":
            from .runner import reproduce_presets

            summary = reproduce_presets(args.out, args.ensemble, args.seed)
            print(summary["table"])
    except WigtrajError as exc:
        print(f"wigtraj: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
