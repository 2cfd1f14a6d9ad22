"""Scenario configuration files and the preset catalogue.

Configuration is INI-style text::

    [scenario]
    name = wide
    mode = quantum
    t_final = 227.9
    ensemble_size = 100000
    seed = 1
    n_snapshots = 512
    momentum_times = 175.5

    [packet]
    x0 = -92.5
    k0 = 1
    delta_k = 0.04          ; or sigma_x = 12.5

    [barrier]
    v0 = 1
    d = 0
    sigma = 5

    [numerics]
    dt = 0.05
    bandwidth = 0.5

    [detectors]
    positions = -25, -3.35, 0, 3.35, 25

Every value is in natural units. Unknown sections or keys are rejected with
their line number. ``emit_config`` writes the canonical form with 17
significant digits, which parses back to an equal configuration.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from pathlib import Path

from .core import DEFAULT_UNITS, BarrierSpec, PacketSpec, ScenarioConfig, to_natural
from .errors import ConfigError, IoError, ParseError, ValidationError

_FIELDS = {
    "scenario": {"name": str, "mode": str, "t_final": float, "ensemble_size": int, "seed": int,
                 "n_snapshots": int, "momentum_times": "floats"},
    "packet": {"x0": float, "k0": float, "sigma_x": float, "delta_k": float},
    "barrier": {"v0": float, "d": float, "sigma": float},
    "numerics": {"dt": float, "bandwidth": float, "epsilon_dprime": float, "jump_attempt_bias": float,
                 "characteristics": str, "jump_window": float, "max_jumps": int, "x_boundary": "optional_float"},
    "detectors": {"positions": "floats"},
}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _line_of(text: str, section: str | None, key: str | None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            m = re.match(r"^([^=:;#]+)[=:]", line)
            if m and m.group(1).strip().lower() == key:
                return i
    return None


def _convert(kind, raw: str, where: str, line: int | None):
    try:
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
        if kind == "optional_float":
            return None if raw.strip().lower() in ("", "none") else float(raw)
        if kind is int:
            v = float(raw)
            if not v.is_integer():
                raise ValueError
            return int(v)
        if kind is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError
            return v
        return raw.strip()
    except ValueError:
        raise ParseError(f"{where}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}", line) from None


def _read_sections(text: str) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None,
                                       default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("content before the first [section] header", exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ParseError("malformed line", line) from None
    out: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _FIELDS:
            raise ParseError(f"unknown section [{section}]", _line_of(text, section, None))
        values = {}
        for key, raw in parser.items(section):
            if key not in _FIELDS[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", _line_of(text, section, key))
            values[key] = _convert(_FIELDS[section][key], raw, f"[{section}] {key}", _line_of(text, section, key))
        out[section] = values
    return out


def _config_kwargs(config: ScenarioConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in dataclasses.fields(config)}


def config_from_text(text: str, preset: str | None = None) -> ScenarioConfig:
    sections = _read_sections(text)
    base = get_preset(preset) if preset else None
    if base is None and "packet" not in sections:
        raise ConfigError("a [packet] section is required without a preset")
    kw = _config_kwargs(base) if base else {}

    pk = sections.get("packet", {})
    if "sigma_x" in pk and "delta_k" in pk:
        raise ValidationError("packet_width_once", "give sigma_x or delta_k, not both")
    prev = base.packet if base else None
    x0 = pk.get("x0", prev.x0 if prev else None)
    k0 = pk.get("k0", prev.k0 if prev else 1.0)
    if x0 is None:
        raise ValidationError("packet_x0_given", "[packet] x0 is required")
    if "delta_k" in pk:
        kw["packet"] = PacketSpec.from_delta_k(x0, k0, pk["delta_k"])
    else:
        sx = pk.get("sigma_x", prev.sigma_x if prev else None)
        if sx is None:
            raise ValidationError("packet_width_given", "[packet] needs sigma_x or delta_k")
        kw["packet"] = PacketSpec(x0, k0, sx)

    bar = sections.get("barrier", {})
    prevb = base.barrier if base else BarrierSpec()
    kw["barrier"] = BarrierSpec(bar.get("v0", prevb.v0), bar.get("d", prevb.d), bar.get("sigma", prevb.sigma))

    for key, value in sections.get("scenario", {}).items():
        kw[key] = value
    for key, value in sections.get("numerics", {}).items():
        kw[key] = value
    if "positions" in sections.get("detectors", {}):
        kw["detectors"] = sections["detectors"]["positions"]
    if "t_final" not in kw:
        raise ValidationError("t_final_given", "[scenario] t_final is required without a preset")
    return ScenarioConfig(**kw)


def parse_config(source: str | Path | None = None, preset: str | None = None) -> ScenarioConfig:
    """Parse a config file path or inline text, optionally layered over a preset."""
    if source is None:
        if preset is None:
            raise ConfigError("need a config source or a preset")
        return get_preset(preset)
    text = str(source)
    if isinstance(source, Path) or (text.strip() and "\n" not in text and "[" not in text):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {source}: {exc}") from exc
    return config_from_text(text, preset)


def emit_config(config: ScenarioConfig) -> str:
    """Canonical text form; parses back to an equal configuration."""
    c = config
    lines = [
        "[scenario]",
        f"name = {c.name}",
        f"mode = {c.mode}",
        f"t_final = {_fmt(c.t_final)}",
        f"ensemble_size = {c.ensemble_size}",
        f"seed = {c.seed}",
        f"n_snapshots = {c.n_snapshots}",
        "momentum_times = " + ", ".join(_fmt(t) for t in c.momentum_times),
        "",
        "[packet]",
        f"x0 = {_fmt(c.packet.x0)}",
        f"k0 = {_fmt(c.packet.k0)}",
        f"sigma_x = {_fmt(c.packet.sigma_x)}",
        "",
        "[barrier]",
        f"v0 = {_fmt(c.barrier.v0)}",
        f"d = {_fmt(c.barrier.d)}",
        f"sigma = {_fmt(c.barrier.sigma)}",
        "",
        "[numerics]",
        f"dt = {_fmt(c.dt)}",
        f"bandwidth = {_fmt(c.bandwidth)}",
        f"epsilon_dprime = {_fmt(c.epsilon_dprime)}",
        f"jump_attempt_bias = {_fmt(c.jump_attempt_bias)}",
        f"characteristics = {c.characteristics}",
        f"jump_window = {_fmt(c.jump_window)}",
        f"max_jumps = {c.max_jumps}",
        f"x_boundary = {'none' if c.x_boundary is None else _fmt(c.x_boundary)}",
        "",
        "[detectors]",
        "positions = " + ", ".join(_fmt(x) for x in c.detectors),
        "",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------- presets

DETECTOR_MULTIPLES = (-5.0, -0.67, 0.0, 0.67, 5.0)
PROBE_MULTIPLE = 15.0


def _fs(t_fs: float) -> float:
    return float(to_natural(t_fs, "time", DEFAULT_UNITS))


def detector_set(sigma: float, probe: bool = False) -> tuple[float, ...]:
    mult = DETECTOR_MULTIPLES + ((PROBE_MULTIPLE,) if probe else ())
    return tuple(m * sigma for m in mult)


_PRESET_SPECS = {
    # name: (barrier sigma, delta_k, x0, t_final fs, momentum time fs)
    "narrow": (1.0, 0.125, -43.0, 250.0, 218.0),
    "wide": (5.0, 0.04, -92.5, 500.0, 385.0),
    "wide-fig1": (5.0, 0.125, -43.0, 250.0, 187.0),
}


def _build_preset(name: str) -> ScenarioConfig:
    free = name.endswith("-free")
    base = name[: -len("-free")] if free else name
    if base not in _PRESET_SPECS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    sigma, dk, x0, t_fs, mom_fs = _PRESET_SPECS[base]
    return ScenarioConfig(
        packet=PacketSpec.from_delta_k(x0, 1.0, dk),
        barrier=BarrierSpec(0.0 if free else 1.0, 0.0, sigma),
        t_final=_fs(t_fs),
        detectors=detector_set(sigma),
        momentum_times=(_fs(mom_fs),),
        name=name,
    )


def preset_names() -> list[str]:
    return [n for b in _PRESET_SPECS for n in (b, b + "-free")]


def get_preset(name: str) -> ScenarioConfig:
    return _build_preset(name)


PRESETS = {name: _build_preset(name) for name in preset_names()}
