"""Run configuration: TOML loading, defaults and validation.

Sections and keys::

    [system]     a1 a2 a3 b1 b2
    [grid]       N (required when a file is given) L
    [time]       T dt stride
    [data]       kind eps kappa x0 weights width delta path
    [experiment] name, [experiment.params] free-form table
    [output]     dir plots dumps
"""
from __future__ import annotations

import copy
import numbers
from pathlib import Path

import tomli

from .errors import ConfigError

EXPERIMENTS = ("simulate", "picard", "diagnose", "operator-check", "bilinear-probe", "refine")
DATA_KINDS = ("soliton+gaussian", "soliton", "gaussian", "dirac", "pv", "zero", "file")

DEFAULTS = {
    "system": {"a1": 0.5, "a2": 0.25, "a3": 0.4, "b1": 1.5, "b2": 0.8},
    "grid": {"N": 1024, "L": 100.0},
    "time": {"T": 1.0, "dt": 1e-3, "stride": 100},
    "data": {"kind": "soliton+gaussian", "eps": 0.1, "kappa": 1.0, "x0": 0.0,
             "weights": [0.5, 0.3], "width": 1.0, "delta": "gaussian", "path": ""},
    "experiment": {"name": "simulate", "params": {}},
    "output": {"dir": "", "plots": True, "dumps": False},
}

_TYPES = {
    ("system", "a1"): float, ("system", "a2"): float, ("system", "a3"): float,
    ("system", "b1"): float, ("system", "b2"): float,
    ("grid", "N"): int, ("grid", "L"): float,
    ("time", "T"): float, ("time", "dt"): float, ("time", "stride"): int,
    ("data", "kind"): str, ("data", "eps"): float, ("data", "kappa"): float,
    ("data", "x0"): float, ("data", "weights"): list, ("data", "width"): float,
    ("data", "delta"): str, ("data", "path"): str,
    ("experiment", "name"): str, ("experiment", "params"): dict,
    ("output", "dir"): str, ("output", "plots"): bool, ("output", "dumps"): bool,
}


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read a TOML file (if given), merge defaults and validate."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"not valid TOML: {exc}") from None
        if "N" not in raw.get("grid", {}):
            raise ConfigError("grid.N", "required key is missing")
    cfg = merge(DEFAULTS, raw)
    for section, values in (overrides or {}).items():
        cfg.setdefault(section, {}).update(values)
    return validate(cfg)


def merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for section, values in extra.items():
        if section not in base:
            raise ConfigError(section, "unknown section")
        if not isinstance(values, dict):
            raise ConfigError(section, "must be a table")
        for key, value in values.items():
            if key not in base[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            out[section][key] = copy.deepcopy(value)
    return out


def validate(cfg: dict) -> dict:
    for (section, key), kind in _TYPES.items():
        value = cfg[section][key]
        name = f"{section}.{key}"
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, numbers.Real):
                raise ConfigError(name, f"expected a number, got {value!r}")
            cfg[section][key] = float(value)
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, numbers.Integral):
                raise ConfigError(name, f"expected an integer, got {value!r}")
        elif not isinstance(value, kind):
            raise ConfigError(name, f"expected {kind.__name__}, got {value!r}")
    N = cfg["grid"]["N"]
    if N < 16 or N & (N - 1):
        raise ConfigError("grid.N", f"must be a power of two >= 16, got {N}")
    for name in ("grid.L", "time.T", "time.dt"):
        section, key = name.split(".")
        if not cfg[section][key] > 0:
            raise ConfigError(name, "must be positive")
    if cfg["time"]["dt"] > cfg["time"]["T"]:
        raise ConfigError("time.dt", "must not exceed time.T")
    if cfg["time"]["stride"] < 1:
        raise ConfigError("time.stride", "must be >= 1")
    if cfg["data"]["kind"] not in DATA_KINDS:
        raise ConfigError("data.kind", f"must be one of {', '.join(DATA_KINDS)}")
    weights = cfg["data"]["weights"]
    if len(weights) != 2 or not all(isinstance(w, numbers.Real) for w in weights):
        raise ConfigError("data.weights", "must be two numbers [w_u, w_v]")
    if cfg["data"]["kind"] == "file" and not cfg["data"]["path"]:
        raise ConfigError("data.path", "required when data.kind = 'file'")
    if cfg["experiment"]["name"] not in EXPERIMENTS:
        raise ConfigError("experiment.name", f"must be one of {', '.join(EXPERIMENTS)}")
    return cfg


def get_key(cfg: dict, dotted: str):
    """Look up ``section.key`` or ``experiment.params.key``."""
    parts = dotted.split(".")
    node = cfg
    try:
        for p in parts:
            node = node[p]
    except (KeyError, TypeError):
        raise ConfigError(dotted, "unknown key") from None
    return node


def set_key(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with a scalar key replaced."""
    out = copy.deepcopy(cfg)
    parts = dotted.split(".")
    if len(parts) < 2:
        raise ConfigError(dotted, "expected section.key")
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {}) if p == "params" else node.get(p)
        if not isinstance(node, dict):
            raise ConfigError(dotted, "unknown key")
    node[parts[-1]] = value
    return validate(out)


def is_scalar(value) -> bool:
    return isinstance(value, (numbers.Real, str))


def parse_scalar(text: str):
    """Interpret a command-line sweep value as int, float or string."""
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def dump_toml(cfg: dict) -> str:
    """Minimal TOML writer for resolved configs (tables of scalars and lists)."""
    lines = []

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    def table(prefix, d):
        scalars = {k: v for k, v in d.items() if not isinstance(v, dict)}
        nested = {k: v for k, v in d.items() if isinstance(v, dict)}
        lines.append(f"[{prefix}]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in scalars.items())
        lines.append("")
        for k, v in nested.items():
            table(f"{prefix}.{k}", v)

    for section, values in cfg.items():
        table(section, values)
    return "\n".join(lines)


def write_config(cfg: dict, path) -> Path:
    path = Path(path)
    path.write_text(dump_toml(cfg))
    return path
