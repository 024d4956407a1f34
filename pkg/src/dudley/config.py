"""Experiment configuration: typed fields, per-command defaults, file loading.

Config files are INI style with an optional ``[common]`` section and one
section per subcommand. Precedence is flag > ``[command]`` > ``[common]`` >
built-in default. Unknown sections and keys are errors that name the line.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import SCHEMES
from .errors import ConfigError, InvalidParams

COMMANDS = ("simulate", "tangent", "green", "scaling-test", "theorem1", "cone",
            "capacity", "wiener", "bch-check", "selftest")


def _float(v) -> float:
    return float(v)


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).replace(" ", "").split(",") if x)


def _probes(v) -> tuple[tuple[float, ...], ...]:
    if isinstance(v, (list, tuple)):
        return tuple(tuple(float(x) for x in p) for p in v)
    return tuple(_floats(p) for p in str(v).split(";") if p.strip())


def _slices(v) -> tuple[int, int]:
    if isinstance(v, (list, tuple)):
        a, b = v
    else:
        a, b = str(v).split(":")
    return int(a), int(b)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _names(v) -> tuple[str, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(str(x) for x in v)
    return tuple(x for x in str(v).replace(" ", "").split(",") if x)


# name -> (parser, check, message)
FIELDS = {
    "d": (int, lambda v: 2 <= v <= 6, "must be in 2..6"),
    "seed": (int, lambda v: v >= 0, "must be >= 0"),
    "paths": (int, lambda v: v >= 1, "must be >= 1"),
    "h": (_float, lambda v: 0 < v < math.inf, "must be positive"),
    "s": (int, lambda v: v >= 1, "must be >= 1"),
    "T": (_float, lambda v: 0 < v < math.inf, "must be positive"),
    "R": (_float, lambda v: v > 0, "must be positive"),
    "sigma": (_float, lambda v: 0 < v < math.inf, "must be positive"),
    "scheme": (str, lambda v: v in SCHEMES, f"must be one of {', '.join(SCHEMES)}"),
    "eps": (_floats, lambda v: len(v) > 0 and all(0 < e <= 1 for e in v), "values must lie in (0, 1]"),
    "lam": (_float, lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "slices": (_slices, lambda v: 0 <= v[0] <= v[1], "must be n0:n1 with 0 <= n0 <= n1"),
    "probes": (_probes, lambda v: len(v) > 0, "needs at least one probe"),
    "probe_file": (str, lambda v: bool(v), "must be a path"),
    "probe_axis": (_bool, lambda v: True, ""),
    "widths": (_floats, lambda v: len(v) == 3 and all(w > 0 for w in v), "needs three positive widths"),
    "replications": (int, lambda v: v >= 1, "must be >= 1"),
    "t": (_floats, lambda v: len(v) > 0 and all(x > 0 for x in v), "times must be positive"),
    "c": (_float, lambda v: -1 < v < 1, "must lie in (-1, 1)"),
    "past": (_bool, lambda v: True, ""),
    "trials": (int, lambda v: v >= 1, "must be >= 1"),
    "record_every": (int, lambda v: v >= 1, "must be >= 1"),
    "cells": (int, lambda v: 2 <= v <= 12, "must be in 2..12"),
    "max_sources": (int, lambda v: v >= 1, "must be >= 1"),
    "weight": (str, lambda v: v in ("classical", "inverse"), "must be classical or inverse"),
    "input": (str, lambda v: bool(v), "must be a path"),
    "pairs": (int, lambda v: v >= 1, "must be >= 1"),
    "suites": (_names, lambda v: len(v) > 0, "needs at least one suite"),
    "out": (str, lambda v: bool(v), "must be a path"),
    "format": (str, lambda v: v in ("csv", "json"), "must be csv or json"),
    "plot": (_bool, lambda v: True, ""),
}

COMMON = ("d", "seed", "paths", "h", "s", "sigma", "scheme", "out", "format", "plot")

COMMAND_FIELDS = {
    "simulate": ("T", "R", "record_every"),
    "tangent": ("T", "record_every"),
    "green": ("R", "probes", "probe_file", "widths"),
    "scaling-test": ("eps", "t", "trials"),
    "theorem1": ("eps", "probe_axis", "probes", "widths", "R", "replications"),
    "cone": ("c", "past", "t"),
    "capacity": ("lam", "slices", "cells", "max_sources", "R", "c"),
    "wiener": ("lam", "slices", "cells", "max_sources", "R", "c", "weight", "input"),
    "bch-check": ("pairs", "eps"),
    "selftest": ("suites",),
}

BASE = {"d": 2, "seed": 0, "paths": 1000, "h": 1e-3, "s": 1, "sigma": 1.0,
        "scheme": "exponential-euler", "format": "csv", "plot": True}

DEFAULTS = {
    "simulate": {"paths": 100, "T": 1.0, "R": math.inf, "record_every": 10},
    "tangent": {"paths": 100, "T": 1.0, "record_every": 10, "s": 4},
    "green": {"paths": 10000, "h": 1e-2, "s": 8, "R": 1.0, "widths": (0.5, 0.25, 0.25)},
    "scaling-test": {"paths": 10000, "s": 4, "eps": (0.5,), "t": (1.0,), "trials": 1,
                     "format": "json"},
    "theorem1": {"paths": 200000, "h": 1e-2, "s": 8, "eps": (0.4, 0.2, 0.1),
                 "probe_axis": True, "widths": (0.5, 0.25, 0.25), "R": 1.0, "replications": 1,
                 "scheme": "exponential-midpoint", "format": "json"},
    "cone": {"paths": 10000, "h": 1e-5, "c": 0.3, "past": False, "t": (0.01,)},
    "capacity": {"paths": 2000, "h": 1e-2, "s": 8, "lam": 0.5, "slices": (0, 3), "cells": 5,
                 "max_sources": 16, "R": 1.0, "c": 0.3, "scheme": "exponential-midpoint"},
    "wiener": {"paths": 2000, "h": 1e-2, "s": 8, "lam": 0.5, "slices": (0, 3), "cells": 5,
               "max_sources": 16, "R": 1.0, "c": 0.3, "weight": "classical",
               "scheme": "exponential-midpoint", "format": "json"},
    "bch-check": {"pairs": 1000, "eps": (0.1, 0.05, 0.025), "format": "json"},
    "selftest": {"suites": ("algebra", "grading", "bch", "driver"), "format": "json"},
}

# settings that change where or how results are shown but not the numbers
PRESENTATION = ("out", "format", "plot")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def get(self, name, default=None):
        return self.values.get(name, default)

    def digest_fields(self) -> dict:
        return {"command": self.command,
                **{k: v for k, v in sorted(self.values.items()) if k not in PRESENTATION}}

    def as_dict(self) -> dict:
        return {"command": self.command, **dict(sorted(self.values.items()))}


def allowed(command: str) -> tuple[str, ...]:
    return COMMON + COMMAND_FIELDS[command]


def _key(name: str) -> str:
    return name.strip().replace("-", "_")


def parse_value(name: str, raw, flag: str | None = None):
    where = flag or name
    if name not in FIELDS:
        raise InvalidParams(f"unknown setting {where}")
    conv, check, msg = FIELDS[name]
    try:
        v = conv(raw)
    except (TypeError, ValueError) as exc:
        raise InvalidParams(f"{where}: cannot parse {raw!r} ({exc})") from None
    if not check(v):
        raise InvalidParams(f"{where}: {msg}, got {raw!r}")
    return v


def _line_of(lines: list[str], section: str, key: str | None) -> int:
    sec = None
    for no, line in enumerate(lines, 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return no
            continue
        if sec == section and key is not None:
            m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and _key(m.group(1)) == key:
                return no
    return 0


def read_file(path, command: str) -> dict:
    """Settings for ``command`` from a config file, validated key by key."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0)
        raise ConfigError(f"{path}:{line}: {exc.message.splitlines()[0]}") from None
    out = {}
    for sec in cp.sections():
        if sec != "common" and sec not in COMMANDS:
            raise ConfigError(f"{path}:{_line_of(lines, sec, None)}: unknown section [{sec}]")
    for sec in ("common", command):
        if not cp.has_section(sec):
            continue
        ok = allowed(command) if sec == command else tuple(FIELDS)
        for raw_key, raw in cp.items(sec):
            key = _key(raw_key)
            line = _line_of(lines, sec, key)
            if key not in ok:
                raise ConfigError(f"{path}:{line}: unknown key '{raw_key}' in [{sec}]")
            try:
                v = parse_value(key, raw)
            except InvalidParams as exc:
                raise ConfigError(f"{path}:{line}: {exc}") from None
            if sec == "common" and key not in allowed(command):
                continue
            out[key] = v
    # other command sections are validated too, so typos never hide
    for sec in cp.sections():
        if sec in ("common", command):
            continue
        for raw_key, _ in cp.items(sec):
            if _key(raw_key) not in allowed(sec):
                line = _line_of(lines, sec, _key(raw_key))
                raise ConfigError(f"{path}:{line}: unknown key '{raw_key}' in [{sec}]")
    return out


def build(command: str, file_values: dict | None = None, flags: dict | None = None) -> ExperimentConfig:
    if command not in COMMANDS:
        raise InvalidParams(f"unknown command {command!r}")
    vals = {k: v for k, v in BASE.items() if k in allowed(command)}
    vals.update(DEFAULTS[command])
    vals.update(file_values or {})
    for k, raw in (flags or {}).items():
        vals[k] = parse_value(k, raw, "--" + k.replace("_", "-"))
    _cross_check(command, vals)
    return ExperimentConfig(command, vals)


def config_load(path, command: str, flags: dict | None = None) -> ExperimentConfig:
    """Validated config from a file, with flags taking precedence."""
    return build(command, read_file(path, command) if path else {}, flags)


def _cross_check(command: str, v: dict):
    d = v["d"]
    n = 2 * d + 1 + d * (d - 1) // 2
    if "probes" in v:
        for p in v["probes"]:
            if len(p) != n:
                raise InvalidParams(f"--probes: each probe needs {n} coordinates for d={d}, got {len(p)}")
    if "T" in v and "h" in v and v["T"] < v["h"]:
        raise InvalidParams(f"--T: horizon {v['T']} is shorter than the step {v['h']}")
    if command in ("theorem1",) and any(b >= a for a, b in zip(v["eps"], v["eps"][1:])):
        raise InvalidParams("--eps: the ladder must be strictly decreasing")
    if command == "selftest":
        from .selftest import SUITES
        bad = [s for s in v["suites"] if s not in SUITES]
        if bad:
            raise InvalidParams(f"--suites: unknown suite(s) {', '.join(bad)}")
    if command == "cone" and not v.get("past") and not v["c"] > 0:
        raise InvalidParams("--c: a future cone needs c > 0")


def load_probes(path, d: int) -> np.ndarray:
    """Probe coordinates from a CSV file (header optional, one probe per row)."""
    n = 2 * d + 1 + d * (d - 1) // 2
    rows = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidParams(f"--probe-file: {exc.strerror}: {path}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = [float(x) for x in line.split(",")]
        except ValueError:
            if not rows:
                continue  # header
            raise InvalidParams(f"--probe-file: {path}:{no}: not numeric") from None
        if len(vals) != n:
            raise InvalidParams(f"--probe-file: {path}:{no}: expected {n} values, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise InvalidParams(f"--probe-file: {path} holds no probes")
    return np.array(rows)
