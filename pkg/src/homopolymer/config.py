"""Run configuration: a key=value file with one section per subcommand, overridable by flags.

    [kernel]
    d = 1
    beta = -1
    t = 50

A ``[common]`` section applies to every subcommand. Errors name the field as
``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .lattice import DIMENSIONS


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v) -> float:
    f = float(v)
    if math.isnan(f):
        raise ValueError("expected a number, got nan")
    return f


def _site(v) -> tuple[int, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(_int(a) for a in v)
    return tuple(_int(a) for a in str(v).replace(" ", "").split(",") if a != "")


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(_float(a) for a in v)
    return tuple(_float(a) for a in str(v).replace(" ", "").split(",") if a != "")


def _ints(v) -> tuple[int, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(_int(a) for a in v)
    return tuple(_int(a) for a in str(v).replace(" ", "").split(",") if a != "")


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _choice(*options):
    def parse(v):
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v

    return parse


def _positive(x):
    return None if x > 0 else "must be positive"


def _nonneg(x):
    return None if x >= 0 else "must be nonnegative"


def _dim(x):
    return None if x in DIMENSIONS else f"must be one of {DIMENSIONS}"


@dataclass(frozen=True)
class FieldSpec:
    parse: Callable[[Any], Any]
    default: Any = None
    check: Callable[[Any], str | None] | None = None


COMMON = {
    "out": FieldSpec(str, None),
    "threads": FieldSpec(_int, None, lambda x: None if x is None or x >= 1 else "must be at least 1"),
}

_D = FieldSpec(_int, 1, _dim)
_BETA = FieldSpec(_float, -1.0)
_SEED = FieldSpec(_int, None, _nonneg)

SCHEMA: dict[str, dict[str, FieldSpec]] = {
    "resolvent": {
        "d": _D,
        "lam": FieldSpec(_float, 1.0),
        "lam_imag": FieldSpec(_float, 0.0),
        "x": FieldSpec(_site, None),
        "route": FieldSpec(_choice("auto", "closed", "tensor", "reduced"), "auto"),
    },
    "kernel": {
        "d": _D,
        "beta": _BETA,
        "t": FieldSpec(_float, 10.0, _nonneg),
        "radius": FieldSpec(_int, None, lambda x: None if x is None or x >= 10 else "must be at least 10"),
        "source": FieldSpec(_site, None),
        "method": FieldSpec(_choice("uniformization", "rk4"), "uniformization"),
    },
    "partition": {
        "d": _D,
        "beta": _BETA,
        "t": FieldSpec(_floats, (10.0,), lambda ts: None if ts and min(ts) >= 0 else "must be nonnegative times"),
        "radius": FieldSpec(_int, None, lambda x: None if x is None or x >= 10 else "must be at least 10"),
    },
    "psi": {
        "d": _D,
        "beta": _BETA,
        "x": FieldSpec(_site, None),
        "route": FieldSpec(_choice("martin", "escape"), "martin"),
    },
    "lambda": {"d": _D, "beta": _BETA},
    "simulate-q": {
        "d": _D,
        "beta": _BETA,
        "start": FieldSpec(_site, None),
        "horizon": FieldSpec(_float, 100.0, _nonneg),
        "n": FieldSpec(_int, 1000, _positive),
        "seed": _SEED,
    },
    "sample-polymer": {
        "d": _D,
        "beta": _BETA,
        "t": FieldSpec(_float, 100.0, _nonneg),
        "n": FieldSpec(_int, 1000, _positive),
        "seed": _SEED,
        "ess_floor": FieldSpec(_float, 0.05, lambda x: None if 0 <= x <= 1 else "must lie in [0, 1]"),
    },
    "limits": {
        "beta": _BETA,
        "t": FieldSpec(_float, 200.0, _nonneg),
        "n": FieldSpec(_int, 20_000, _positive),
        "seed": _SEED,
        "occupation_threshold": FieldSpec(_float, 0.03, _positive),
        "visits_threshold": FieldSpec(_float, 0.02, _positive),
        "last_zero_threshold": FieldSpec(_float, 0.04, _positive),
    },
    "scaling": {
        "source": FieldSpec(_choice("Q0", "polymer"), "Q0"),
        "beta": _BETA,
        "n_time": FieldSpec(_float, 2500.0, _positive),
        "n": FieldSpec(_int, 20_000, _positive),
        "seed": _SEED,
        "threshold": FieldSpec(_float, None, _positive),
        "multitime": FieldSpec(_bool, False),
    },
    "wetting": {
        "mode": FieldSpec(_choice("identity", "kernel", "reflected"), "identity"),
        "beta_prime": FieldSpec(_float, 0.0),
        "t": FieldSpec(_float, 50.0, _nonneg),
        "x": FieldSpec(_int, 0, _nonneg),
        "length": FieldSpec(_int, None, lambda x: None if x is None or x >= 10 else "must be at least 10"),
        "n_time": FieldSpec(_float, 2500.0, _nonneg),
        "n": FieldSpec(_int, 20_000, _positive),
        "seed": _SEED,
    },
    "accept": {
        "only": FieldSpec(_ints, (), lambda xs: None if all(1 <= x <= 11 for x in xs) else "criteria are numbered 1..11"),
        "seed": _SEED,
    },
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def read_file(path: str | Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(path), f"malformed config file ({exc.__class__.__name__})") from exc
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config file: {exc.strerror}") from exc
    for section in parser.sections():
        if section != "common" and section not in SCHEMA:
            raise ConfigError(section, "unknown section")
    return {s: dict(parser[s]) for s in parser.sections()}


def resolve(subcommand: str, file_values: dict[str, dict[str, str]] | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file's [common] and [subcommand] sections, then flags."""
    if subcommand not in SCHEMA:
        raise ConfigError(subcommand, "unknown subcommand")
    specs = {**COMMON, **SCHEMA[subcommand]}
    raw: dict[str, tuple[str, Any]] = {}
    file_values = file_values or {}
    for section in ("common", subcommand):
        for key, val in file_values.get(section, {}).items():
            if key not in specs:
                raise ConfigError(f"{section}.{key}", "unknown field")
            if section == "common" and key not in COMMON:
                raise ConfigError(f"{section}.{key}", "field is not allowed in [common]")
            raw[key] = (f"{section}.{key}", val)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in specs:
            raise ConfigError(f"{subcommand}.{key}", "unknown field")
        raw[key] = (f"{subcommand}.{key}", val)
    values = {}
    for key, spec in specs.items():
        if key in raw:
            where, val = raw[key]
            try:
                parsed = spec.parse(val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(where, str(exc) or "invalid value") from exc
        else:
            where, parsed = f"{subcommand}.{key}", spec.default
        if spec.check is not None and parsed is not None:
            problem = spec.check(parsed)
            if problem:
                raise ConfigError(where, problem)
        values[key] = parsed
    return RunConfig(subcommand, values)
