"""Run configuration: INI files with one section per subcommand.

Example::

    [diffuse]
    T = 25
    N = 500
    steps = 3000

Every key is typed and range-checked; unknown sections and keys are errors.
Vectors are comma-separated numbers.  Missing keys take the defaults below,
which for ``diffuse`` and ``dispatch`` are the published experiment settings.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError

OUTPUT_DIR_ENV = "HOPFIELD_FLOWS_OUTPUT_DIR"

SUBCOMMANDS = ("descend", "geodesic", "dispatch", "diffuse")


def _float(name, text):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    return v


def _int(name, text):
    try:
        f = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an integer, got {text!r}") from None
    if not f.is_integer():
        raise ConfigError(f"{name}: expected an integer, got {text!r}")
    return int(f)


def _bool(name, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {text!r}")


def _vector(name, text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{name}: empty vector")
    return [_float(name, p) for p in parts]


def _str(name, text):
    return str(text).strip()


@dataclass(frozen=True)
class Key:
    parse: object
    default: object = None
    check: object = None  # callable(value) -> error message or None
    choices: tuple = ()
    help: str = ""


def positive(v):
    return None if v > 0 else "must be positive"


def nonnegative(v):
    return None if v >= 0 else "must be nonnegative"


def open_unit(v):
    vals = v if isinstance(v, list) else [v]
    return None if all(0.0 < x < 1.0 for x in vals) else "entries must lie strictly inside (0, 1)"


_ACT = {
    "activation": Key(_str, "soft_projection", choices=("soft_projection", "logistic"), help="activation family"),
    "beta": Key(_float, 1.0, positive, help="activation steepness"),
}
_OBJ = {
    "objective": Key(_str, "himmelblau", choices=("himmelblau", "quadratic", "linear"), help="objective name"),
    "center": Key(_vector, None, open_unit, help="quadratic center"),
    "scale": Key(_float, 1.0, positive, help="quadratic scale"),
    "p": Key(_vector, None, help="linear coefficients"),
}
_COMMON = {
    "seed": Key(_int, 0, nonnegative, help="random seed"),
    "output_dir": Key(_str, ".", help="directory for CSV outputs"),
    "record_timing": Key(_bool, True, help="record wall-clock columns (false writes zeros)"),
}

SCHEMAS = {
    "descend": {
        **_ACT,
        **_OBJ,
        **_COMMON,
        "method": Key(_str, "natural", choices=("natural", "mirror", "prox", "rk4"), help="descent method"),
        "dim": Key(_int, 2, positive, help="state dimension"),
        "x0": Key(_vector, None, open_unit, help="initial point (default 0.5 in every coordinate)"),
        "h": Key(_float, 1e-3, positive, help="step size"),
        "steps": Key(_int, 10_000, nonnegative, help="number of steps"),
    },
    "geodesic": {
        **_ACT,
        **_COMMON,
        "dim": Key(_int, 2, positive, help="state dimension"),
        "x": Key(_vector, None, open_unit, help="start point"),
        "y": Key(_vector, None, open_unit, help="end point"),
        "samples": Key(_int, 101, lambda v: None if v >= 2 else "must be at least 2", help="curve samples"),
        "method": Key(_str, "auto", choices=("auto", "closed", "shooting"), help="solver"),
    },
    "dispatch": {
        **_COMMON,
        "n_G": Key(_int, 40, positive, help="number of generators"),
        "restarts": Key(_int, 100, positive, help="Monte Carlo restarts"),
        "h_hopfield": Key(_float, 1e-2, positive, help="Hopfield step size"),
        "h_dual": Key(_float, 1e-1, positive, help="dual ascent step size"),
        "r": Key(_float, 1.0, positive, help="augmented Lagrangian penalty"),
        "tol": Key(_float, 1e-7, positive, help="sub-iteration stopping tolerance"),
        "max_subiters": Key(_int, 10_000, positive, help="sub-iteration cap"),
        "residual_tol": Key(_float, 1e-3, positive, help="constraint residual tolerance"),
        "max_outer": Key(_int, 500, positive, help="outer iteration cap"),
        "beta": Key(_float, 1.0, positive, help="soft-projection steepness"),
    },
    "diffuse": {
        **_ACT,
        **_OBJ,
        **_COMMON,
        "beta": Key(_float, 0.25, positive, help="activation steepness"),
        "dim": Key(_int, 2, positive, help="state dimension n"),
        "T": Key(_float, 25.0, positive, help="temperature"),
        "N": Key(_int, 500, positive, help="particle count"),
        "h": Key(_float, 1e-4, positive, help="time step"),
        "eps": Key(_float, 0.1, positive, help="entropic regularisation"),
        "steps": Key(_int, 3000, nonnegative, help="number of steps"),
        "fp_tol": Key(_float, 1e-9, positive, help="fixed-point tolerance"),
        "max_fixed_point_iters": Key(_int, 5000, positive, help="fixed-point iteration cap"),
        "snapshot_every": Key(_int, 100, nonnegative, help="cloud snapshot period (0: first and last only)"),
        "volume_correction": Key(_bool, True, help="measure entropy against kNN volumes"),
        "knn_k": Key(_int, 8, positive, help="neighbours for kNN volumes"),
    },
}


@dataclass
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def output_dir(self):
        return self.values["output_dir"]


def _parse_value(section, name, raw):
    schema = SCHEMAS[section]
    if name not in schema:
        raise ConfigError(f"[{section}] unknown key {name!r}")
    key = schema[name]
    value = key.parse(name, raw)
    if key.choices and value not in key.choices:
        raise ConfigError(f"{name}: must be one of {', '.join(key.choices)}; got {value!r}")
    if key.check is not None and value is not None:
        msg = key.check(value)
        if msg:
            raise ConfigError(f"{name}: {msg}")
    return value


def _finalise(section, values):
    v = values
    if "dim" in v and section in ("descend", "geodesic", "diffuse"):
        if v.get("objective") == "himmelblau" and v["dim"] != 2:
            raise ConfigError("dim: himmelblau requires dim = 2")
        for name in ("x0", "x", "y", "center", "p"):
            if v.get(name) is not None and len(v[name]) != v["dim"]:
                raise ConfigError(f"{name}: expected {v['dim']} entries")
    if section == "geodesic" and (v.get("x") is None or v.get("y") is None):
        raise ConfigError("x, y: both endpoints are required")
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env and not v.get("_output_dir_from_cli"):
        v["output_dir"] = env
    v.pop("_output_dir_from_cli", None)
    return RunConfig(section, v)


def default_config(subcommand):
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return {k: key.default for k, key in SCHEMAS[subcommand].items()}


def load_config(path=None, subcommand=None, overrides=None):
    """Parse, default-fill and validate a configuration.

    ``path`` may be None (defaults only).  ``overrides`` maps key to raw
    string (or already-typed) values and wins over the file.  The output
    directory environment variable wins over the file but not over an explicit
    ``output_dir`` override.
    """
    parser = configparser.ConfigParser(
        interpolation=None, strict=True, empty_lines_in_values=False, inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str
    if path is not None:
        try:
            with open(os.fspath(path)) as fh:
                parser.read_file(fh, source=os.fspath(path))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError(f"{path}, line {exc.lineno}: key before any [section] header") from None
        except configparser.ParsingError as exc:
            lines = ", ".join(str(ln) for ln, _ in exc.errors)
            raise ConfigError(f"{path}, line {lines}: cannot parse") from None
        except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
            raise ConfigError(f"{path}, line {exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    sections = parser.sections()
    for s in sections:
        if s not in SCHEMAS:
            raise ConfigError(f"unknown section [{s}]")
    if subcommand is None:
        if len(sections) != 1:
            raise ConfigError("name the subcommand: the file must hold exactly one section")
        subcommand = sections[0]
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    values = default_config(subcommand)
    if parser.has_section(subcommand):
        for name, raw in parser.items(subcommand):
            values[name] = _parse_value(subcommand, name, raw)
    explicit_dir = False
    for name, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[name] = _parse_value(subcommand, name, raw)
        explicit_dir |= name == "output_dir"
    values["_output_dir_from_cli"] = explicit_dir
    return _finalise(subcommand, values)
