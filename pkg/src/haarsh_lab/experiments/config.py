"""INI-style experiment configs with strict key checking.

Unknown sections or keys are errors, reported with their line number.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

MODES = {
    "usr-fit": "dist(T^z w, w) >= C ||z||^-A for 0 < ||z|| <= R",
    "separation-scan": "g sep(V, Lambda_L) >= g 2^(-2 b ntilde(L)^2) >= exp(-L^(1/2))",
    "wegner-mc": "P(dist[spec(H_1), spec(H_2)] <= eps) <= eps / a_ntilde(L)",
    "badset-mc": "P(B_N) <= 2^(-(b-2nu)N) / (4g);  P(B(g)) <= g^-1 / (2^(b-2nu+1) - 2)",
    "green-decay": "min_x |zeta - g V(x)| <= g0 delta0  or  max_xy |G(x,y;zeta)| <= exp(-2 m L0)",
    "dichotomy-scan": "no window contains two disjoint (E,m)-singular L_j boxes",
    "localization-length": "|psi(x)| <= C exp(-m ||x - x_peak||)",
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def _ints(text: str) -> tuple:
    out = []
    for t in re.split(r"[,\s]+", text.strip()):
        if t:
            v = float(t)
            if not v.is_integer():
                raise ValueError(f"{t!r} is not an integer")
            out.append(int(v))
    return tuple(out)


def _int(text: str) -> int:
    (v,) = _ints(text)
    return v


def _float(text: str) -> float:
    (v,) = _floats(text)
    return v


def _optional_float(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else _float(text)


def _optional_int(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else _int(text)


def _seed(text: str) -> int:
    t = text.strip().lower()
    v = int(t, 16) if t.startswith("0x") else int(t)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


# section -> key -> (field name, parser)
SCHEMA = {
    "experiment": {
        "mode": ("mode", str.strip),
        "output": ("output", str.strip),
        "max_minutes": ("max_minutes", _float),
    },
    "system": {
        "nu": ("nu", _int),
        "d": ("d", _int),
        "frequencies": ("frequencies", str.strip),
        "a": ("A", _float),
        "fit_radius": ("fit_radius", _optional_int),
        "omega": ("omega", _optional_float),
    },
    "hull": {
        "b": ("b", _int),
        "master_seed": ("master_seed", _seed),
        "depth": ("depth", _optional_int),
    },
    "physics": {
        "g": ("g", _optional_float),
        "m": ("m", _float),
        "l0": ("L0", _int),
        "jmax": ("jmax", _int),
        "l": ("L", _ints),
        "epsilon": ("epsilon", _floats),
        "n_max": ("N_max", _int),
        "control_g": ("control_g", _optional_float),
        "decay_cap": ("decay_cap", _float),
        "radii": ("radii", _ints),
    },
    "montecarlo": {
        "n_samples": ("n_samples", _int),
        "sigmas": ("sigmas", _float),
        "workers": ("workers", _int),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    output: Optional[str] = None
    max_minutes: float = 30.0
    nu: int = 1
    d: int = 1
    frequencies: str = "default"
    A: float = 1.0
    fit_radius: Optional[int] = None
    omega: Optional[float] = None
    b: int = 5
    master_seed: int = 20240601
    depth: Optional[int] = None
    g: Optional[float] = 8.0
    m: float = 0.5
    L0: int = 4
    jmax: int = 1
    L: tuple = (4,)
    epsilon: tuple = (1e-3,)
    N_max: int = 3
    control_g: Optional[float] = None
    decay_cap: float = 50.0
    radii: tuple = (10, 100, 1000)
    n_samples: int = 100
    sigmas: float = 3.0
    workers: int = 1
    source: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {sorted(MODES)}", key="mode")
        if self.nu < 1 or self.d < 1:
            raise ConfigError("nu and d must be >= 1")
        if self.b <= 2 * max(self.d, self.nu):
            raise ConfigError(f"b must exceed 2*max(d, nu) = {2 * max(self.d, self.nu)}", key="b")
        if self.L0 < 4:
            raise ConfigError("L0 must be >= 4", key="L0")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1", key="n_samples")
        if self.m <= 0 or self.A <= 0:
            raise ConfigError("m and A must be positive")
        if self.g is not None and self.g <= 0:
            raise ConfigError("g must be positive", key="g")
        if any(L < 0 for L in self.L):
            raise ConfigError("box radii must be >= 0", key="L")
        if any(e < 0 for e in self.epsilon):
            raise ConfigError("epsilon must be >= 0", key="epsilon")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="workers")

    def canonical(self) -> str:
        """Stable text of every physics-relevant field (output path excluded)."""
        parts = []
        for name in sorted(self.__dataclass_fields__):
            if name in ("source", "output", "workers"):
                continue
            v = getattr(self, name)
            if isinstance(v, float):
                v = repr(v)
            elif isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            parts.append(f"{name}={v}")
        return "\n".join(parts)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _line_index(text: str) -> dict:
    """(section, key) -> line number, plus section headers under (section, None)."""
    where = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    lines = _line_index(text)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from exc
    values = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((sec, None)))
        for key, raw in parser.items(section):
            line = lines.get((sec, key))
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, key)
            name, conv = SCHEMA[sec][key]
            try:
                values[name] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})", line, key) from exc
    if "mode" not in values:
        raise ConfigError("missing [experiment] mode")
    try:
        return ExperimentConfig(**values, source=text)
    except ConfigError as exc:
        if exc.key is not None:
            for (sec, key), no in lines.items():
                if key is not None and SCHEMA.get(sec, {}).get(key, ("",))[0] == exc.key:
                    raise ConfigError(str(exc), no, exc.key) from None
        raise


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
