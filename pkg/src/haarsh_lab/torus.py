"""Torus phase space T^nu with the max-metric and Z^d rotation actions.

Coordinates are doubles reduced into [0, 1). Each frequency is split into a
26-bit head and a small tail, so ``x_j * head`` is exact for ``|x_j| <= 2^27``
and translations stay within a few ulps of the true orbit point; beyond that
the error grows like ``|x| * 1e-16`` and is useless past ``|x| ~ 1e12``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0


def _reduce(values) -> np.ndarray:
    out = np.mod(np.asarray(values, dtype=float), 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    out[out >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __init__(self, coords):
        arr = np.atleast_1d(np.asarray(coords, dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a torus point needs a non-empty 1-d coordinate vector")
        object.__setattr__(self, "coords", tuple(float(c) for c in _reduce(arr)))

    @property
    def nu(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords)


@dataclass(frozen=True)
class RotationSystem:
    """Z^d acting on T^nu by ``T^x w = w + sum_j x_j alpha_j``.

    ``frequencies`` has shape (d, nu); row j is alpha_j. ``usr_A`` and
    ``usr_C`` are the slow-return constants; use
    :func:`fit_diophantine_constants` to obtain an honest ``usr_C``.
    """

    frequencies: np.ndarray = field(compare=False)
    usr_A: float = 1.0
    usr_C: float = 1.0
    _freq_tuple: tuple = field(init=False, repr=False, compare=True)

    def __post_init__(self):
        freq = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        if freq.ndim != 2 or freq.size == 0:
            raise ValueError("frequencies must be a (d, nu) array")
        freq = _reduce(freq)
        freq.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "_freq_tuple", tuple(map(tuple, freq.tolist())))
        for name in ("usr_A", "usr_C"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and positive, got {val}")
            object.__setattr__(self, name, val)

    def __hash__(self):
        return hash((self._freq_tuple, self.usr_A, self.usr_C))

    @property
    def d(self) -> int:
        return self.frequencies.shape[0]

    @property
    def nu(self) -> int:
        return self.frequencies.shape[1]

    def with_constants(self, A: float, C: float) -> "RotationSystem":
        return RotationSystem(self.frequencies, usr_A=A, usr_C=C)


def golden_mean_system(A: float = 1.0, C: float = 1.0) -> RotationSystem:
    return RotationSystem([[GOLDEN_MEAN]], usr_A=A, usr_C=C)


def default_system(nu: int = 1, d: int = 1, A: float = 1.0, C: float = 1.0) -> RotationSystem:
    """Golden mean for (nu, d) = (1, 1); otherwise sqrt(p) - floor(sqrt(p))
    over successive non-square integers p, one per (j, i) entry."""
    if nu < 1 or d < 1:
        raise ValueError("nu and d must be >= 1")
    if nu == 1 and d == 1:
        return golden_mean_system(A, C)
    vals = []
    p = 2
    while len(vals) < nu * d:
        r = math.isqrt(p)
        if r * r != p:
            vals.append(math.sqrt(p) - r)
        p += 1
    return RotationSystem(np.array(vals).reshape(d, nu), usr_A=A, usr_C=C)


def orbit(system: RotationSystem, omega: TorusPoint, xs) -> np.ndarray:
    """Orbit points ``T^x omega`` for every row of ``xs`` (shape (n, d)).

    Returns an (n, nu) array of reduced coordinates.
    """
    xs = np.asarray(xs)
    if xs.ndim == 1:
        xs = xs.reshape(-1, system.d) if system.d > 1 else xs.reshape(-1, 1)
    if xs.shape[1] != system.d:
        raise ValueError(f"sites have dimension {xs.shape[1]}, system has d={system.d}")
    if omega.nu != system.nu:
        raise ValueError(f"omega has nu={omega.nu}, system has nu={system.nu}")
    acc = np.tile(np.asarray(omega.coords), (xs.shape[0], 1))
    for j in range(system.d):
        x = xs[:, j].astype(float)
        head, tail = _split(system.frequencies[j])
        term = _reduce(_reduce(np.outer(x, head)) + np.outer(x, tail))
        acc = _reduce(acc + term)
    return acc


def _split(alpha: np.ndarray) -> tuple:
    """alpha = head + tail with head a multiple of 2^-26 and |tail| <= 2^-27."""
    head = np.round(alpha * 2.0 ** 26) / 2.0 ** 26
    return head, alpha - head


def translate(system: RotationSystem, omega: TorusPoint, x: Sequence[int]) -> TorusPoint:
    x = np.atleast_1d(np.asarray(x))
    if x.shape != (system.d,):
        raise ValueError(f"x has length {x.size}, system has d={system.d}")
    return TorusPoint(orbit(system, omega, x.reshape(1, -1))[0])


def circle_distance(a, b) -> np.ndarray:
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(diff, 1.0 - diff)


def torus_distance(a: TorusPoint, b: TorusPoint) -> float:
    if a.nu != b.nu:
        raise ValueError(f"dimension mismatch: {a.nu} vs {b.nu}")
    return float(np.max(circle_distance(a.coords, b.coords)))


def _pairwise_min(points: np.ndarray) -> float:
    n = points.shape[0]
    if points.shape[1] == 1:
        s = np.sort(points[:, 0])
        gaps = np.diff(s)
        wrap = 1.0 - (s[-1] - s[0])
        return float(min(gaps.min(), wrap))
    best = math.inf
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n - 1, chunk):
        block = points[start:start + chunk]
        dist = circle_distance(block[:, None, :], points[None, :, :]).max(axis=2)
        rows = np.arange(start, start + block.shape[0])
        dist[rows - start, rows] = np.inf
        best = min(best, float(dist.min()))
    return best


def min_trajectory_spacing(system: RotationSystem, omega: TorusPoint, sites) -> float:
    """Smallest torus distance between orbit points over ``sites``.

    Rational rotations give 0 (returned, not rejected).
    """
    sites = np.asarray(sites)
    if sites.ndim == 1:
        sites = sites.reshape(-1, 1)
    if sites.shape[0] < 2:
        raise ValueError("need at least two sites")
    if len({tuple(s) for s in sites.tolist()}) != sites.shape[0]:
        raise ValueError("sites must be pairwise distinct")
    return _pairwise_min(orbit(system, omega, sites))


@dataclass(frozen=True)
class USRReport:
    radius: int
    A: float
    C: float
    worst_ratio: float
    worst_shift: tuple
    violating_pair: Optional[tuple]

    @property
    def passed(self) -> bool:
        return self.worst_ratio >= 1.0


def _half_ball(d: int, R: int) -> np.ndarray:
    """Nonzero z with ||z||_inf <= R, one representative of each +-z pair."""
    axes = [np.arange(-R, R + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    # keep z whose first nonzero coordinate is positive
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(grid.shape[0]), first]
    return grid[lead > 0]


def _return_profile(system: RotationSystem, R: int, A: float):
    if R < 1:
        raise ValueError("radius must be >= 1")
    zs = _half_ball(system.d, R)
    pts = orbit(system, TorusPoint(np.zeros(system.nu)), zs)
    dist = np.max(np.minimum(pts, 1.0 - pts), axis=1)
    norms = np.abs(zs).max(axis=1).astype(float)
    scaled = dist * norms ** A
    return zs, dist, scaled


def fit_diophantine_constants(system: RotationSystem, A: float, R: int) -> float:
    """Largest C with ``dist(T^z w, w) >= C ||z||^-A`` for ``0 < ||z|| <= R``."""
    if A <= 0:
        raise ValueError("A must be positive")
    _, _, scaled = _return_profile(system, R, A)
    return float(scaled.min())


def verify_usr(system: RotationSystem, R: int) -> USRReport:
    """Check the slow-return bound against the system's own (A, C) up to radius R.

    For rotations the distance depends only on ``z = x - y``, so the scan
    runs over shifts from the origin.
    """
    zs, _, scaled = _return_profile(system, R, system.usr_A)
    ratios = scaled / system.usr_C
    i = int(np.argmin(ratios))
    worst = float(ratios[i])
    z = tuple(int(v) for v in zs[i])
    violating = (z, tuple([0] * system.d)) if worst < 1.0 else None
    return USRReport(R, system.usr_A, system.usr_C, worst, z, violating)


def calibrated(system: RotationSystem, A: float, R: int) -> RotationSystem:
    """Copy of ``system`` with C fitted over radius R."""
    return system.with_constants(A, fit_diophantine_constants(system, A, R))


def continued_fraction(x: float, terms: int = 30) -> list:
    out = []
    for _ in range(terms):
        a = math.floor(x)
        out.append(a)
        frac = x - a
        if frac < 1e-12:
            break
        x = 1.0 / frac
    return out


def convergent_denominators(x: float, qmax: int) -> list:
    """Denominators q_k of the continued-fraction convergents of x, up to qmax."""
    qs = []
    q_prev, q = 0, 1
    for a in continued_fraction(x)[1:]:
        q_prev, q = q, a * q + q_prev
        if q > qmax:
            break
        qs.append(q)
    return qs

