"""Haarsh randelette expansions over dyadic partitions of the torus.

The hull is ``v(w) = sum_n a_n sum_k theta_{n,k} 1[w in C_{n,k}]`` with
``a_n = 2**(-b n^2)`` and IID ``theta_{n,k}`` uniform on [-1, 1].

Amplitudes shrink super-exponentially (``a_16 = 2**-1280`` for b = 5), so
every quantity here is carried as an exact dyadic rational. Theta values
are 53-bit grid points ``m / 2**53``; with integer ``b`` the truncated hull
at depth N is ``numerator / 2**(53 + b N^2)`` exactly. Floats appear only
at the boundary (``float(...)``), where they are correctly rounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .seeding import GAMMA, MASK64, THETA_DOMAIN, mix64_array
from .torus import TorusPoint

THETA_BITS = 53
THETA_SCALE = 1 << THETA_BITS
ENUMERATION_GUARD = 24  # nu * N limit for full-generation enumeration
GENERATOR_ID = "splitmix64-theta-v1"


class EnumerationGuardError(ValueError):
    pass


# -- partitions ---------------------------------------------------------------

@dataclass(frozen=True)
class PartitionAddress:
    """Cube ``C_{n,k}`` of generation n; k is 1-based in lexicographic order
    of the corner vector (r_1, ..., r_nu), 1 <= r_j <= 2**n."""

    n: int
    k: int
    nu: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"generation must be >= 1, got {self.n}")
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if not 1 <= self.k <= 1 << (self.n * self.nu):
            raise ValueError(f"k={self.k} outside [1, 2^{self.n * self.nu}]")

    @property
    def corner(self) -> tuple:
        idx = self.k - 1
        side = (1 << self.n) - 1
        return tuple(((idx >> (self.n * (self.nu - 1 - j))) & side) + 1 for j in range(self.nu))

    @classmethod
    def from_corner(cls, n: int, corner) -> "PartitionAddress":
        nu = len(corner)
        idx = 0
        for r in corner:
            if not 1 <= r <= 1 << n:
                raise ValueError(f"corner coordinate {r} outside [1, 2^{n}]")
            idx = (idx << n) | (r - 1)
        return cls(n, idx + 1, nu)

    def bounds(self) -> list:
        """Per-coordinate half-open intervals [lo, hi) as Fractions."""
        w = Fraction(1, 1 << self.n)
        return [((r - 1) * w, r * w) for r in self.corner]

    def parent(self) -> "PartitionAddress":
        if self.n == 1:
            raise ValueError("generation-1 cubes have no parent")
        return PartitionAddress.from_corner(self.n - 1, [(r - 1) // 2 + 1 for r in self.corner])


def _corner_indices(points: np.ndarray, n: int) -> np.ndarray:
    """0-based corner digits floor(w_j 2^n), shape (npts, nu)."""
    return np.floor(np.ldexp(points, n)).astype(np.int64)


def _flatten(digits: np.ndarray, n: int) -> np.ndarray:
    nu = digits.shape[1]
    if n * nu > 62:
        raise EnumerationGuardError(f"cube index needs {n * nu} bits; limit is 62")
    idx = np.zeros(digits.shape[0], dtype=np.int64)
    for j in range(nu):
        idx = (idx << np.int64(n)) | digits[:, j]
    return idx


def cube_indices(points, n: int) -> np.ndarray:
    """0-based flat cube index at generation n for each row of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return _flatten(_corner_indices(pts, n), n)


def ancestry_indices(points, N: int) -> np.ndarray:
    """0-based indices k_i - 1 of the containing cubes for i = 1..N.

    Shape (N, npts); row i-1 is generation i.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    deep = _corner_indices(pts, N)
    return np.stack([_flatten(deep >> np.int64(N - i), i) for i in range(1, N + 1)])


def cube_index(omega: TorusPoint, n: int) -> PartitionAddress:
    if n < 1:
        raise ValueError("generation must be >= 1")
    digits = [math.floor(math.ldexp(c, n)) + 1 for c in omega.coords]
    return PartitionAddress.from_corner(n, digits)


def ancestry(n: int, k: int, nu: int = 1) -> tuple:
    """kappa(n, k) = (k_1, ..., k_n) with C_{i,k_i} containing C_{n,k}."""
    addr = PartitionAddress(n, k, nu)
    corner = addr.corner
    out = []
    for i in range(1, n + 1):
        shift = n - i
        out.append(PartitionAddress.from_corner(i, [((r - 1) >> shift) + 1 for r in corner]).k)
    return tuple(out)


def parent_indices(n: int, nu: int) -> np.ndarray:
    """0-based parent index (generation n-1) of every generation-n cube."""
    idx = np.arange(1 << (n * nu), dtype=np.int64)
    side = np.int64((1 << n) - 1)
    parent = np.zeros_like(idx)
    for j in range(nu):
        digit = (idx >> np.int64(n * (nu - 1 - j))) & side
        parent = (parent << np.int64(n - 1)) | (digit >> np.int64(1))
    return parent


# -- theta family ---------------------------------------------------------------

def _to_numerator(value: float) -> int:
    value = float(value)
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"theta values must lie in [-1, 1], got {value}")
    m = value * THETA_SCALE
    if not m.is_integer():
        raise ValueError(f"forced theta {value!r} is not a multiple of 2^-{THETA_BITS}")
    return int(m)


def theta_numerators(seeds, n: int, k_idx) -> np.ndarray:
    """Hash-derived theta numerators for 0-based cube indices at generation n.

    ``seeds`` broadcasts against ``k_idx``. Returns odd int64 values m in
    (-2^53, 2^53); theta = m / 2^53.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    keys = mix64_array(seeds ^ np.uint64(THETA_DOMAIN))
    level = mix64_array(keys + np.uint64((n * GAMMA) & MASK64))
    k = np.asarray(k_idx, dtype=np.uint64)
    h = mix64_array(mix64_array(level + k * np.uint64(GAMMA)) ^ keys)
    u = (h >> np.uint64(64 - THETA_BITS)).astype(np.int64)
    return 2 * u + 1 - THETA_SCALE


@dataclass(frozen=True)
class ThetaSample:
    """A reproducible draw of the whole family theta_{n,k}.

    ``overrides`` pins individual (n, k) values and ``fill`` replaces every
    unpinned value; both exist so hand-computed cases are executable.
    """

    master_seed: int
    overrides: Optional[Mapping] = None
    fill: Optional[float] = None
    generator_id: str = GENERATOR_ID
    _forced: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 1 << 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", seed)
        forced = {}
        for (n, k), v in dict(self.overrides or {}).items():
            forced[(int(n), int(k))] = _to_numerator(v)
        object.__setattr__(self, "_forced", tuple(sorted(forced.items())))
        object.__setattr__(self, "overrides", {key: m / THETA_SCALE for key, m in forced.items()})
        if self.fill is not None:
            _to_numerator(self.fill)

    def __hash__(self):
        return hash((self.master_seed, self._forced, self.fill))

    @classmethod
    def zero(cls) -> "ThetaSample":
        return cls(0, fill=0.0)

    @classmethod
    def forced(cls, values: Mapping, fill: float = 0.0) -> "ThetaSample":
        return cls(0, overrides=values, fill=fill)

    @property
    def is_forced(self) -> bool:
        return self.fill is not None or bool(self._forced)

    def numerators(self, n: int, k_idx) -> np.ndarray:
        k_idx = np.asarray(k_idx, dtype=np.int64)
        if self.fill is not None:
            out = np.full(k_idx.shape, _to_numerator(self.fill), dtype=np.int64)
        else:
            out = theta_numerators(self.master_seed, n, k_idx)
        for (fn, fk), m in self._forced:
            if fn == n:
                out[k_idx == fk - 1] = m
        return out

    def theta(self, n: int, k: int) -> float:
        if n < 1 or k < 1:
            raise ValueError("invalid address")
        return float(self.numerators(n, np.array([k - 1]))[0]) / THETA_SCALE


def theta(sample: ThetaSample, n: int, k: int) -> float:
    return sample.theta(n, k)


# -- exact dyadic values -----------------------------------------------------------

@dataclass(frozen=True)
class DyadicValues:
    """Exact values ``numerators[i] / 2**exponent`` (numerators are Python ints)."""

    numerators: np.ndarray
    exponent: int

    def __len__(self):
        return len(self.numerators)

    def fraction(self, i: int) -> Fraction:
        return Fraction(int(self.numerators[i]), 1 << self.exponent)

    def fractions(self) -> list:
        return [self.fraction(i) for i in range(len(self))]

    def to_float(self) -> np.ndarray:
        den = 1 << self.exponent
        return np.array([int(v) / den for v in self.numerators], dtype=float)

    def min_spacing(self) -> Fraction:
        if len(self) < 2:
            raise ValueError("need at least two values")
        s = sorted(int(v) for v in self.numerators)
        return Fraction(min(b - a for a, b in zip(s, s[1:])), 1 << self.exponent)

    def rescaled(self, exponent: int) -> "DyadicValues":
        if exponent < self.exponent:
            raise ValueError("can only rescale to a finer grid")
        shift = exponent - self.exponent
        return DyadicValues(np.array([int(v) << shift for v in self.numerators], dtype=object), exponent)


def log2_fraction(x: Fraction) -> float:
    """log2 of a positive Fraction without underflow; -inf for 0."""
    if x == 0:
        return -math.inf
    if x < 0:
        raise ValueError("log2 of a negative number")
    n, d = x.numerator, x.denominator
    shift = n.bit_length() - d.bit_length()
    # bring the ratio near 1 before the float division
    if shift > 0:
        d <<= shift
    else:
        n <<= -shift
    return shift + math.log2(n / d)


# -- hull ---------------------------------------------------------------------------

class HullEval(NamedTuple):
    value: Fraction
    error_bound: Fraction


@dataclass(frozen=True)
class HaarshHull:
    """Expansion parameters plus a theta draw.

    ``b`` must be an integer so amplitudes stay exact dyadic rationals.
    """

    b: int
    sample: ThetaSample
    nu: int = 1
    default_depth: int = 8

    def __post_init__(self):
        b = float(self.b)
        if not b.is_integer():
            raise ValueError(f"b must be an integer for exact arithmetic, got {self.b}")
        b = int(b)
        if b <= 2 * self.nu:
            raise ValueError(f"b must exceed 2*nu = {2 * self.nu}, got {b}")
        if self.default_depth < 1:
            raise ValueError("default_depth must be >= 1")
        object.__setattr__(self, "b", b)

    def scale_bits(self, N: int) -> int:
        """Exponent e with v_N = numerator / 2**e."""
        return THETA_BITS + self.b * N * N

    def with_sample(self, sample: ThetaSample) -> "HaarshHull":
        return HaarshHull(self.b, sample, self.nu, self.default_depth)


def amplitude(hull: HaarshHull, n: int) -> Fraction:
    if n < 1:
        raise ValueError("generation must be >= 1")
    return Fraction(1, 1 << (hull.b * n * n))


def tail_bound(hull: HaarshHull, N: int) -> Fraction:
    """r_N = 2^{-2bN} a_N, which bounds sum_{n > N} a_n (and |v - v_N|)."""
    if N < 1:
        raise ValueError("depth must be >= 1")
    return Fraction(1, 1 << (2 * hull.b * N + hull.b * N * N))


def _level_shift(b: int, n: int) -> int:
    # numerator scale grows by b(2n - 1) bits from generation n-1 to n
    return b * (2 * n - 1)


def xi(hull: HaarshHull, n: int, k: int) -> Fraction:
    """xi_{n,k} = sum_{i <= n} a_i theta_{i, k_i} along the ancestry of C_{n,k}."""
    chain = ancestry(n, k, hull.nu)
    acc = 0
    for i, ki in enumerate(chain, start=1):
        m = int(hull.sample.numerators(i, np.array([ki - 1]))[0])
        acc = (acc << _level_shift(hull.b, i)) + m
    return Fraction(acc, 1 << hull.scale_bits(n))


def hull_values(hull: HaarshHull, points, N: int) -> DyadicValues:
    """Exact v_N at every row of ``points`` (shape (npts, nu))."""
    if N < 1:
        raise ValueError("depth must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != hull.nu:
        raise ValueError(f"points have nu={pts.shape[1]}, hull has nu={hull.nu}")
    anc = ancestry_indices(pts, N)
    acc = np.zeros(pts.shape[0], dtype=object)
    for i in range(1, N + 1):
        m = hull.sample.numerators(i, anc[i - 1]).astype(object)
        acc = acc * (1 << _level_shift(hull.b, i)) + m
    return DyadicValues(acc, hull.scale_bits(N))


def hull_values_batch(b: int, seeds, points, N: int) -> DyadicValues:
    """Exact v_N for row-aligned (seed, point) pairs, hashed thetas only."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    anc = ancestry_indices(pts, N)
    acc = np.zeros(pts.shape[0], dtype=object)
    for i in range(1, N + 1):
        m = theta_numerators(seeds, i, anc[i - 1]).astype(object)
        acc = acc * (1 << _level_shift(b, i)) + m
    return DyadicValues(acc, THETA_BITS + b * N * N)


def hull_eval(hull: HaarshHull, omega: TorusPoint, N: Optional[int] = None) -> HullEval:
    """Truncated hull v_N(omega) and the certified bound r_N on |v - v_N|."""
    N = hull.default_depth if N is None else N
    vals = hull_values(hull, np.asarray(omega.coords).reshape(1, -1), N)
    return HullEval(vals.fraction(0), tail_bound(hull, N))


# -- separation events ----------------------------------------------------------------

@dataclass(frozen=True)
class SeparationEvent:
    N: int
    in_B_N: bool
    min_gap: Fraction
    threshold: Fraction


@dataclass(frozen=True)
class FilterResult:
    accepted: bool
    failing_N: Optional[int]
    events: tuple

    @property
    def depth(self) -> int:
        return len(self.events)


def separation_threshold(b: int, N: int, g) -> Fraction:
    """g^{-1} 2^{-bN} a_N."""
    g = Fraction(g)
    if g <= 0:
        raise ValueError("g must be positive")
    return Fraction(1, 1 << (b * N + b * N * N)) / g


def _check_guard(nu: int, N: int):
    if nu * N > ENUMERATION_GUARD:
        raise EnumerationGuardError(
            f"nu*N = {nu * N} exceeds the enumeration guard {ENUMERATION_GUARD}")


def xi_levels(numerators_by_level, b: int, nu: int):
    """Yield exact generation-n xi numerators (scale 2^(53 + b n^2)).

    ``numerators_by_level[n-1]`` has shape (..., K_n); leading axes are
    batch axes (e.g. one row per theta draw).
    """
    prev = None
    for n, m in enumerate(numerators_by_level, start=1):
        m = np.asarray(m).astype(object)
        if prev is None:
            cur = m
        else:
            cur = prev[..., parent_indices(n, nu)] * (1 << _level_shift(b, n)) + m
        yield cur
        prev = cur


def min_gaps(levels: np.ndarray) -> np.ndarray:
    """Exact minimum pairwise gap along the last axis (big-int reference)."""
    if levels.ndim == 1:
        srt = sorted(levels.tolist())
        return min(b - a for a, b in zip(srt, srt[1:]))
    s = np.sort(levels, axis=-1)
    return np.min(s[..., 1:] - s[..., :-1], axis=-1)


def in_bad_event(gap_num: int, b: int, N: int, g) -> bool:
    """Exact test gap <= g^{-1} 2^{-bN} a_N for a gap numerator at scale
    2^-(53 + b N^2): equivalent to gap * g * 2^(bN) <= 2^53."""
    g = Fraction(g)
    return int(gap_num) * g.numerator << (b * N) <= g.denominator << THETA_BITS


# Gaps at or above GAP_LARGE (in units of the current level) can never be the
# minimum: sibling gaps are always below 2^54. Storing them capped keeps the
# level-by-level merge in int64 without losing exactness where it matters.
GAP_CAP = 1 << 60
GAP_LARGE = 1 << 58


def _children_table(n: int, nu: int) -> np.ndarray:
    par = parent_indices(n, nu)
    return np.argsort(par, kind="stable").reshape(-1, 1 << nu)


def _scale_gaps(gaps: np.ndarray, s: int) -> np.ndarray:
    if s >= 60:
        return np.where(gaps > 0, GAP_CAP, 0)
    return np.where(gaps > (GAP_CAP >> s), GAP_CAP, gaps << np.int64(s))


def level_min_gaps(numerators_by_level, b: int, nu: int) -> np.ndarray:
    """Exact minimum xi gap at every generation, batched over draws.

    ``numerators_by_level[n-1]`` has shape (S, K_n). Returns an int64 array
    (S, N) of gaps in units of 2^-(53 + b n^2).

    Works by merging sorted sibling blocks in parent order. Rows where
    adjacent parent blocks overlap (only possible after a much larger bad
    event at the previous generation) are recomputed by the big-int route.
    """
    levels = [np.atleast_2d(np.asarray(m, dtype=np.int64)) for m in numerators_by_level]
    S = levels[0].shape[0]
    out = np.zeros((S, len(levels)), dtype=np.int64)
    overlap = np.zeros(S, dtype=bool)
    order = gaps = None
    for n, m in enumerate(levels, start=1):
        if n == 1:
            order = np.argsort(m, axis=-1, kind="stable")
            gaps = np.diff(np.take_along_axis(m, order, axis=-1), axis=-1)
        else:
            nb = 1 << nu
            children = _children_table(n, nu)[order]                      # (S, K', nb)
            mc = np.take_along_axis(m, children.reshape(S, -1), axis=-1).reshape(children.shape)
            within = np.argsort(mc, axis=-1, kind="stable")
            mc = np.take_along_axis(mc, within, axis=-1)
            children = np.take_along_axis(children, within, axis=-1)
            cross = _scale_gaps(gaps, _level_shift(b, n)) + mc[:, 1:, 0] - mc[:, :-1, -1]
            overlap |= (cross < 0).any(axis=-1)
            full = np.empty(mc.shape, dtype=np.int64)
            full[:, :, :nb - 1] = np.diff(mc, axis=-1)
            full[:, :-1, nb - 1] = np.minimum(cross, GAP_CAP)
            gaps = full.reshape(S, -1)[:, :-1]
            order = children.reshape(S, -1)
        out[:, n - 1] = gaps.min(axis=-1)
    for row in np.flatnonzero(overlap):
        ref = xi_levels([lv[row] for lv in levels], b, nu)
        out[row] = [int(min_gaps(lv)) for lv in ref]
    return out


def _sample_numerators(hull: HaarshHull, N_max: int) -> list:
    return [hull.sample.numerators(n, np.arange(1 << (n * hull.nu)))[None, :]
            for n in range(1, N_max + 1)]


def _event(hull: HaarshHull, N: int, gap: int, g) -> SeparationEvent:
    return SeparationEvent(N, in_bad_event(gap, hull.b, N, g),
                           Fraction(int(gap), 1 << hull.scale_bits(N)),
                           separation_threshold(hull.b, N, g))


def check_separation_event(hull: HaarshHull, N: int, g) -> SeparationEvent:
    """Decide theta in B_N: some pair of generation-N cubes has xi values
    within g^{-1} 2^{-bN} a_N of each other."""
    if N < 1:
        raise ValueError("N must be >= 1")
    _check_guard(hull.nu, N)
    gaps = level_min_gaps(_sample_numerators(hull, N), hull.b, hull.nu)[0]
    return _event(hull, N, int(gaps[-1]), g)


def good_theta_filter(hull: HaarshHull, g, N_max: int) -> FilterResult:
    """Accept theta iff it avoids B_N for every N <= N_max.

    ``events`` lists every generation up to N_max, including those after
    the first failure.
    """
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    _check_guard(hull.nu, N_max)
    gaps = level_min_gaps(_sample_numerators(hull, N_max), hull.b, hull.nu)[0]
    events = tuple(_event(hull, N, int(gp), g) for N, gp in enumerate(gaps, start=1))
    failing = next((e.N for e in events if e.in_B_N), None)
    return FilterResult(failing is None, failing, events)


def bad_event_batch(b: int, nu: int, seeds, N_max: int, g) -> np.ndarray:
    """Boolean (len(seeds), N_max) table of B_N membership for hashed draws."""
    _check_guard(nu, N_max)
    seeds = np.asarray(seeds, dtype=np.uint64)
    nums = [theta_numerators(seeds[:, None], n, np.arange(1 << (n * nu))[None, :])
            for n in range(1, N_max + 1)]
    gaps = level_min_gaps(nums, b, nu)
    g = Fraction(g)
    # gap * g <= 2^(53 - bN), vectorised per generation
    out = np.zeros(gaps.shape, dtype=bool)
    for N in range(1, N_max + 1):
        out[:, N - 1] = [in_bad_event(int(gp), b, N, g) for gp in gaps[:, N - 1]]
    return out
