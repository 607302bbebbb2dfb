"""Multi-scale ladder, box classification and the dichotomy verifier."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np
import scipy.linalg as sla

from .hamiltonian import BoxHamiltonian, LatticeBox, assemble, box_orbit, potential_on_box
from .randelette import (HaarshHull, SeparationEvent, _check_guard, ancestry_indices,
                         good_theta_filter, hull_values, log2_fraction, separation_threshold)
from .spectral import (NearSingularError, dist_to_spectrum, eigensystem, exact_eigenvalues,
                       exact_spectra_distance, green_column, green_columns_batch, spectra_distance)
from .torus import RotationSystem, TorusPoint, min_trajectory_spacing

BETA = 0.25


class ResonantBoxError(ValueError):
    pass


class UnacceptedThetaError(ValueError):
    pass


def n_tilde(L: float, A: float, C: float) -> int:
    """Partition depth ceil(1 + (2A ln L - ln C)/ln 2), at least 1.

    Values within 1e-9 of an integer are snapped first so that exact
    cases (C=1, A=1, L=2 gives 3) do not round up on float noise.
    """
    if A <= 0 or C <= 0:
        raise ValueError("A and C must be positive")
    if L < 1:
        raise ValueError("L must be >= 1")
    val = 1.0 + (2.0 * A * math.log(L) - math.log(C)) / math.log(2.0)
    r = round(val)
    if abs(val - r) < 1e-9:
        val = r
    return max(1, int(math.ceil(val)))


def scale_sequence(L0: int, jmax: int) -> list:
    """L_0, ..., L_jmax with L_{j+1} = floor(sqrt(L_j)) L_j.

    Since floor(sqrt(L)) <= sqrt(L), each step satisfies
    L^{3/2} - L < L_{j+1} <= L^{3/2} (equality for perfect squares).
    """
    if L0 < 4:
        raise ValueError("L0 must be >= 4")
    scales = [int(L0)]
    for _ in range(jmax):
        L = scales[-1]
        nxt = math.isqrt(L) * L
        assert sandwich_holds(L, nxt)
        scales.append(nxt)
    return scales


def sandwich_holds(L: int, L_next: int) -> bool:
    """L^{3/2} - L < L_next <= L^{3/2}, checked in integers."""
    return L_next * L_next <= L ** 3 < (L_next + L) ** 2


def gamma(m: float, ell: float) -> float:
    """m ell (1 + ell^{-1/8}); the ell -> 0 limit 0 is used for single sites."""
    if m <= 0:
        raise ValueError("m must be positive")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if ell == 0:
        return 0.0
    return m * ell * (1.0 + ell ** -0.125)


def delta(b: int, n: int) -> Fraction:
    """2^{-b n} a_n with a_n = 2^{-b n^2}."""
    return Fraction(1, 1 << (b * n + b * n * n))


def evaluation_depth(L: int, system: RotationSystem, b: int,
                     delta_target: Optional[float] = None) -> int:
    """Hull depth for a radius-L box: ntilde(2L+1), deepened until
    r_N < 1e-3 delta_target when a target spacing is given."""
    N = n_tilde(max(2 * L + 1, 1), system.usr_A, system.usr_C)
    if delta_target is not None and delta_target > 0:
        # r_N = 2^{-2bN - bN^2}
        while -(2 * b * N + b * N * N) >= math.log2(1e-3 * delta_target):
            N += 1
    return N


@dataclass(frozen=True)
class ScaleSchedule:
    L0: int
    jmax: int
    m: float
    b: int
    A: float
    C: float
    scales: tuple = field(init=False)
    depths: tuple = field(init=False)
    deltas: tuple = field(init=False)

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("m must be positive")
        scales = tuple(scale_sequence(self.L0, self.jmax))
        depths = tuple(n_tilde(L, self.A, self.C) for L in scales)
        deltas = (Fraction(2),) + tuple(delta(self.b, n) for n in depths[1:])
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "deltas", deltas)

    @classmethod
    def for_system(cls, system: RotationSystem, L0: int, jmax: int, m: float, b: int):
        return cls(L0, jmax, m, b, system.usr_A, system.usr_C)


def delta_summability(schedule: ScaleSchedule) -> tuple:
    """(sum_{1<=j<=jmax} delta_j, 2 delta_1, holds) in exact arithmetic."""
    if schedule.jmax < 1:
        return Fraction(0), Fraction(0), True
    total = sum(schedule.deltas[1:], Fraction(0))
    return total, 2 * schedule.deltas[1], total <= 2 * schedule.deltas[1]


# -- classification ---------------------------------------------------------------

@dataclass(frozen=True)
class BoxClassification:
    box: LatticeBox
    zeta: complex
    singular: bool
    resonant: bool
    resonant_at_scale: Optional[bool]
    resonance_scale: Optional[int]
    boundary_green_max: float
    dist_to_spectrum: float

    @property
    def implication_holds(self) -> bool:
        """Nonsingular should imply nonresonant."""
        return self.singular or not self.resonant

    @property
    def scale_monotone(self) -> bool:
        """(zeta, L)-resonant with L >= ell should imply zeta-resonant."""
        return not self.resonant_at_scale or self.resonant


def resonance_threshold(L: float) -> float:
    return math.exp(-L ** 0.25)


def classify(H: BoxHamiltonian, zeta, schedule: ScaleSchedule,
             resonance_scale: Optional[int] = None, spectrum=None) -> BoxClassification:
    """Singular / resonant flags of a box at spectral parameter zeta."""
    ell = H.box.L
    if spectrum is None:
        spectrum = eigensystem(H, False)
    dist = dist_to_spectrum(spectrum, zeta)
    try:
        col = green_column(H, zeta, H.box.center)
        bgm = float(np.abs(col[H.box.inner_boundary()]).max())
    except NearSingularError:
        bgm = math.inf
    singular = bgm > math.exp(-gamma(schedule.m, ell))
    resonant = dist < resonance_threshold(ell)
    at_scale = None
    if resonance_scale is not None:
        at_scale = dist < resonance_threshold(resonance_scale)
    return BoxClassification(H.box, complex(zeta), bool(singular), bool(resonant), at_scale,
                             resonance_scale, bgm, dist)


# -- subharmonic functions --------------------------------------------------------

@dataclass(frozen=True)
class SubharmonicReport:
    is_subharmonic: bool
    bound: float
    actual_center: float
    exponent: int
    failing_site: Optional[tuple]

    @property
    def bound_holds(self) -> bool:
        return (not self.is_subharmonic) or self.actual_center <= self.bound * (1 + 1e-12)


def _diam(points: np.ndarray) -> int:
    if len(points) == 0:
        return 0
    return int((points.max(axis=0) - points.min(axis=0)).max())


def _subharmonic_structure(box: LatticeBox, ell: int, S):
    """Neighbour index lists for constrained sites.

    Returns (regular, singular) lists of (site index, neighbour indices).
    dist(u, boundary) is taken as L - ||u - x||, so the ell-sphere of every
    regular constrained site lies inside the box.
    """
    S = np.asarray(S, dtype=np.int64).reshape(-1, box.d) if S is not None and len(S) else np.zeros((0, box.d), dtype=np.int64)
    return _structure_cached(box, int(ell), tuple(map(tuple, S.tolist())))


@functools.lru_cache(maxsize=4096)
def _structure_cached(box: LatticeBox, ell: int, S_key: tuple):
    sites = box.sites()
    off = np.abs(sites - np.asarray(box.center)).max(axis=1)
    S = np.array(S_key, dtype=np.int64).reshape(-1, box.d)
    in_S = np.zeros(len(sites), dtype=bool)
    for s in S:
        if not box.contains(s):
            raise ValueError(f"S site {tuple(s)} outside the box")
        in_S[box.index_of(s)] = True
    regular = []
    singular = []
    if len(S):
        dS = np.abs(sites[:, None, :] - S[None, :, :]).max(axis=2).min(axis=1)
        s_nb = np.flatnonzero((dS >= 1) & (dS <= 2 * ell - 1))
    for i, u in enumerate(sites):
        if in_S[i]:
            singular.append((i, s_nb))
        elif box.L - off[i] >= ell:
            nb = np.flatnonzero(np.abs(sites - u).max(axis=1) == ell)
            regular.append((i, nb))
    return regular, singular


def subharmonic_check(f, box: LatticeBox, ell: int, q: float, S=None) -> SubharmonicReport:
    """Check the (ell, q, S)-subharmonic conditions and the centre bound
    |f(x)| <= q^{floor((L-2)/ell)} max|f|."""
    if ell < 1 or q <= 0:
        raise ValueError("need ell >= 1 and q > 0")
    Sarr = np.asarray(S if S is not None else [], dtype=np.int64).reshape(-1, box.d)
    if _diam(Sarr) > 2 * ell:
        raise ValueError(f"diam(S) = {_diam(Sarr)} exceeds 2*ell = {2 * ell}")
    a = np.abs(np.asarray(f)).ravel()
    if a.size != len(box):
        raise ValueError("f must have one value per site")
    regular, singular = _subharmonic_structure(box, ell, Sarr)
    failing = None
    sites = box.sites()
    for i, nb in regular + singular:
        rhs = q * (a[nb].max() if nb.size else 0.0)
        if a[i] > rhs * (1 + 1e-12):
            failing = tuple(int(v) for v in sites[i])
            break
    k = max(0, (box.L - 2) // ell)
    bound = q ** k * float(a.max())
    return SubharmonicReport(failing is None, bound, float(a[box.index_of(box.center)]), k, failing)


def subharmonic_minorant(g_values, box: LatticeBox, ell: int, q: float, S=None) -> np.ndarray:
    """Largest function f <= g satisfying the subharmonic conditions.

    Fixpoint of f <- min(f, q max_neighbours f) on constrained sites; with
    g = 1 it gives the worst centre value any normalised subharmonic
    function can reach.
    """
    f = np.abs(np.asarray(g_values, dtype=float)).ravel().copy()
    Sarr = np.asarray(S if S is not None else [], dtype=np.int64).reshape(-1, box.d)
    regular, singular = _subharmonic_structure(box, ell, Sarr)
    cons = regular + singular
    if not cons:
        return f
    idx = np.array([i for i, _ in cons])
    width = max(nb.size for _, nb in cons)
    pad = np.full((len(cons), max(width, 1)), f.size, dtype=np.int64)
    for r, (_, nb) in enumerate(cons):
        pad[r, :nb.size] = nb
    ext = np.append(f, 0.0)
    for _ in range(f.size + 2):
        new = np.minimum(ext[idx], q * ext[pad].max(axis=1))
        if np.array_equal(new, ext[idx]):
            break
        ext[idx] = new
    return ext[:-1]


def gri_coefficients(ell: int, L: int, m: float, beta: float = BETA, d: int = 1) -> tuple:
    """(q_tilde, q) = (2d ell^{d-1} e^{-gamma}, 4d^2 (12 ell^2)^{d-1} e^{L^beta} e^{-gamma})."""
    if ell < 1 or L < 1 or m <= 0 or beta <= 0:
        raise ValueError("parameters must be positive")
    g = gamma(m, ell)
    q_tilde = 2 * d * ell ** (d - 1) * math.exp(-g)
    q = 4 * d * d * (12 * ell * ell) ** (d - 1) * math.exp(L ** beta - g)
    assert q > q_tilde
    return q_tilde, q


# -- separation restricted to a box ----------------------------------------------------

def box_separation_event(hull: HaarshHull, system: RotationSystem, omega: TorusPoint,
                         box: LatticeBox, N: int, g) -> SeparationEvent:
    """B_N restricted to the depth-N cubes a box orbit visits (no K_N enumeration)."""
    pts = box_orbit(system, omega, box)
    vals = hull_values(hull, pts, N)
    cubes = ancestry_indices(pts, N)[-1]
    _, first = np.unique(cubes, return_index=True)
    nums = sorted(int(vals.numerators[i]) for i in first)
    if len(nums) < 2:
        raise ValueError("box visits fewer than two cubes")
    gap = min(b - a for a, b in zip(nums, nums[1:]))
    gap_f = Fraction(gap, 1 << vals.exponent)
    thr = separation_threshold(hull.b, N, g)
    return SeparationEvent(N, gap_f <= thr, gap_f, thr)


def depth_sufficient(system: RotationSystem, omega: TorusPoint, box: LatticeBox, N: int) -> bool:
    """Orbit spacing over the box is at least 2 * 2^-N."""
    if len(box) < 2:
        return True
    return min_trajectory_spacing(system, omega, box.sites()) >= 2.0 ** (1 - N)


# -- initial scale -------------------------------------------------------------------

@dataclass(frozen=True)
class InitialScaleReport:
    zetas: np.ndarray
    admissible: np.ndarray        # min_x |zeta - g V(x)| >= g0 delta0
    max_green: np.ndarray         # max_{x,y} |G(x,y;zeta)|, nan where not admissible
    bound: float

    @property
    def violations(self) -> int:
        ok = self.admissible
        return int(np.sum(self.max_green[ok] > self.bound))


def initial_scale_check(H: BoxHamiltonian, zetas, g0: float, delta0: float, m: float) -> InitialScaleReport:
    """Either zeta is g0*delta0-close to some g V(x) or all |G| <= e^{-2 m L0}."""
    z = np.atleast_1d(np.asarray(zetas))
    gv = H.g * H.potential
    admissible = np.min(np.abs(z[:, None] - gv[None, :]), axis=1) >= g0 * delta0
    mg = np.full(z.size, np.nan)
    for i in np.flatnonzero(admissible):
        G = sla.inv(H.matrix - z[i] * np.eye(H.n))
        mg[i] = float(np.abs(G).max())
    return InitialScaleReport(z, admissible, mg, math.exp(-2 * m * H.box.L))


# -- dichotomy --------------------------------------------------------------------------

def energy_grid(schedule: ScaleSchedule, j: int, g: float, vmax: float, d: int = 1) -> np.ndarray:
    """Uniform grid over [-2d - g vmax, 2d + g vmax] with step <= e^{-L_{j+1}^{1/4}}/3."""
    Lnext = schedule.scales[j + 1]
    step = resonance_threshold(Lnext) / 3.0
    lo, hi = -2 * d - abs(g) * vmax, 2 * d + abs(g) * vmax
    n = int(math.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class DichotomyViolation:
    kind: str            # "two-singular", "singular-not-resonant", "spectra-close"
    energy: float
    centers: tuple
    witness: tuple


@dataclass
class DichotomyReport:
    j: int
    window: LatticeBox
    n_boxes: int
    n_energies: int
    violations: list
    singular_counts: np.ndarray
    n_solved: int = 0

    def count(self, kind: str) -> int:
        return sum(1 for v in self.violations if v.kind == kind)

    @property
    def two_singular(self) -> int:
        return self.count("two-singular")


def vmax_of(V) -> float:
    return float(np.max(np.abs(V))) if len(V) else 0.0


def window_radius(schedule: ScaleSchedule, j: int) -> int:
    return int(math.floor(schedule.scales[j + 1] ** (4.0 / 3.0) + 1e-9))


def verify_dichotomy(system: RotationSystem, hull: HaarshHull, omega: TorusPoint,
                     schedule: ScaleSchedule, j: int, u, energies, g: float,
                     filter_g: Optional[float] = None, N: Optional[int] = None,
                     prune: bool = True) -> DichotomyReport:
    """Scan an energy grid over all L_j sub-boxes of the window around u.

    Checks (i) no two disjoint singular sub-boxes at any energy, (ii) each
    singular sub-box is (E, L_{j+1})-resonant, (iii) disjoint sub-box
    spectra are at least delta_{j+1} apart.

    With ``prune`` the direct solves are limited to grid energies where the
    spectral bound on |G| can exceed the singularity threshold; every other
    energy is certified nonsingular by that bound.
    """
    if j + 1 >= len(schedule.scales):
        raise ValueError("schedule too short for this j")
    Lj, Lnext = schedule.scales[j], schedule.scales[j + 1]
    ntil = schedule.depths[j + 1]
    fg = g if filter_g is None else filter_g
    _check_guard(hull.nu, ntil)
    if not good_theta_filter(hull, fg, ntil).accepted:
        raise UnacceptedThetaError("theta rejected by the separation filter")
    window = LatticeBox(u, window_radius(schedule, j))
    if len(window) > 4096:
        raise ValueError("window exceeds the dense solver guard")
    pot = potential_on_box(hull, system, omega, window, N)
    V = pot.values
    subs = window.subboxes(Lj)
    E = np.asarray(energies, dtype=float)
    thr_sing = math.exp(-gamma(schedule.m, Lj))
    thr_res = resonance_threshold(Lnext)
    wsites = window.sites()

    flags = np.zeros((len(subs), E.size), dtype=bool)
    bgm = np.zeros((len(subs), E.size))
    specs = []
    n_solved = 0
    for s, box in enumerate(subs):
        idx = [window.index_of(x) for x in box.sites()]
        H = assemble(box, V[idx], g)
        w, Q = sla.eigh(H.matrix)
        specs.append(w)
        bnd = box.inner_boundary()
        c = box.index_of(box.center)
        # |G(u,y;E)| <= sum_k |psi_k(u) psi_k(y)| / dist(E, spectrum); only grid
        # points where this bound exceeds the threshold need a direct solve
        weight = float(np.max(np.abs(Q[c, :])[None, :] * np.abs(Q[bnd, :]), axis=0).sum()) if bnd.size else 0.0
        radius = 2.0 * weight / thr_sing
        lo = np.searchsorted(E, w - radius, side="left")
        hi = np.searchsorted(E, w + radius, side="right")
        cand = np.unique(np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)] or [np.zeros(0, int)]))
        if prune and cand.size < E.size:
            pick = cand
        else:
            pick = np.arange(E.size)
        if pick.size:
            cols = green_columns_batch(H, E[pick], box.center)
            vals = np.abs(cols[:, bnd]).max(axis=1) if bnd.size else np.abs(cols[:, c])
            bgm[s, pick] = vals
            flags[s, pick] = vals > thr_sing
        n_solved += pick.size

    exact_cache = {}
    float_floor = 1e-9 * (2 * window.d + abs(g) * vmax_of(V) + 1)
    dps = max(60, int(log2_fraction(schedule.deltas[j + 1]) * -0.30103) + 40)

    def exact_spec(s):
        if s not in exact_cache:
            box = subs[s]
            idx = [window.index_of(x) for x in box.sites()]
            H = assemble(box, V[idx], g)
            exact_cache[s] = exact_eigenvalues(H, [pot.exact.fraction(i) for i in idx], g, dps)
        return exact_cache[s]

    violations = []
    centers = [b.center for b in subs]
    disjoint = [(a, b) for a in range(len(subs)) for b in range(a + 1, len(subs))
                if subs[a].is_disjoint(subs[b])]
    for a, b in disjoint:
        both = np.flatnonzero(flags[a] & flags[b])
        for e in both:
            violations.append(DichotomyViolation("two-singular", float(E[e]), (centers[a], centers[b]),
                                                 (float(bgm[a, e]), float(bgm[b, e]))))
        sd = spectra_distance(specs[a], specs[b])
        target = schedule.deltas[j + 1]
        if sd < max(float(target), float_floor):
            # below double resolution: settle it with exact potentials
            Ea, Eb = exact_spec(a), exact_spec(b)
            xd = exact_spectra_distance(Ea, Eb)
            if xd < mpmath.mpf(target.numerator) / target.denominator:
                violations.append(DichotomyViolation("spectra-close", math.nan, (centers[a], centers[b]),
                                                     (float(xd),)))
    for s in range(len(subs)):
        for e in np.flatnonzero(flags[s]):
            dist = float(np.min(np.abs(specs[s] - E[e])))
            if dist >= thr_res:
                violations.append(DichotomyViolation("singular-not-resonant", float(E[e]), (centers[s],),
                                                     (float(bgm[s, e]), dist)))
    violations.sort(key=lambda v: (v.kind, v.energy if not math.isnan(v.energy) else -math.inf, v.centers))
    return DichotomyReport(j, window, len(subs), int(E.size), violations, flags.sum(axis=1), n_solved)


# -- radial descent -------------------------------------------------------------------

@dataclass(frozen=True)
class RadialDescentReport:
    boundary_green_max: float
    ns_bound: float
    nonsingular: bool
    analytic_bound: float
    margin_def: float          # gamma with the 1 + L^{-1/8} factor
    margin_proof: float        # exponent with the 1 + L^{-1/4} factor


def radial_descent(H_big: BoxHamiltonian, zeta, schedule: ScaleSchedule, j: int,
                   beta: float = BETA) -> RadialDescentReport:
    """Measured centre-to-boundary Green maximum of an L_{j+1} box against
    e^{-gamma(m, L_{j+1})}, with the GRI-iteration bound alongside."""
    Lj, Lnext = schedule.scales[j], schedule.scales[j + 1]
    if H_big.box.L != Lnext:
        raise ValueError(f"box radius {H_big.box.L} is not L_{j + 1} = {Lnext}")
    S = eigensystem(H_big, False)
    if dist_to_spectrum(S, zeta) < resonance_threshold(Lnext):
        raise ResonantBoxError("box is zeta-resonant; radial descent does not apply")
    col = green_column(H_big, zeta, H_big.box.center)
    bgm = float(np.abs(col[H_big.box.inner_boundary()]).max())
    ns = math.exp(-gamma(schedule.m, Lnext))
    _, q = gri_coefficients(Lj, Lnext, schedule.m, beta, H_big.box.d)
    k = (Lnext - 2 * Lj) // Lj
    with np.errstate(over="ignore"):
        analytic = float(np.float64(q) ** k * math.exp(math.sqrt(Lnext)))
    proof_exp = schedule.m * Lnext * (1 + Lnext ** -0.25)
    return RadialDescentReport(bgm, ns, bgm <= ns, analytic,
                               gamma(schedule.m, Lnext) + math.log(bgm) if bgm > 0 else math.inf,
                               proof_exp + math.log(bgm) if bgm > 0 else math.inf)
