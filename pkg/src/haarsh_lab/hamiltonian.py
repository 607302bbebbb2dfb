"""Lattice boxes and Dirichlet-restricted operators H = Delta + g V.

Sites of a box are numbered lexicographically over coordinates (first
coordinate slowest), so row ``i`` of the matrix always refers to
``box.sites()[i]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .randelette import DyadicValues, HaarshHull, ancestry_indices, hull_values
from .torus import RotationSystem, TorusPoint, orbit

MAX_SITES = 4096


@dataclass(frozen=True)
class LatticeBox:
    """Lambda_L(u) = {x : ||x - u||_inf <= L}."""

    center: tuple
    L: int

    def __init__(self, center, L: int):
        c = tuple(int(v) for v in np.atleast_1d(center))
        if not c:
            raise ValueError("center must have at least one coordinate")
        if int(L) < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "L", int(L))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    def __len__(self):
        return self.side ** self.d

    def sites(self) -> np.ndarray:
        axes = [np.arange(c - self.L, c + self.L + 1) for c in self.center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return grid.reshape(-1, self.d)

    def offsets(self) -> np.ndarray:
        return self.sites() - np.asarray(self.center)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.max(np.abs(x - np.asarray(self.center))) <= self.L)

    def index_of(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (self.d,) or not self.contains(x):
            raise KeyError(f"site {tuple(x)} not in box")
        r = x - np.asarray(self.center) + self.L
        return int(np.ravel_multi_index(tuple(r), (self.side,) * self.d))

    def inner_boundary(self) -> np.ndarray:
        """Indices of sites with ||x - u|| = L."""
        dist = np.abs(self.offsets()).max(axis=1)
        return np.flatnonzero(dist == self.L)

    def outer_boundary(self) -> np.ndarray:
        """Sites with ||x - u|| = L + 1."""
        return LatticeBox(self.center, self.L + 1).sites()[
            LatticeBox(self.center, self.L + 1).inner_boundary()]

    def edge_boundary(self) -> list:
        """Pairs (w, w') with w inside, w' outside and ||w - w'||_1 = 1."""
        out = []
        for i in self.inner_boundary():
            w = self.sites()[i]
            for j in range(self.d):
                for s in (-1, 1):
                    w2 = w.copy()
                    w2[j] += s
                    if not self.contains(w2):
                        out.append((tuple(int(v) for v in w), tuple(int(v) for v in w2)))
        return out

    def is_disjoint(self, other: "LatticeBox") -> bool:
        gap = np.abs(np.asarray(self.center) - np.asarray(other.center))
        return bool(np.any(gap > self.L + other.L))

    def subboxes(self, ell: int) -> list:
        """Radius-ell boxes centred on the ell-spaced lattice, fully inside."""
        reach = self.L - ell
        if reach < 0:
            return []
        steps = np.arange(-(reach // ell) * ell, reach + 1, ell) if ell > 0 else np.array([0])
        out = []
        for off in itertools.product(steps, repeat=self.d):
            out.append(LatticeBox(np.asarray(self.center) + np.asarray(off), ell))
        return out


@dataclass(frozen=True)
class BoxPotential:
    """Site potential on a box: doubles for linear algebra plus exact values."""

    values: np.ndarray
    exact: Optional[DyadicValues]
    depth: Optional[int]
    distinct_cubes: Optional[bool] = None


@dataclass(frozen=True)
class BoxHamiltonian:
    box: LatticeBox
    g: float
    potential: np.ndarray
    matrix: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def norm_bound(self) -> float:
        return 2 * self.box.d + abs(self.g) * float(np.max(np.abs(self.potential)))


def box_orbit(system: RotationSystem, omega: TorusPoint, box: LatticeBox) -> np.ndarray:
    if box.d != system.d:
        raise ValueError(f"box has d={box.d}, system has d={system.d}")
    return orbit(system, omega, box.sites())


def potential_on_box(hull: HaarshHull, system: RotationSystem, omega: TorusPoint,
                     box: LatticeBox, N: Optional[int] = None) -> BoxPotential:
    """V(x) = v_N(T^x omega) at every site, exact and as doubles.

    ``N`` defaults to the msa evaluation depth for this box.
    """
    if N is None:
        from .msa import evaluation_depth
        N = evaluation_depth(box.L, system, hull.b)
    pts = box_orbit(system, omega, box)
    exact = hull_values(hull, pts, N)
    distinct = None
    if len(box) > 1 and N * system.nu <= 62:
        cubes = ancestry_indices(pts, N)[-1]
        distinct = bool(np.unique(cubes).size == cubes.size)
    return BoxPotential(exact.to_float(), exact, N, distinct)


def _as_values(potential) -> np.ndarray:
    if isinstance(potential, BoxPotential):
        return np.asarray(potential.values, dtype=float)
    if isinstance(potential, DyadicValues):
        return potential.to_float()
    return np.asarray(potential, dtype=float).ravel()


def assemble(box: LatticeBox, potential, g: float) -> BoxHamiltonian:
    """Dense Dirichlet matrix: unit hopping between l1-neighbours, g V on the diagonal."""
    n = len(box)
    if n > MAX_SITES:
        raise ValueError(f"box has {n} sites, dense limit is {MAX_SITES}")
    V = _as_values(potential)
    if V.size != n:
        raise ValueError(f"potential has {V.size} values, box has {n} sites")
    if not np.all(np.isfinite(V)):
        raise ValueError("potential contains non-finite values")
    H = np.diag(float(g) * V)
    side = box.side
    idx = np.arange(n).reshape((side,) * box.d)
    for axis in range(box.d):
        a = np.take(idx, np.arange(side - 1), axis=axis).ravel()
        b = np.take(idx, np.arange(1, side), axis=axis).ravel()
        H[a, b] = 1.0
        H[b, a] = 1.0
    H.setflags(write=False)
    V = V.copy()
    V.setflags(write=False)
    return BoxHamiltonian(box, float(g), V, H)


def potential_separation(values: Union[np.ndarray, DyadicValues, BoxPotential]) -> Union[float, Fraction]:
    """sep(V): smallest |V(x) - V(y)| over distinct sites.

    Exact (a Fraction) when given exact values, a float otherwise.
    """
    if isinstance(values, BoxPotential):
        values = values.exact if values.exact is not None else values.values
    if isinstance(values, DyadicValues):
        return values.min_spacing()
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size < 2:
        raise ValueError("need at least two sites")
    return float(np.min(np.diff(v)))
