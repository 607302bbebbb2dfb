"""Spectra, Green functions, Wegner statistics and eigenfunction decay fits."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

import mpmath
import numpy as np
import scipy.linalg as sla

from .hamiltonian import BoxHamiltonian, LatticeBox

RESIDUAL_TOL = 1e-10
DECAY_CAP = 50.0


class SpectralError(RuntimeError):
    pass


class NearSingularError(SpectralError):
    """Raised when (H - zeta) is numerically singular; carries dist(zeta, spectrum)."""

    def __init__(self, zeta, dist: float):
        super().__init__(f"H - zeta is numerically singular at zeta={zeta} (dist to spectrum {dist:.3e})")
        self.zeta = zeta
        self.dist = dist


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    max_residual: float = 0.0
    # natural log of |psi_j(x)|, accurate far below double-precision noise (d = 1 only)
    log_moduli: Optional[np.ndarray] = None

    def __len__(self):
        return self.eigenvalues.size


def eigensystem(H: BoxHamiltonian, want_vectors: bool = True) -> SpectralData:
    """Full symmetric eigensolve with residual and normalisation checks."""
    try:
        if want_vectors:
            w, Q = sla.eigh(H.matrix)
        else:
            w = sla.eigvalsh(H.matrix)
            return SpectralData(w)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed: {exc}") from exc
    scale = np.abs(H.matrix).sum(axis=1).max() + 1.0
    resid = float(np.abs(H.matrix @ Q - Q * w).max()) if w.size else 0.0
    if resid > RESIDUAL_TOL * scale:
        raise SpectralError(f"eigenpair residual {resid:.3e} exceeds tolerance")
    norms = np.linalg.norm(Q, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise SpectralError("eigenvectors are not normalised")
    return SpectralData(w, Q, resid)


def dist_to_spectrum(S: SpectralData, zeta) -> float:
    return float(np.min(np.abs(S.eigenvalues - zeta)))


def _site_index(H: BoxHamiltonian, x) -> int:
    if np.ndim(x) == 0 and H.box.d > 1:
        raise ValueError("site must be a coordinate vector")
    return H.box.index_of(np.atleast_1d(x))


def _factor(H: BoxHamiltonian, zeta):
    A = H.matrix.astype(complex if np.iscomplexobj(zeta) or complex(zeta).imag else float)
    A = A - zeta * np.eye(H.n)
    with warnings.catch_warnings():
        # exact singularity is caught by the pivot test below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e3 * np.finfo(float).eps * max(diag.max(), 1.0):
        raise NearSingularError(zeta, dist_to_spectrum(eigensystem(H, False), zeta))
    return A, (lu, piv)


def green_column(H: BoxHamiltonian, zeta, y) -> np.ndarray:
    """G(., y; zeta) over all sites via one factorisation.

    H is real symmetric, so this also equals the row G(y, .; zeta).
    """
    j = _site_index(H, y)
    A, fac = _factor(H, zeta)
    e = np.zeros(H.n, dtype=A.dtype)
    e[j] = 1.0
    w = sla.lu_solve(fac, e, check_finite=False)
    resid = float(np.abs(A @ w - e).max())
    if resid > RESIDUAL_TOL * max(1.0, float(np.abs(w).max())):
        raise NearSingularError(zeta, dist_to_spectrum(eigensystem(H, False), zeta))
    return w


def green(H: BoxHamiltonian, zeta, x, y) -> complex:
    """Matrix element (H - zeta)^{-1}(x, y)."""
    w = green_column(H, zeta, y)
    return complex(w[_site_index(H, x)])


def green_columns_batch(H: BoxHamiltonian, energies, y) -> np.ndarray:
    """G(., y; E) for a grid of real energies, shape (len(energies), n).

    Stacked LAPACK solves; singular energies come back as inf rows.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    j = _site_index(H, y)
    out = np.empty((E.size, H.n))
    eye = np.eye(H.n)
    chunk = max(1, 2_000_000 // (H.n * H.n))
    for s in range(0, E.size, chunk):
        Es = E[s:s + chunk]
        A = H.matrix[None, :, :] - Es[:, None, None] * eye
        rhs = np.zeros((Es.size, H.n, 1))
        rhs[:, j, 0] = 1.0
        try:
            out[s:s + Es.size] = np.linalg.solve(A, rhs)[:, :, 0]
        except np.linalg.LinAlgError:
            for i, e in enumerate(Es):
                try:
                    out[s + i] = np.linalg.solve(A[i], rhs[i, :, 0])
                except np.linalg.LinAlgError:
                    out[s + i] = np.inf
    return out


def resolvent_bound(S: SpectralData, zeta) -> float:
    """||(H - zeta)^{-1}|| = 1 / dist(zeta, spectrum) for self-adjoint H."""
    d = dist_to_spectrum(S, zeta)
    return math.inf if d == 0 else 1.0 / d


def min_spacing(S) -> float:
    E = np.sort(np.asarray(getattr(S, "eigenvalues", S), dtype=float))
    if E.size < 2:
        raise ValueError("need at least two eigenvalues")
    return float(np.min(np.diff(E)))


def spectra_distance(S1, S2) -> float:
    """min |E - E'| with E from S1 and E' from S2, by merging sorted lists."""
    a = np.sort(np.asarray(getattr(S1, "eigenvalues", S1), dtype=float))
    b = np.sort(np.asarray(getattr(S2, "eigenvalues", S2), dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty spectrum")
    pos = np.searchsorted(b, a)
    best = math.inf
    lo = pos - 1
    hi = pos
    ok = lo >= 0
    if ok.any():
        best = min(best, float(np.min(a[ok] - b[lo[ok]])))
    ok = hi < b.size
    if ok.any():
        best = min(best, float(np.min(b[hi[ok]] - a[ok])))
    return best


def exact_eigenvalues(H: BoxHamiltonian, potential, g, dps: int = 120) -> list:
    """Eigenvalues at ``dps`` decimal digits from exact site values.

    ``potential`` is a sequence of Fractions (or ints); the matrix is rebuilt
    in mpmath so spacings far below double resolution can be certified.
    """
    with mpmath.workdps(dps):
        n = H.n
        gf = Fraction(g)
        M = mpmath.matrix(n, n)
        for i in range(n):
            for k in range(n):
                if i != k and H.matrix[i, k] != 0:
                    M[i, k] = mpmath.mpf(float(H.matrix[i, k]))
            v = Fraction(potential[i]) * gf
            M[i, i] = mpmath.mpf(v.numerator) / v.denominator
        E = mpmath.eigsy(M, eigvals_only=True)
        return sorted(E[i] for i in range(n))


def exact_spectra_distance(E1: list, E2: list):
    """Cross-spectrum distance of two high-precision spectra (mpmath values)."""
    return min(abs(a - b) for a in E1 for b in E2)


# -- Wegner statistic ------------------------------------------------------------

@dataclass(frozen=True)
class WegnerResult:
    epsilon: float
    n_samples: int
    hits: int
    empirical_prob: float
    half_width: float           # 3 sigma, one-sided
    n_tilde: int
    bound_inverse_amplitude: float   # epsilon / a_ntilde
    bound_as_printed: float          # epsilon * 2^(-2 b ntilde^2)
    distances: np.ndarray

    @property
    def weaker_bound(self) -> float:
        return max(self.bound_inverse_amplitude, self.bound_as_printed)

    @property
    def passed(self) -> bool:
        return self.empirical_prob <= self.weaker_bound + self.half_width

    @property
    def passed_printed(self) -> bool:
        return self.empirical_prob <= self.bound_as_printed + self.half_width


def three_sigma(hits: int, n: int) -> float:
    if n <= 0:
        return math.inf
    p = hits / n
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


def _ldexp_safe(x: float, e: int) -> float:
    try:
        return math.ldexp(x, e)
    except OverflowError:
        return math.inf


def wegner_bounds(epsilon: float, b: int, n_tilde: int) -> tuple:
    """(epsilon / a_ntilde, epsilon 2^(-2 b ntilde^2)) with a_n = 2^(-b n^2)."""
    return (_ldexp_safe(epsilon, b * n_tilde * n_tilde),
            _ldexp_safe(epsilon, -2 * b * n_tilde * n_tilde))


def wegner_statistic(seeds: Iterable[int], builder: Callable, epsilon, b: int,
                     n_tilde: int) -> list:
    """Fraction of draws whose two box spectra come within epsilon.

    ``builder(seed)`` returns two assembled box Hamiltonians; the boxes must
    be disjoint. ``epsilon`` may be a scalar or a sequence (one result each;
    the spectra are computed once).
    """
    eps = np.atleast_1d(np.asarray(epsilon, dtype=float))
    if np.any(eps < 0):
        raise ValueError("epsilon must be >= 0")
    dists = []
    for seed in seeds:
        H1, H2 = builder(seed)
        if not H1.box.is_disjoint(H2.box):
            raise ValueError("Wegner boxes must be disjoint")
        dists.append(spectra_distance(sla.eigvalsh(H1.matrix), sla.eigvalsh(H2.matrix)))
    dists = np.asarray(dists)
    out = []
    for e in eps:
        hits = int(np.sum(dists <= e))
        n = dists.size
        inv, printed = wegner_bounds(float(e), b, n_tilde)
        out.append(WegnerResult(float(e), n, hits, hits / n if n else math.nan,
                                three_sigma(hits, n), n_tilde, inv, printed, dists))
    return out


# -- decay fits ----------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    peak_site: tuple
    mass: float
    prefactor: float
    max_residual: float


def log_moduli_1d(H: BoxHamiltonian, S: SpectralData) -> np.ndarray:
    """log|psi_j(x)| for a d = 1 box, shape (n, n) like the eigenvector matrix.

    Entries far from the localisation centre sit below the eigensolver's
    absolute accuracy, so they are rebuilt from ratio recursions
    r(x) = psi(x)/psi(x-1) = 1/(E - gV(x) - r(x+1)) run inward from each
    wall (the stable direction) and glued at the eigenvector's peak.
    """
    if H.box.d != 1:
        raise ValueError("ratio recursion needs d = 1")
    if S.eigenvectors is None:
        raise ValueError("eigenvectors required")
    diag = np.diag(H.matrix)
    n = H.n
    out = np.empty((n, n))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for j, E in enumerate(S.eigenvalues):
            psi = S.eigenvectors[:, j]
            p = int(np.argmax(np.abs(psi)))
            logs = np.empty(n)
            logs[p] = math.log(abs(psi[p]))
            # right side: r(x) for x = n-1 .. p+1
            r = 0.0
            right = np.empty(n)
            for x in range(n - 1, p, -1):
                r = 1.0 / (E - diag[x] - r)
                right[x] = r
            for x in range(p + 1, n):
                logs[x] = logs[x - 1] + math.log(abs(right[x])) if right[x] != 0 else -math.inf
            # left side: s(x) = psi(x)/psi(x+1) for x = 0 .. p-1
            s = 0.0
            left = np.empty(n)
            for x in range(0, p):
                s = 1.0 / (E - diag[x] - s)
                left[x] = s
            for x in range(p - 1, -1, -1):
                logs[x] = logs[x + 1] + math.log(abs(left[x])) if left[x] != 0 else -math.inf
            out[:, j] = logs
    return out


def with_log_moduli(H: BoxHamiltonian, S: SpectralData) -> SpectralData:
    return SpectralData(S.eigenvalues, S.eigenvectors, S.max_residual, log_moduli_1d(H, S))


def fit_decay(S: SpectralData, box: LatticeBox, cap: float = DECAY_CAP) -> list:
    """Min-rate exponential envelope around each eigenvector's peak.

    m = min over x != peak of (log|psi(peak)| - log|psi(x)|) / ||x - peak||,
    floored at 0 and capped at ``cap``; prefactor = |psi(peak)|.
    """
    if S.eigenvectors is None and S.log_moduli is None:
        raise ValueError("eigenvectors required")
    if S.log_moduli is not None:
        logs = S.log_moduli
    else:
        with np.errstate(divide="ignore"):
            logs = np.log(np.abs(S.eigenvectors))
    sites = box.sites()
    fits = []
    for j in range(logs.shape[1]):
        lj = logs[:, j]
        if not np.any(np.isfinite(lj)):
            raise ValueError(f"eigenvector {j} is zero")
        p = int(np.argmax(lj))
        dist = np.abs(sites - sites[p]).max(axis=1).astype(float)
        mask = dist > 0
        if mask.any():
            with np.errstate(invalid="ignore"):
                rates = (lj[p] - lj[mask]) / dist[mask]
            rates = np.where(np.isnan(rates), np.inf, rates)
            m = float(min(max(rates.min(), 0.0), cap))
        else:
            m = cap
        C = math.exp(lj[p])
        with np.errstate(over="ignore", invalid="ignore"):
            excess = np.exp(lj) - C * np.exp(-m * dist)
        resid = float(max(np.nanmax(excess), 0.0))
        fits.append(DecayFit(tuple(int(v) for v in sites[p]), m, C, resid))
    return fits
