import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from haarsh_lab.hamiltonian import LatticeBox, assemble
from haarsh_lab.spectral import (DecayFit, NearSingularError, SpectralData, dist_to_spectrum,
                                 eigensystem, exact_eigenvalues, fit_decay, green, green_column,
                                 green_columns_batch, min_spacing, resolvent_bound, spectra_distance,
                                 three_sigma, wegner_bounds, wegner_statistic, with_log_moduli)


def random_H(seed, L=5, g=3.0, d=1):
    rng = np.random.default_rng(seed)
    box = LatticeBox([0] * d, L)
    return assemble(box, rng.uniform(-1, 1, len(box)), g)


def test_eigensystem_examples():
    assert eigensystem(assemble(LatticeBox([0], 0), [0.25], 2.0)).eigenvalues.tolist() == [0.5]
    E = eigensystem(assemble(LatticeBox([0], 1), np.zeros(3), 1.0)).eigenvalues
    assert E == pytest.approx([-math.sqrt(2), 0, math.sqrt(2)], abs=1e-14)
    H = random_H(1, L=4, g=1e6)
    E = eigensystem(H).eigenvalues
    assert np.all(np.min(np.abs(E[:, None] - H.g * H.potential[None, :]), axis=1) <= 2)


@given(st.integers(0, 10 ** 6), st.floats(0.0, 100.0), st.integers(1, 2))
def test_eigensystem_invariants(seed, g, d):
    H = random_H(seed, L=3, g=g, d=d)
    S = eigensystem(H)
    scale = np.abs(H.matrix).sum(axis=1).max() + 1
    assert np.all(np.diff(S.eigenvalues) >= 0)
    assert np.abs(H.matrix @ S.eigenvectors - S.eigenvectors * S.eigenvalues).max() <= 1e-10 * scale
    assert np.allclose(np.linalg.norm(S.eigenvectors, axis=0), 1.0, atol=1e-12)
    assert abs(S.eigenvalues.sum() - g * H.potential.sum()) <= 1e-9 * H.n * scale
    Q = S.eigenvectors
    assert np.abs(H.matrix - (Q * S.eigenvalues) @ Q.T).max() <= 1e-9 * scale


def test_green_examples():
    H = assemble(LatticeBox([0], 0), [0.5], 4.0)
    assert green(H, 0.3, [0], [0]) == pytest.approx(1 / (2.0 - 0.3))
    # inverse of [[-1,1,0],[1,-1,1],[0,1,-1]]: det 1, (0,2) cofactor 1
    H = assemble(LatticeBox([0], 1), np.zeros(3), 1.0)
    assert green(H, 1.0, [-1], [1]) == pytest.approx(1.0, abs=1e-14)
    assert green(H, 1.0, [-1], [1]) == pytest.approx(np.linalg.inv(H.matrix - np.eye(3))[0, 2])


def test_green_near_singular_is_reported():
    H = assemble(LatticeBox([0], 1), np.zeros(3), 1.0)
    with pytest.raises(NearSingularError) as info:
        green(H, math.sqrt(2), [0], [0])
    assert info.value.dist < 1e-12


@given(st.integers(0, 10 ** 6), st.floats(-8, 8), st.floats(-1, 1))
def test_resolvent_bound_and_symmetry(seed, E, eta):
    H = random_H(seed)
    S = eigensystem(H, False)
    zeta = complex(E, eta) if abs(eta) > 1e-3 else E
    if dist_to_spectrum(S, zeta) < 1e-6:
        return
    G = np.array([green_column(H, zeta, [y]) for y in range(-5, 6)]).T
    assert np.abs(G).max() <= resolvent_bound(S, zeta) * (1 + 1e-9)
    if isinstance(zeta, float):
        assert np.abs(G - G.T).max() <= 1e-10 * max(1.0, np.abs(G).max())


def test_green_columns_batch_matches_single():
    H = random_H(3)
    E = np.linspace(-5, 5, 13)
    batch = green_columns_batch(H, E, [2])
    for i, e in enumerate(E):
        assert np.allclose(batch[i], green_column(H, e, [2]), rtol=1e-10, atol=1e-12)


def test_min_spacing_examples():
    assert min_spacing(SpectralData(np.array([0.0, 1.0, 3.0]))) == 1.0
    assert min_spacing(SpectralData(np.array([1.0, 1.0]))) == 0.0
    with pytest.raises(ValueError):
        min_spacing(SpectralData(np.array([1.0])))


def test_strong_coupling_spacing():
    rng = np.random.default_rng(5)
    for _ in range(20):
        V = rng.uniform(-1, 1, 9)
        H = assemble(LatticeBox([0], 4), V, 1e4)
        sep = np.min(np.diff(np.sort(V)))
        assert min_spacing(eigensystem(H, False)) >= H.g * sep - 4


def test_spectra_distance_examples():
    assert spectra_distance(np.array([0.0, 1.0]), np.array([0.4, 2.0])) == pytest.approx(0.4)
    assert spectra_distance(np.array([3.0, 1.0]), np.array([1.0, 3.0])) == 0.0
    with pytest.raises(ValueError):
        spectra_distance(np.array([]), np.array([1.0]))


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_spectra_distance_matches_pairwise(a, b):
    oracle = min(abs(x - y) for x in a for y in b)
    got = spectra_distance(np.array(a), np.array(b))
    assert got == oracle
    assert spectra_distance(np.array(b), np.array(a)) == got
    assert spectra_distance(np.array(a), np.array(a)) == 0.0


def test_exact_eigenvalues_agree_with_float():
    from fractions import Fraction
    box = LatticeBox([0], 3)
    V = [Fraction(k, 7) for k in range(7)]
    H = assemble(box, [float(v) for v in V], 2.0)
    E = exact_eigenvalues(H, V, 2, 40)
    assert [float(e) for e in E] == pytest.approx(np.linalg.eigvalsh(H.matrix), abs=1e-13)


def build_pair(seed):
    rng = np.random.default_rng(seed)
    b1, b2 = LatticeBox([0], 4), LatticeBox([9], 4)
    return assemble(b1, rng.uniform(-1, 1, 9), 8.0), assemble(b2, rng.uniform(-1, 1, 9), 8.0)


def test_wegner_statistic_limits():
    zero, huge = wegner_statistic(range(200), build_pair, [0.0, 100.0], 5, 3)
    assert zero.hits == 0 and zero.empirical_prob == 0.0
    assert huge.empirical_prob == 1.0
    assert huge.half_width == 0.0


def test_wegner_statistic_rejects_overlap():
    def bad(seed):
        H = random_H(seed, L=2)
        return H, H
    with pytest.raises(ValueError):
        wegner_statistic([1], bad, 0.1, 5, 3)


def test_wegner_bounds():
    inv, printed = wegner_bounds(1e-3, 5, 3)
    assert inv == 1e-3 * 2.0 ** 45 and printed == 1e-3 * 2.0 ** -90
    assert wegner_bounds(1.0, 5, 20)[0] == math.inf
    assert three_sigma(50, 100) == pytest.approx(3 * math.sqrt(0.25 / 100))


def test_fit_decay_examples():
    box = LatticeBox([0], 10)
    x = box.sites()[:, 0]
    psi = np.exp(-0.7 * np.abs(x))
    S = SpectralData(np.array([0.0]), (psi / np.linalg.norm(psi))[:, None])
    (fit,) = fit_decay(S, box)
    assert fit.mass == pytest.approx(0.7, abs=1e-12)
    assert fit.peak_site == (0,)
    delta = np.zeros(21)
    delta[4] = 1.0
    (fit,) = fit_decay(SpectralData(np.array([0.0]), delta[:, None]), box)
    assert fit == DecayFit((-6,), 50.0, 1.0, 0.0)


def test_fit_decay_envelope_holds():
    H = random_H(9, L=20, g=10.0)
    S = eigensystem(H)
    sites = H.box.sites()
    for j, fit in enumerate(fit_decay(S, H.box)):
        r = np.abs(sites - np.array(fit.peak_site)).max(axis=1)
        env = fit.prefactor * np.exp(-fit.mass * r)
        assert np.all(np.abs(S.eigenvectors[:, j]) <= env * (1 + 1e-9))


def test_log_moduli_match_vectors_where_resolved():
    H = random_H(4, L=15, g=6.0)
    S = with_log_moduli(H, eigensystem(H))
    direct = np.log(np.abs(S.eigenvectors))
    ok = np.abs(S.eigenvectors) > 1e-8
    assert np.abs(S.log_moduli[ok] - direct[ok]).max() < 1e-6
