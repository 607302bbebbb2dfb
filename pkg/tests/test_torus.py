import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from haarsh_lab.torus import (GOLDEN_MEAN, RotationSystem, TorusPoint, continued_fraction,
                              convergent_denominators, default_system, fit_diophantine_constants,
                              golden_mean_system, min_trajectory_spacing, torus_distance, translate,
                              verify_usr)

unit = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
shift = st.integers(-10 ** 5, 10 ** 5)


def rotation(alpha):
    return RotationSystem(np.array([[alpha]]))


def test_translate_examples():
    assert translate(rotation(0.25), TorusPoint([0.0]), [3]).coords[0] == 0.75
    w = TorusPoint([0.37])
    assert translate(golden_mean_system(), w, [0]) == w
    got = translate(rotation(0.618033988749895), TorusPoint([0.9]), [1]).coords[0]
    assert got == pytest.approx(0.518033988749895, abs=1e-15)


def test_translate_dimension_mismatch():
    with pytest.raises(ValueError):
        translate(golden_mean_system(), TorusPoint([0.1]), [1, 2])


def test_coordinates_are_canonical():
    p = TorusPoint([1.0, -0.25, 3.5])
    assert p.coords == (0.0, 0.75, 0.5)
    assert all(0 <= c < 1 for c in translate(default_system(2, 2), TorusPoint([0.99, 0.01]), [-7, 13]).coords)


def test_torus_distance_examples():
    assert torus_distance(TorusPoint([0.9]), TorusPoint([0.1])) == pytest.approx(0.2)
    assert torus_distance(TorusPoint([0.1, 0.4]), TorusPoint([0.2, 0.9])) == pytest.approx(0.5)
    assert torus_distance(TorusPoint([0.3]), TorusPoint([0.3])) == 0.0
    with pytest.raises(ValueError):
        torus_distance(TorusPoint([0.1]), TorusPoint([0.1, 0.2]))


def test_min_trajectory_spacing_examples():
    assert min_trajectory_spacing(rotation(0.5), TorusPoint([0.0]), [[0], [2]]) == 0.0
    got = min_trajectory_spacing(golden_mean_system(), TorusPoint([0.0]), [[0], [1]])
    assert got == pytest.approx(0.381966011250105, abs=1e-15)
    # among |z| <= 10 the closest return is the convergent denominator 8: 5 - 8 alpha = 9 - 4 sqrt 5
    sites = [[x] for x in range(-5, 6)]
    got = min_trajectory_spacing(golden_mean_system(), TorusPoint([0.0]), sites)
    assert got == pytest.approx(9 - 4 * math.sqrt(5), abs=1e-13)
    with pytest.raises(ValueError):
        min_trajectory_spacing(golden_mean_system(), TorusPoint([0.0]), [[0]])


def test_verify_usr_examples():
    assert not verify_usr(rotation(0.5).with_constants(1.0, 1e-6), 2).passed
    assert verify_usr(golden_mean_system(1.0, 0.38), 100).passed
    rep = verify_usr(golden_mean_system(1.0, 0.38), 1)
    assert rep.worst_shift == (1,)


def test_fit_examples():
    assert fit_diophantine_constants(rotation(0.25), 1.0, 3) == pytest.approx(0.25)
    # continued-fraction oracle: min_k ||q_k alpha|| q_k over convergents, attained at q = 1
    assert fit_diophantine_constants(golden_mean_system(), 1.0, 1000) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
    assert fit_diophantine_constants(rotation(0.3), 1.0, 1) == pytest.approx(0.3)


def test_continued_fraction_of_golden_mean():
    assert continued_fraction(GOLDEN_MEAN, 10) == [0] + [1] * 9
    assert convergent_denominators(GOLDEN_MEAN, 100) == [1, 2, 3, 5, 8, 13, 21, 34, 55, 89]


def test_default_systems():
    s = default_system(2, 1)
    assert s.frequencies.shape == (1, 2)
    assert s.frequencies[0] == pytest.approx([math.sqrt(2) - 1, math.sqrt(3) - 1])
    assert default_system(1, 1).frequencies[0, 0] == pytest.approx(GOLDEN_MEAN)


def test_system_validation():
    with pytest.raises(ValueError):
        RotationSystem(np.array([[0.1]]), usr_A=-1.0)
    with pytest.raises(ValueError):
        RotationSystem(np.array([[0.1]]), usr_C=0.0)


@given(unit, shift, shift)
def test_group_action(w, x, y):
    s = golden_mean_system()
    a = translate(s, translate(s, TorusPoint([w]), [x]), [y])
    b = translate(s, TorusPoint([w]), [x + y])
    assert torus_distance(a, b) <= 1e-12


@given(st.tuples(unit, unit), st.tuples(shift, shift), st.tuples(shift, shift))
def test_group_action_higher_dimension(w, x, y):
    s = default_system(2, 2)
    a = translate(s, translate(s, TorusPoint(w), x), y)
    b = translate(s, TorusPoint(w), [x[0] + y[0], x[1] + y[1]])
    assert torus_distance(a, b) <= 1e-12


@given(st.lists(unit, min_size=3, max_size=3), st.lists(unit, min_size=3, max_size=3),
       st.lists(unit, min_size=3, max_size=3))
def test_metric_axioms(a, b, c):
    pa, pb, pc = TorusPoint(a), TorusPoint(b), TorusPoint(c)
    assert torus_distance(pa, pb) == torus_distance(pb, pa)
    assert 0.0 <= torus_distance(pa, pb) <= 0.5
    assert torus_distance(pa, pc) <= torus_distance(pa, pb) + torus_distance(pb, pc) + 1e-15
    assert torus_distance(pa, pa) == 0.0


@given(unit, unit, st.lists(st.integers(-200, 200), min_size=2, max_size=20, unique=True))
def test_spacing_translation_invariant(w1, w2, xs):
    s = golden_mean_system()
    sites = [[x] for x in xs]
    a = min_trajectory_spacing(s, TorusPoint([w1]), sites)
    b = min_trajectory_spacing(s, TorusPoint([w2]), sites)
    assert abs(a - b) <= 1e-12


@given(st.floats(0.01, 0.99), st.floats(0.5, 2.0), st.integers(1, 300))
def test_fitted_constant_passes(alpha, A, R):
    s = rotation(alpha)
    C = fit_diophantine_constants(s, A, R)
    if C > 0:
        assert verify_usr(s.with_constants(A, C), R).passed
