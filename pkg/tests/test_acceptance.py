"""Exit criteria, each run at its stated scale and tolerance.

Every criterion prints one PASS/FAIL line (visible without ``-s``) and a
summary table is printed when the module finishes.
"""
import math
import time

import numpy as np
import pytest

from haarsh_lab.experiments import parse_config, run
from haarsh_lab.hamiltonian import LatticeBox, assemble, potential_on_box
from haarsh_lab.msa import ScaleSchedule, classify, subharmonic_check, subharmonic_minorant
from haarsh_lab.randelette import (HaarshHull, ThetaSample, ancestry, ancestry_indices, cube_index,
                                   hull_values_batch)
from haarsh_lab.seeding import seed_fanout, seed_fanout_array
from haarsh_lab.spectral import dist_to_spectrum, eigensystem, green_column, resolvent_bound
from haarsh_lab.torus import TorusPoint, default_system, golden_mean_system, torus_distance, translate

pytestmark = pytest.mark.acceptance

RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary_table(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is None:
        return
    tr.write_line("")
    tr.write_line("acceptance summary")
    for n in sorted(RESULTS):
        tr.write_line(RESULTS[n])


@pytest.fixture
def report(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(n: int, title: str, passed: bool, detail: str, elapsed: float, budget: float):
        ok = passed and elapsed < budget
        line = (f"CRITERION {n} {'PASS' if ok else 'FAIL'}: {title}; {detail}; "
                f"{elapsed:.1f}s (budget {budget:g}s)")
        RESULTS[n] = line
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        print(line)
        return ok

    return _report


def config(text: str):
    return parse_config(text)


def check_lines(record) -> str:
    return "; ".join(f"{c.name} {'ok' if c.passed else 'VIOLATED'}{'' if c.gated else ' (info)'} "
                     f"obs={c.observed:.4g} bound={c.bound:.4g}" for c in record.checks)


# 1 -------------------------------------------------------------------------------------------

def test_criterion_1_truncation_certificate(report):
    t0 = time.perf_counter()
    b, n = 3, 10_000
    rng = np.random.default_rng(1)
    omegas = rng.random((n, 1))
    seeds = seed_fanout_array(101, np.arange(n))
    violations, worst = 0, 0.0
    for N in range(1, 6):
        deep = hull_values_batch(b, seeds, omegas, N + 10)
        shallow = hull_values_batch(b, seeds, omegas, N)
        shift = deep.exponent - shallow.exponent
        # r_N = 2^(-2bN - bN^2) on the deep grid
        bound = 1 << (deep.exponent - 2 * b * N - b * N * N)
        diff = [abs(int(x) - (int(y) << shift)) for x, y in zip(deep.numerators, shallow.numerators)]
        violations += sum(d > bound for d in diff)
        worst = max(worst, max(d / bound for d in diff))
    elapsed = time.perf_counter() - t0
    ok = report(1, "truncation |v_{N+10} - v_N| <= 2^(-2bN) a_N, b=3, 10^4 pairs, N=1..5", violations == 0,
                f"violations={violations} worst ratio={worst:.4f}", elapsed, 10)
    assert ok


# 2 -------------------------------------------------------------------------------------------

def test_criterion_2_bad_set_probability(report):
    t0 = time.perf_counter()
    rec = run(config("""
[experiment]
mode = badset-mc
[hull]
b = 5
master_seed = 2
[physics]
g = 8
n_max = 3
[montecarlo]
n_samples = 100000
"""))
    elapsed = time.perf_counter() - t0
    ok = report(2, "P(B_N) and P(union B_N) against their bounds, b=5, g=8, 10^5 draws", rec.passed,
                check_lines(rec), elapsed, 120)
    assert ok


# 3 -------------------------------------------------------------------------------------------

def test_criterion_3_potential_separation(report):
    t0 = time.perf_counter()
    rec = run(config("""
[experiment]
mode = separation-scan
[system]
frequencies = golden
a = 1
[hull]
b = 5
master_seed = 3
[physics]
g = 8
l = 16, 64, 100
[montecarlo]
n_samples = 1000
"""))
    elapsed = time.perf_counter() - t0
    s = rec.summary
    detail = (f"accepted={s['accepted']} rejected={s['rejected']} C={s['usr_C']:.16g}; "
              + "; ".join(f"L={L}: violations={s[f'L{L}_violations']} min log2 sep={s[f'L{L}_min_log2_sep']:.1f}"
                          for L in (16, 64, 100))
              + f"; e^-sqrt(L) form {'ok' if all(c.passed for c in rec.checks if c.name.startswith('exp')) else 'VIOLATED'}")
    ok = report(3, "exact sep(V) >= 2^(-2b ntilde^2) on 10^3 accepted draws, L in {16,64,100}", rec.passed,
                detail, elapsed, 120)
    assert ok


# 4 -------------------------------------------------------------------------------------------

def test_criterion_4_initial_scale_green_decay(report):
    t0 = time.perf_counter()
    rec = run(config("""
[experiment]
mode = green-decay
[hull]
b = 3
master_seed = 4
[physics]
g = auto
m = 0.5
l0 = 8
[montecarlo]
n_samples = 100
"""))
    elapsed = time.perf_counter() - t0
    s = rec.summary
    ok = report(4, "max |G| <= e^(-2 m L0) off the g0 delta0 neighbourhoods, L0=8, 100 accepted draws",
                rec.passed, f"g={s['g']:.6g} max|G|={s['max_green']:.4g} bound={s['bound']:.4g} "
                            f"violations={s['violations']}", elapsed, 60)
    assert ok


# 5 -------------------------------------------------------------------------------------------

def test_criterion_5_wegner(report):
    t0 = time.perf_counter()
    rec = run(config("""
[experiment]
mode = wegner-mc
[hull]
b = 5
master_seed = 5
[physics]
g = 8
l = 4
epsilon = 1e-3, 1e-4
[montecarlo]
n_samples = 10000
"""))
    elapsed = time.perf_counter() - t0
    ok = report(5, "P(dist of two box spectra <= eps) under the weaker bound, L=4, 10^4 draws", rec.passed,
                check_lines(rec), elapsed, 300)
    assert ok


# 6 -------------------------------------------------------------------------------------------

def random_singular_set(rng, L, ell):
    """Empty half the time, otherwise an interval of diameter <= 2 ell inside the box."""
    if rng.random() < 0.5:
        return None
    width = int(rng.integers(0, 2 * ell + 1))
    lo = int(rng.integers(-L, L - width + 1))
    return [[x] for x in range(lo, lo + width + 1)]


def test_criterion_6_subharmonic_bound(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n, violations, with_S, example = 10_000, 0, 0, None
    for _ in range(n):
        ell = int(rng.choice([2, 3, 5]))
        q = float(rng.choice([0.1, 0.5]))
        L = int(rng.integers(ell + 1, 31))
        box = LatticeBox([0], L)
        S = random_singular_set(rng, L, ell)
        # worst case g = 1 a quarter of the time, otherwise random positive data
        g = np.ones(len(box)) if rng.random() < 0.25 else rng.random(len(box)) + 1e-3
        f = subharmonic_minorant(g, box, ell, q, S)
        rep = subharmonic_check(f, box, ell, q, S)
        assert rep.is_subharmonic
        if not rep.bound_holds:
            violations += 1
            with_S += S is not None
            if example is None:
                example = f"L={L} ell={ell} q={q} S=[{S[0][0]},{S[-1][0]}] |f(x)|={rep.actual_center:.3g} bound={rep.bound:.3g}" if S else f"L={L} ell={ell} q={q} S=empty"
    elapsed = time.perf_counter() - t0
    ok = report(6, "centre bound q^floor((L-2)/ell) M for 10^4 subharmonic functions", violations == 0,
                f"violations={violations}/{n} (with nonempty S: {with_S}); first: {example}", elapsed, 30)
    assert ok


# 7 -------------------------------------------------------------------------------------------

DICHOTOMY = """
[experiment]
mode = dichotomy-scan
[hull]
b = 3
master_seed = 7
[physics]
g = {g}
{control}
m = 0.5
l0 = 4
jmax = 1
[montecarlo]
n_samples = {n}
"""


def test_criterion_7_dichotomy(report):
    t0 = time.perf_counter()
    rec = run(config(DICHOTOMY.format(g=2 ** 18, control="control_g = 1", n=100)))
    s = rec.summary
    g_min = math.exp(2 * 0.5 * 4) + 4
    info = run(config(DICHOTOMY.format(g=repr(g_min), control="", n=20))).summary
    elapsed = time.perf_counter() - t0
    detail = (f"g=2^18: accepted={s['accepted']} windows with two singular boxes={s['windows_two_singular']} "
              f"singular-not-resonant={s['singular_not_resonant']} spectra-close={s['spectra_close']}; "
              f"control g=1: {s['control_windows_two_singular']}/{s['control_accepted']} windows violate; "
              f"info g=e^4+4: {info['windows_two_singular']}/{info['accepted']} windows violate")
    ok = report(7, "no window with two disjoint singular L0-boxes, L0=4, L1=8, 100 accepted draws",
                rec.passed, detail, elapsed, 900)
    assert ok


# 8 -------------------------------------------------------------------------------------------

def test_criterion_8_localization_length(report):
    t0 = time.perf_counter()
    rec = run(config("""
[experiment]
mode = localization-length
[hull]
b = 3
master_seed = 7
[physics]
g = 50
m = 0.5
l = 100
[montecarlo]
n_samples = 20
"""))
    elapsed = time.perf_counter() - t0
    s = rec.summary
    ok = report(8, "every fitted decay mass > 0.5, 201 sites, g=50, 20 omegas", rec.passed,
                f"min m={s['mass_min']:.3g} median m={s['mass_median']:.3g} (soft target ln(g/2d)={s['target']:.3g}) "
                f"fraction above 0.5={s['fraction_above_threshold']:.3f} of {s['n_eigenvectors']}", elapsed, 300)
    assert ok


# 9 -------------------------------------------------------------------------------------------

def test_criterion_9_structural_invariants(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    fails = {"refinement": 0, "nesting": 0, "group action": 0, "resolvent symmetry": 0,
             "resolvent bound": 0, "nonsingular => nonresonant": 0}
    counts = dict.fromkeys(fails, 0)

    # partition refinement and ancestry nesting
    for _ in range(2000):
        nu = int(rng.integers(1, 3))
        n = int(rng.integers(1, 12))
        w = rng.random(nu)
        a, b = cube_index(TorusPoint(w), n), cube_index(TorusPoint(w), n + 1)
        counts["refinement"] += 1
        fails["refinement"] += ancestry(n + 1, b.k, nu)[:n] != ancestry(n, a.k, nu)
        chain = ancestry_indices(w.reshape(1, -1), n + 1)[:, 0]
        counts["nesting"] += 1
        fails["nesting"] += tuple(int(k) + 1 for k in chain) != ancestry(n + 1, b.k, nu)

    # group action
    for _ in range(2000):
        d = int(rng.integers(1, 3))
        s = golden_mean_system() if d == 1 else default_system(2, 2)
        w = TorusPoint(rng.random(s.nu))
        x, y = rng.integers(-10 ** 5, 10 ** 5, d), rng.integers(-10 ** 5, 10 ** 5, d)
        counts["group action"] += 1
        fails["group action"] += torus_distance(translate(s, translate(s, w, x), y), translate(s, w, x + y)) > 1e-12

    # resolvent symmetry, resolvent bound and the nonsingular => nonresonant implication
    system = golden_mean_system()
    for i in range(400):
        L = int(rng.integers(2, 9))
        box = LatticeBox([0], L)
        g = float(10 ** rng.uniform(-1, 4))
        hull = HaarshHull(3, ThetaSample(seed_fanout(9, i)))
        H = assemble(box, potential_on_box(hull, system, TorusPoint([rng.random()]), box, 8), g)
        S = eigensystem(H, False)
        lim = H.norm_bound()
        E = float(rng.uniform(-lim, lim))
        if dist_to_spectrum(S, E) > 1e-8:
            G = np.array([green_column(H, E, [y]) for y in range(-L, L + 1)])
            counts["resolvent symmetry"] += 1
            fails["resolvent symmetry"] += np.abs(G - G.T).max() > 1e-10 * max(1.0, np.abs(G).max())
            counts["resolvent bound"] += 1
            fails["resolvent bound"] += np.abs(G).max() > resolvent_bound(S, E) * (1 + 1e-9)
        sched = ScaleSchedule(4, 1, 0.5, 3, 1.0, 1.0)
        c = classify(H, E, sched, spectrum=S)
        counts["nonsingular => nonresonant"] += 1
        fails["nonsingular => nonresonant"] += not c.implication_holds
    elapsed = time.perf_counter() - t0
    total = sum(fails.values())
    detail = "; ".join(f"{k}: {fails[k]}/{counts[k]} failures" for k in fails)
    ok = report(9, "structural invariants on randomized inputs", total == 0, detail, elapsed, 30)
    assert ok
