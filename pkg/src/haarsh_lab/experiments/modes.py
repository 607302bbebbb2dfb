"""Per-mode sample functions and their reductions to a ResultRecord."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from ..hamiltonian import LatticeBox, assemble, potential_on_box
from ..msa import (ScaleSchedule, UnacceptedThetaError, energy_grid, evaluation_depth, gamma,
                   initial_scale_check, n_tilde, verify_dichotomy, window_radius)
from ..randelette import (ENUMERATION_GUARD, HaarshHull, ThetaSample, bad_event_batch,
                          log2_fraction)
from ..seeding import MASK64, mix64, seed_fanout, seed_fanout_array
from ..spectral import (eigensystem, fit_decay, spectra_distance, three_sigma, wegner_bounds,
                        with_log_moduli)
from ..torus import (RotationSystem, TorusPoint, continued_fraction, convergent_denominators,
                     default_system, fit_diophantine_constants, golden_mean_system, verify_usr)
from .config import MODES, ConfigError, ExperimentConfig
from .records import Check, Curve, ResultRecord

OMEGA_DOMAIN = 0x6F6D656761000003
WORKERS_ENV = "HAARSH_LAB_WORKERS"


# -- shared helpers ------------------------------------------------------------------

def omega_from_seed(seed: int, nu: int) -> TorusPoint:
    coords = [(mix64((seed ^ OMEGA_DOMAIN) + j) >> 11) / 2.0 ** 53 for j in range(nu)]
    return TorusPoint(coords)


def build_system(cfg: ExperimentConfig, extent: int) -> RotationSystem:
    """Rotation system with C fitted over the configured (or derived) radius."""
    spec = cfg.frequencies.lower()
    if spec in ("default", "quadratic"):
        base = default_system(cfg.nu, cfg.d)
    elif spec == "golden":
        if cfg.nu != 1 or cfg.d != 1:
            raise ConfigError("golden frequencies need nu = d = 1", key="frequencies")
        base = golden_mean_system()
    else:
        vals = [float(t) for t in spec.replace(",", " ").split()]
        if len(vals) != cfg.nu * cfg.d:
            raise ConfigError(f"need {cfg.nu * cfg.d} frequency values", key="frequencies")
        base = RotationSystem(np.array(vals).reshape(cfg.d, cfg.nu))
    R = cfg.fit_radius if cfg.fit_radius is not None else max(100, 2 * extent)
    C = fit_diophantine_constants(base, cfg.A, R)
    if C <= 0:
        raise ConfigError("fitted USR constant is zero (rational frequency?)", key="frequencies")
    return base.with_constants(cfg.A, C)


def resolve_workers(cfg_workers: int, cli_workers: Optional[int] = None) -> int:
    if cli_workers is not None:
        return max(1, cli_workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return cfg_workers


def parallel_map(fn: Callable, ctx, items: list, workers: int, chunk: int = 8) -> list:
    """Apply ``fn(ctx, chunk)`` over chunks; results are concatenated in input order."""
    chunks = [items[i:i + chunk] for i in range(0, len(items), chunk)]
    if workers <= 1 or len(chunks) <= 1:
        out = [fn(ctx, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(fn, [ctx] * len(chunks), chunks))
    return [row for part in out for row in part]


def accepted_samples(master_seed: int, n: int, b: int, nu: int, g: float, N: int,
                     max_tries: Optional[int] = None) -> tuple:
    """First ``n`` sample indices (in index order) whose theta avoids B_1..B_N.

    Returns (list of (index, seed), number rejected).
    """
    if nu * N > ENUMERATION_GUARD:
        raise ConfigError(f"filter depth {N} exceeds the enumeration guard")
    max_tries = max_tries or 20 * n + 100
    chunk = max(1, min(256, (1 << 22) >> (nu * N)))
    picked, rejected, i = [], 0, 0
    while len(picked) < n:
        if i >= max_tries:
            raise RuntimeError(f"only {len(picked)} of {n} accepted draws in {max_tries} tries")
        idx = np.arange(i, min(i + chunk, max_tries))
        seeds = seed_fanout_array(master_seed, idx)
        bad = bad_event_batch(b, nu, seeds, N, g).any(axis=1)
        for k, s, flag in zip(idx, seeds, bad):
            if len(picked) == n:
                break
            if flag:
                rejected += 1
            else:
                picked.append((int(k), int(s)))
        i = int(idx[-1]) + 1
    return picked, rejected


def _prob_check(name: str, anchor: str, hits: int, n: int, bound: float, sigmas: float,
                gated: bool = True) -> Check:
    p = hits / n
    hw = sigmas / 3.0 * three_sigma(hits, n)
    return Check(name, anchor, p, bound, p <= bound + hw, gated,
                 f"hits={hits} n={n} half_width={hw:.6g}")


# -- usr-fit ----------------------------------------------------------------------------

def run_usr_fit(cfg: ExperimentConfig, workers: int):
    base = build_system(cfg, max(cfg.radii))
    rows, checks = [], []
    golden = base.nu == 1 and base.d == 1
    alpha = float(base.frequencies[0, 0])
    for R in cfg.radii:
        C = fit_diophantine_constants(base, cfg.A, R)
        rep = verify_usr(base.with_constants(cfg.A, C), R)
        row = {"radius": R, "A": cfg.A, "C_fit": C, "worst_ratio": rep.worst_ratio,
               "worst_shift": rep.worst_shift[0] if base.d == 1 else str(rep.worst_shift)}
        if golden:
            # only convergent denominators can attain the minimum of ||q alpha|| q
            qs = [1] + convergent_denominators(alpha, R)
            oracle = min(min(q * alpha % 1.0, 1 - q * alpha % 1.0) * q ** cfg.A for q in qs)
            row["C_oracle"] = oracle
        rows.append(row)
        checks.append(Check(f"usr-R{R}", MODES["usr-fit"], rep.worst_ratio, 1.0, rep.passed))
    cols = ["radius", "A", "C_fit", "worst_ratio", "worst_shift"] + (["C_oracle"] if golden else [])
    if golden and cfg.A == 1.0:
        for r in rows:
            checks.append(Check(f"oracle-R{r['radius']}", "C_fit = min_k ||q_k alpha|| q_k",
                                r["C_fit"], r["C_oracle"], abs(r["C_fit"] - r["C_oracle"]) <= 1e-12))
    curves = [Curve("C_fit", tuple(cfg.radii), tuple(r["C_fit"] for r in rows), "radius R", "fitted C")]
    summary = {"C_min": min(r["C_fit"] for r in rows), "continued_fraction": continued_fraction(alpha, 12) if golden else None}
    return cols, rows, summary, checks, curves


# -- badset-mc --------------------------------------------------------------------------------

@dataclass(frozen=True)
class _BadsetCtx:
    master_seed: int
    b: int
    nu: int
    N: int
    g: float


def _badset_chunk(ctx: _BadsetCtx, idx: list) -> list:
    seeds = seed_fanout_array(ctx.master_seed, idx)
    table = bad_event_batch(ctx.b, ctx.nu, seeds, ctx.N, ctx.g)
    rows = []
    for i, s, flags in zip(idx, seeds, table):
        row = {"sample": int(i), "seed": int(s)}
        for N in range(1, ctx.N + 1):
            row[f"B_{N}"] = bool(flags[N - 1])
        row["any"] = bool(flags.any())
        rows.append(row)
    return rows


def badset_bounds(b: int, nu: int, g: float, N: int) -> dict:
    return {
        "per_level": 2.0 ** (-(b - 2 * nu) * N) / (4 * g),
        "alt_level": 2.0 ** (-(b - 2) * N) / (2 * g),
        "union": 1.0 / (g * (2.0 ** (b - 2 * nu + 1) - 2)),
    }


def run_badset(cfg: ExperimentConfig, workers: int):
    g = cfg.g if cfg.g is not None else 8.0
    ctx = _BadsetCtx(cfg.master_seed, cfg.b, cfg.nu, cfg.N_max, g)
    if cfg.nu * cfg.N_max > ENUMERATION_GUARD:
        raise ConfigError("nu * N_max exceeds the enumeration guard", key="N_max")
    rows = parallel_map(_badset_chunk, ctx, list(range(cfg.n_samples)), workers,
                        chunk=max(1, min(4096, (1 << 20) >> (cfg.nu * cfg.N_max))))
    n = len(rows)
    checks, summary = [], {"n_samples": n, "g": g}
    probs, bounds = [], []
    for N in range(1, cfg.N_max + 1):
        hits = sum(r[f"B_{N}"] for r in rows)
        bd = badset_bounds(cfg.b, cfg.nu, g, N)
        summary[f"count_B_{N}"] = hits
        summary[f"P_B_{N}"] = hits / n
        summary[f"bound_B_{N}"] = bd["per_level"]
        summary[f"alt_bound_B_{N}"] = bd["alt_level"]
        probs.append(hits / n)
        bounds.append(bd["per_level"])
        checks.append(_prob_check(f"P(B_{N})", "P(B_N) <= 2^(-(b-2nu)N) / (4g)", hits, n,
                                  bd["per_level"], cfg.sigmas))
        checks.append(_prob_check(f"P(B_{N}) alt", "P(B_N) <= 2^(-(b-2)N) / (2g)", hits, n,
                                  bd["alt_level"], cfg.sigmas, gated=False))
    hits = sum(r["any"] for r in rows)
    ub = badset_bounds(cfg.b, cfg.nu, g, 1)["union"]
    summary.update(count_union=hits, P_union=hits / n, bound_union=ub)
    checks.append(_prob_check("P(union B_N)", "P(B(g)) <= g^-1 / (2^(b-2nu+1) - 2)", hits, n, ub, cfg.sigmas))
    levels = tuple(range(1, cfg.N_max + 1))
    curves = [Curve("empirical", levels, tuple(probs), "generation N", "P(B_N)", True, "bad-event-rates"),
              Curve("bound", levels, tuple(bounds), "generation N", "P(B_N)", True, "bad-event-rates")]
    cols = ["sample", "seed"] + [f"B_{N}" for N in levels] + ["any"]
    return cols, rows, summary, checks, curves


# -- separation-scan ----------------------------------------------------------------------------

@dataclass(frozen=True)
class _SepCtx:
    system: RotationSystem
    b: int
    Ls: tuple
    depths: tuple
    fixed_omega: Optional[float]


def _sep_chunk(ctx: _SepCtx, items: list) -> list:
    rows = []
    for i, seed in items:
        hull = HaarshHull(ctx.b, ThetaSample(seed), ctx.system.nu)
        om = TorusPoint([ctx.fixed_omega] * ctx.system.nu) if ctx.fixed_omega is not None \
            else omega_from_seed(seed, ctx.system.nu)
        for L, N in zip(ctx.Ls, ctx.depths):
            box = LatticeBox([0] * ctx.system.d, L)
            pot = potential_on_box(hull, ctx.system, om, box, N)
            sep = pot.exact.min_spacing()
            bound = Fraction(1, 1 << (2 * ctx.b * N * N))
            # smallest g with g * 2^(-2bN^2) >= exp(-sqrt L), in log2
            log2_gthr = 2 * ctx.b * N * N - math.sqrt(L) / math.log(2)
            log2_sep = log2_fraction(sep)
            rows.append({"sample": i, "seed": seed, "omega": om.coords[0], "L": L, "n_tilde": N,
                         "log2_sep": log2_sep, "log2_bound": -2.0 * ctx.b * N * N,
                         "sep_ok": sep >= bound, "distinct_cubes": bool(pot.distinct_cubes),
                         "log2_g_threshold": log2_gthr,
                         "exp_form_ok": log2_gthr + log2_sep >= -math.sqrt(L) / math.log(2)})
    return rows


def run_separation(cfg: ExperimentConfig, workers: int):
    g = cfg.g if cfg.g is not None else 8.0
    system = build_system(cfg, 2 * max(cfg.L))
    depths = tuple(cfg.depth if cfg.depth is not None else n_tilde(L, system.usr_A, system.usr_C)
                   for L in cfg.L)
    Nf = max(depths)
    picked, rejected = accepted_samples(cfg.master_seed, cfg.n_samples, cfg.b, system.nu, g, Nf)
    ctx = _SepCtx(system, cfg.b, tuple(cfg.L), depths, cfg.omega)
    rows = parallel_map(_sep_chunk, ctx, picked, workers, chunk=16)
    summary = {"accepted": len(picked), "rejected": rejected, "filter_depth": Nf, "g": g,
               "usr_C": system.usr_C}
    checks, xs, ys, bs = [], [], [], []
    for L, N in zip(cfg.L, depths):
        sub = [r for r in rows if r["L"] == L]
        bad = sum(not r["sep_ok"] for r in sub)
        worst = min(r["log2_sep"] for r in sub)
        summary[f"L{L}_min_log2_sep"] = worst
        summary[f"L{L}_violations"] = bad
        checks.append(Check(f"sep-L{L}", "sep(V, Lambda_L) >= 2^(-2 b ntilde(L)^2)", float(bad), 0.0, bad == 0,
                            note=f"n_tilde={N} min log2 sep={worst:.6g} bound={-2 * cfg.b * N * N}"))
        ebad = sum(not r["exp_form_ok"] for r in sub)
        checks.append(Check(f"exp-L{L}", "g sep(V, Lambda_L) >= exp(-L^(1/2)) at g = exp(-L^(1/2)) 2^(2 b ntilde^2)",
                            float(ebad), 0.0, ebad == 0))
        nd = sum(not r["distinct_cubes"] for r in sub)
        checks.append(Check(f"cubes-L{L}", "box orbit occupies distinct depth-ntilde cubes", float(nd), 0.0, nd == 0))
        xs.append(L)
        ys.append(worst)
        bs.append(-2.0 * cfg.b * N * N)
    curves = [Curve("min_log2_sep", tuple(xs), tuple(ys), "box radius L", "log2 sep", False, "separation"),
              Curve("log2_bound", tuple(xs), tuple(bs), "box radius L", "log2 sep", False, "separation")]
    cols = ["sample", "seed", "omega", "L", "n_tilde", "log2_sep", "log2_bound", "sep_ok",
            "distinct_cubes", "log2_g_threshold", "exp_form_ok"]
    return cols, rows, summary, checks, curves


# -- wegner-mc ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class _WegnerCtx:
    system: RotationSystem
    b: int
    L: int
    g: float
    N: int
    fixed_omega: Optional[float]


def wegner_boxes(d: int, L: int) -> tuple:
    """Two adjacent disjoint radius-L boxes."""
    return LatticeBox([0] * d, L), LatticeBox([2 * L + 1] + [0] * (d - 1), L)


def _wegner_rows(ctx: _WegnerCtx, items: list) -> list:
    b1, b2 = wegner_boxes(ctx.system.d, ctx.L)
    rows = []
    for i, seed in items:
        hull = HaarshHull(ctx.b, ThetaSample(seed), ctx.system.nu)
        om = TorusPoint([ctx.fixed_omega] * ctx.system.nu) if ctx.fixed_omega is not None \
            else omega_from_seed(seed, ctx.system.nu)
        H1 = assemble(b1, potential_on_box(hull, ctx.system, om, b1, ctx.N), ctx.g)
        H2 = assemble(b2, potential_on_box(hull, ctx.system, om, b2, ctx.N), ctx.g)
        dist = spectra_distance(eigensystem(H1, False), eigensystem(H2, False))
        rows.append({"sample": i, "seed": seed, "omega": om.coords[0], "spectra_distance": dist})
    return rows


def run_wegner(cfg: ExperimentConfig, workers: int):
    g = cfg.g if cfg.g is not None else 8.0
    L = cfg.L[0]
    system = build_system(cfg, 2 * (2 * L + 1))
    N = cfg.depth if cfg.depth is not None else evaluation_depth(2 * L + 1, system, cfg.b)
    nt = n_tilde(L, system.usr_A, system.usr_C)
    items = [(i, seed_fanout(cfg.master_seed, i)) for i in range(cfg.n_samples)]
    ctx = _WegnerCtx(system, cfg.b, L, g, N, cfg.omega)
    rows = parallel_map(_wegner_rows, ctx, items, workers, chunk=256)
    d = np.array([r["spectra_distance"] for r in rows])
    n = d.size
    summary = {"n_samples": n, "L": L, "g": g, "n_tilde": nt, "depth": N}
    checks = []
    for eps in cfg.epsilon:
        hits = int(np.sum(d <= eps))
        inv, printed = wegner_bounds(eps, cfg.b, nt)
        weaker = max(inv, printed)
        key = format(eps, "g")
        summary[f"eps{key}_hits"] = hits
        summary[f"eps{key}_P"] = hits / n
        summary[f"eps{key}_bound_inverse_amplitude"] = inv
        summary[f"eps{key}_bound_as_printed"] = printed
        checks.append(_prob_check(f"wegner-eps{key}", "P(dist <= eps) <= max(eps / a_ntilde, eps 2^(-2 b ntilde^2))",
                                  hits, n, weaker, cfg.sigmas))
        checks.append(_prob_check(f"wegner-eps{key}-printed", "P(dist <= eps) <= eps 2^(-2 b ntilde^2)",
                                  hits, n, printed, cfg.sigmas, gated=False))
    ds = np.sort(d)
    grid = np.logspace(-8, 1, 37)
    cdf = np.searchsorted(ds, grid, side="right") / max(n, 1)
    curves = [Curve("distance_cdf", tuple(grid.tolist()), tuple(cdf.tolist()), "epsilon",
                    "P(dist <= epsilon)", True)]
    return ["sample", "seed", "omega", "spectra_distance"], rows, summary, checks, curves


# -- green-decay ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class _GreenCtx:
    system: RotationSystem
    b: int
    L0: int
    m: float
    g: float
    g0: float
    N: int
    fixed_omega: Optional[float]


def admissible_zetas(gv: np.ndarray, radius: float, n_real: int = 64, n_circle: int = 16) -> np.ndarray:
    """Real points beyond the admissibility radius plus points on the circles
    |zeta - g V(x)| = radius around every site value."""
    lo, hi = float(gv.min()) - radius, float(gv.max()) + radius
    real = np.concatenate([lo - np.geomspace(1e-3, 10 * radius, n_real // 2),
                           hi + np.geomspace(1e-3, 10 * radius, n_real // 2)])
    phis = np.exp(2j * np.pi * np.arange(n_circle) / n_circle)
    circ = (gv[:, None] + radius * phis[None, :]).ravel()
    return np.concatenate([real.astype(complex), circ])


def _green_rows(ctx: _GreenCtx, items: list) -> list:
    rows = []
    box = LatticeBox([0] * ctx.system.d, ctx.L0)
    for i, seed in items:
        hull = HaarshHull(ctx.b, ThetaSample(seed), ctx.system.nu)
        om = TorusPoint([ctx.fixed_omega] * ctx.system.nu) if ctx.fixed_omega is not None \
            else omega_from_seed(seed, ctx.system.nu)
        H = assemble(box, potential_on_box(hull, ctx.system, om, box, ctx.N), ctx.g)
        radius = 2.0 * ctx.g0
        rep = initial_scale_check(H, admissible_zetas(ctx.g * H.potential, radius), ctx.g0, 2.0, ctx.m)
        worst = float(np.nanmax(rep.max_green)) if rep.admissible.any() else math.nan
        rows.append({"sample": i, "seed": seed, "omega": om.coords[0],
                     "n_admissible": int(rep.admissible.sum()), "max_green": worst,
                     "bound": rep.bound, "violations": rep.violations})
    return rows


def run_green(cfg: ExperimentConfig, workers: int):
    d = cfg.d
    g0 = math.exp(2 * cfg.m * cfg.L0) + 4 * d
    g = cfg.g if cfg.g is not None else g0 + 1
    system = build_system(cfg, 2 * cfg.L0)
    N = cfg.depth if cfg.depth is not None else evaluation_depth(cfg.L0, system, cfg.b)
    picked, rejected = accepted_samples(cfg.master_seed, cfg.n_samples, cfg.b, system.nu, g,
                                        n_tilde(cfg.L0, system.usr_A, system.usr_C))
    ctx = _GreenCtx(system, cfg.b, cfg.L0, cfg.m, g, g0, N, cfg.omega)
    rows = parallel_map(_green_rows, ctx, picked, workers, chunk=16)
    bad = sum(r["violations"] for r in rows)
    worst = max(r["max_green"] for r in rows)
    bound = math.exp(-2 * cfg.m * cfg.L0)
    summary = {"g": g, "g0": g0, "accepted": len(picked), "rejected": rejected, "max_green": worst,
               "bound": bound, "violations": bad}
    checks = [Check("initial-scale", MODES["green-decay"], worst, bound, bad == 0)]
    curves = [Curve("max_green", tuple(r["sample"] for r in rows), tuple(r["max_green"] for r in rows),
                    "sample", "max |G|", True, "green"),
              Curve("bound", tuple(r["sample"] for r in rows), tuple(bound for _ in rows),
                    "sample", "max |G|", True, "green")]
    cols = ["sample", "seed", "omega", "n_admissible", "max_green", "bound", "violations"]
    return cols, rows, summary, checks, curves


# -- dichotomy-scan -------------------------------------------------------------------------------

@dataclass(frozen=True)
class _DichCtx:
    system: RotationSystem
    b: int
    schedule: ScaleSchedule
    g: float
    js: tuple
    vmax: float
    fixed_omega: Optional[float]


def _dich_rows(ctx: _DichCtx, items: list) -> list:
    rows = []
    for i, seed in items:
        hull = HaarshHull(ctx.b, ThetaSample(seed), ctx.system.nu)
        om = TorusPoint([ctx.fixed_omega] * ctx.system.nu) if ctx.fixed_omega is not None \
            else omega_from_seed(seed, ctx.system.nu)
        for j in ctx.js:
            E = energy_grid(ctx.schedule, j, ctx.g, ctx.vmax, ctx.system.d)
            row = {"sample": i, "seed": seed, "omega": om.coords[0], "j": j, "g": ctx.g,
                   "n_energies": int(E.size)}
            try:
                rep = verify_dichotomy(ctx.system, hull, om, ctx.schedule, j, [0] * ctx.system.d, E, ctx.g)
            except UnacceptedThetaError:
                row.update(accepted=False, two_singular=0, singular_not_resonant=0, spectra_close=0,
                           n_solved=0)
            else:
                row.update(accepted=True, two_singular=rep.count("two-singular"),
                           singular_not_resonant=rep.count("singular-not-resonant"),
                           spectra_close=rep.count("spectra-close"), n_solved=rep.n_solved)
                if rep.violations:
                    v = rep.violations[0]
                    row["first_violation"] = f"{v.kind}@E={v.energy:.6g} boxes={v.centers}"
            rows.append(row)
    return rows


def hull_sup(b: int) -> float:
    return sum(2.0 ** (-b * n * n) for n in range(1, 12))


def run_dichotomy(cfg: ExperimentConfig, workers: int):
    g = cfg.g if cfg.g is not None else math.exp(2 * cfg.m * cfg.L0) + 4 * cfg.d
    sched0 = ScaleSchedule(cfg.L0, max(cfg.jmax, 1), cfg.m, cfg.b, cfg.A, 1.0)
    js = tuple(range(max(cfg.jmax, 1)))
    extent = 2 * max(window_radius(sched0, j) for j in js)
    system = build_system(cfg, extent)
    schedule = ScaleSchedule.for_system(system, cfg.L0, max(cfg.jmax, 1), cfg.m, cfg.b)
    Nf = schedule.depths[max(js) + 1]
    picked, rejected = accepted_samples(cfg.master_seed, cfg.n_samples, cfg.b, system.nu, g, Nf)
    vmax = hull_sup(cfg.b)
    ctx = _DichCtx(system, cfg.b, schedule, g, js, vmax, cfg.omega)
    rows = parallel_map(_dich_rows, ctx, picked, workers, chunk=4)
    summary = {"g": g, "accepted": len(picked), "rejected": rejected, "scales": list(schedule.scales),
               "depths": list(schedule.depths)}
    wins = sum(r["two_singular"] > 0 for r in rows)
    snr = sum(r["singular_not_resonant"] for r in rows)
    sc = sum(r["spectra_close"] for r in rows)
    summary.update(windows_two_singular=wins, singular_not_resonant=snr, spectra_close=sc)
    checks = [Check("two-singular", MODES["dichotomy-scan"], float(wins), 0.0, wins == 0),
              Check("singular-implies-resonant", "every (E,m)-singular L_j box is (E, L_{j+1})-resonant",
                    float(snr), 0.0, snr == 0),
              Check("spectra-separated", "dist[spec(H_x), spec(H_y)] >= delta_{j+1} for disjoint L_j boxes",
                    float(sc), 0.0, sc == 0)]
    if cfg.control_g is not None:
        cctx = _DichCtx(system, cfg.b, schedule, cfg.control_g, js, vmax, cfg.omega)
        crow = parallel_map(_dich_rows, cctx, picked, workers, chunk=4)
        acc = [r for r in crow if r["accepted"]]
        cwins = sum(r["two_singular"] > 0 for r in acc)
        summary.update(control_g=cfg.control_g, control_accepted=len(acc), control_windows_two_singular=cwins)
        checks.append(Check("negative-control", "at the control coupling some window has two disjoint singular boxes",
                            float(cwins), 1.0, cwins >= 1))
        rows = rows + crow
    per = {}
    for r in rows:
        per.setdefault(r["g"], []).append(r["two_singular"])
    curves = [Curve("two_singular_per_sample_g" + format(gg, "g"), tuple(range(len(v))), tuple(v),
                    "sample", "violating energies", False, "dichotomy") for gg, v in per.items()]
    cols = ["sample", "seed", "omega", "j", "g", "accepted", "n_energies", "n_solved", "two_singular",
            "singular_not_resonant", "spectra_close", "first_violation"]
    return cols, rows, summary, checks, curves


# -- localization-length ------------------------------------------------------------------------------

@dataclass(frozen=True)
class _LocCtx:
    system: RotationSystem
    b: int
    L: int
    g: float
    N: int
    theta_seed: int
    cap: float


def _loc_rows(ctx: _LocCtx, items: list) -> list:
    rows = []
    box = LatticeBox([0] * ctx.system.d, ctx.L)
    hull = HaarshHull(ctx.b, ThetaSample(ctx.theta_seed), ctx.system.nu)
    for i, seed in items:
        om = omega_from_seed(seed, ctx.system.nu)
        H = assemble(box, potential_on_box(hull, ctx.system, om, box, ctx.N), ctx.g)
        S = eigensystem(H, True)
        if box.d == 1:
            S = with_log_moduli(H, S)
        for k, (E, fit) in enumerate(zip(S.eigenvalues, fit_decay(S, box, ctx.cap))):
            rows.append({"sample": i, "omega": om.coords[0], "index": k, "energy": float(E),
                         "peak": fit.peak_site[0], "mass": fit.mass, "prefactor": fit.prefactor})
    return rows


def run_localization(cfg: ExperimentConfig, workers: int):
    g = cfg.g if cfg.g is not None else 50.0
    L = cfg.L[0]
    system = build_system(cfg, 2 * L)
    N = cfg.depth if cfg.depth is not None else evaluation_depth(L, system, cfg.b)
    Nf = min(N, ENUMERATION_GUARD // system.nu)
    picked, rejected = accepted_samples(cfg.master_seed, 1, cfg.b, system.nu, g, Nf)
    theta_seed = picked[0][1]
    items = [(i, seed_fanout(theta_seed, i)) for i in range(cfg.n_samples)]
    ctx = _LocCtx(system, cfg.b, L, g, N, theta_seed, cfg.decay_cap)
    rows = parallel_map(_loc_rows, ctx, items, workers, chunk=2)
    masses = np.array([r["mass"] for r in rows])
    target = math.log(g / (2 * system.d))
    med = float(np.median(masses))
    summary = {"g": g, "theta_seed": theta_seed, "filter_depth": Nf, "depth": N, "n_eigenvectors": masses.size,
               "mass_min": float(masses.min()), "mass_median": med, "target": target,
               "fraction_above_threshold": float(np.mean(masses > cfg.m))}
    checks = [Check("all-masses", f"every fitted decay mass > {cfg.m:g}", float(masses.min()), cfg.m,
                    bool(np.all(masses > cfg.m))),
              Check("median-mass", "median mass within a factor 2 of ln(g/2d)", med, target,
                    target / 2 <= med <= 2 * target, gated=False)]
    srt = np.sort(masses)
    curves = [Curve("sorted_masses", tuple(range(srt.size)), tuple(srt.tolist()), "rank", "fitted mass m", False,
                    "masses"),
              Curve("threshold", (0, srt.size - 1), (cfg.m, cfg.m), "rank", "fitted mass m", False, "masses")]
    cols = ["sample", "omega", "index", "energy", "peak", "mass", "prefactor"]
    return cols, rows, summary, checks, curves


RUNNERS = {
    "usr-fit": run_usr_fit,
    "separation-scan": run_separation,
    "wegner-mc": run_wegner,
    "badset-mc": run_badset,
    "green-decay": run_green,
    "dichotomy-scan": run_dichotomy,
    "localization-length": run_localization,
}

# rough seconds per sample at desk scale, for the wall-clock guard
COST = {
    "usr-fit": lambda c: 1e-6 * max(c.radii) ** c.d * len(c.radii),
    "separation-scan": lambda c: c.n_samples * (0.02 + 2e-7 * 2 ** max(c.L)) if max(c.L) < 20 else c.n_samples * 0.05,
    "wegner-mc": lambda c: c.n_samples * 2e-3 * (1 + c.L[0] / 10),
    "badset-mc": lambda c: c.n_samples * 2e-7 * 2 ** (c.nu * c.N_max + 1),
    "green-decay": lambda c: c.n_samples * 0.05,
    "dichotomy-scan": lambda c: c.n_samples * (0.05 + 2e-6 * (c.g or 60.0)) * (2 if c.control_g else 1),
    "localization-length": lambda c: c.n_samples * 2e-6 * (2 * c.L[0] + 1) ** 2 * 4,
}


def estimate_seconds(cfg: ExperimentConfig) -> float:
    return float(COST[cfg.mode](cfg))
