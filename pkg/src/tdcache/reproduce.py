"""Figure data: theory and simulation columns written side by side as CSV.

Each preset names the acceptance checks that cover it; ``reproduce``
reports them so the CLI can set its exit code.
"""

from __future__ import annotations

import csv
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import allocator, blocking, finite_opt, presets, ratecost, rdi, simulator, validation
from .allocator import FlowSpec
from .ratecost import CachePolicy

SIM_ARRIVALS = 100_000
LAM = 10.0


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    flows: tuple
    sweep: dict
    columns: tuple
    checks: tuple


PRESETS = {
    "fig4": ExperimentPreset(
        "fig4",
        (),
        {"classes": presets.CLASS_NAMES, "points": 20},
        ("class", "r", "s_theory", "s_envelope", "classification", "t", "r_sim", "r_sim_se", "s_sim", "s_sim_se"),
        ("A1", "A2", "A4", "A5"),
    ),
    "fig5": ExperimentPreset(
        "fig5",
        ("pi1", "pi2", "pi3"),
        {"r": "20 points on (0, r_sup)"},
        ("flow", "r", "s_theory", "r_sim", "r_sim_se", "s_sim", "s_sim_se"),
        ("A6", "A7"),
    ),
    "fig6": ExperimentPreset(
        "fig6",
        ("pi1", "pi2"),
        {"L": (1, 10, 100), "s": "16 points on (0, s_max]", "arrivals_at_L10": presets.ARRIVAL_KINDS},
        ("flow", "L", "arrivals", "s", "r_erlang", "r_diffusion", "r_bound", "r_small_buffer", "r_sim", "r_sim_se", "blocking_sim"),
        ("A8", "A9"),
    ),
    "fig7": ExperimentPreset(
        "fig7",
        ("pi1", "pi2"),
        {"L": (1, 2, 5, 10, 15, 20, 30, 50), "arrivals": presets.ARRIVAL_KINDS},
        ("flow", "arrivals", "L", "s_star_theory", "s_star_sim", "regime"),
        ("A10", "A14"),
    ),
    "fig8": ExperimentPreset(
        "fig8",
        ("pi1", "pi2"),
        {"L": (1, 2, 5, 10, 15, 20, 30, 50), "arrivals": presets.ARRIVAL_KINDS},
        ("flow", "arrivals", "L", "r_star_theory", "r_star_sim", "r_star_sim_se"),
        ("A10", "A14"),
    ),
    "fig9": ExperimentPreset(
        "fig9",
        ("pi2",),
        {"L": (1, 30, 200), "lambda": tuple(range(10, 101, 10)), "arrivals": presets.ARRIVAL_KINDS},
        ("L", "arrivals", "lambda", "s_star", "R_star_theory", "R_sim", "R_sim_se"),
        ("A11",),
    ),
}


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _seed(base, *key):
    return int(np.random.SeedSequence([base, *[zlib.crc32(repr(k).encode()) for k in key]]).generate_state(1)[0])


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else ("inf" if math.isinf(v) else repr(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


# --- fig4 -------------------------------------------------------------------


def _fig4_point(args):
    name, r, seed = args
    spec = rdi.preset(name)
    curve = ratecost.build_curve(spec)
    t = float(spec.law.quantile(r + spec.law.q))
    rep = simulator.run(
        simulator.SimConfig(
            FlowSpec(((1.0, spec),), lam=LAM), (CachePolicy.deterministic(t),), simulator.ArrivalProcess("poisson", LAM), None, SIM_ARRIVALS, seed
        )
    )
    return {
        "class": name,
        "r": r,
        "s_theory": float(ratecost.rate_cost(spec, r)),
        "s_envelope": float(curve.envelope(r)),
        "classification": curve.classification,
        "t": t,
        "r_sim": rep.hit_ratio,
        "r_sim_se": rep.hit_ratio_se,
        "s_sim": rep.mean_caching_time,
        "s_sim_se": rep.mean_caching_time_se,
    }


def fig4(seed=0, threads=1):
    jobs = []
    for name in presets.CLASS_NAMES:
        spec = rdi.preset(name)
        for r in np.linspace(0.0, spec.law.demand, 22)[1:-1]:
            jobs.append((name, float(r), _seed(seed, "fig4", name, r)))
    return _map(_fig4_point, jobs, threads)


# --- fig5 -------------------------------------------------------------------


def _fig5_point(args):
    name, r, seed = args
    f = presets.flow(name)
    alloc = allocator.allocate(f, r)
    rep = simulator.run(simulator.SimConfig(f, alloc.policies, presets.arrivals("poisson", LAM), None, SIM_ARRIVALS, seed))
    return {
        "flow": name,
        "r": r,
        "s_theory": alloc.s,
        "r_sim": rep.hit_ratio,
        "r_sim_se": rep.hit_ratio_se,
        "s_sim": rep.mean_caching_time,
        "s_sim_se": rep.mean_caching_time_se,
    }


def fig5(seed=0, threads=1):
    jobs = []
    for name in PRESETS["fig5"].flows:
        f = presets.flow(name)
        # stay clear of the vertical asymptotes, where simulated costs are unbounded
        top = f.r_sup * (0.98 if math.isinf(f.s_sup) else 1.0)
        for r in np.linspace(0.0, top, 21)[1:]:
            jobs.append((name, float(r), _seed(seed, "fig5", name, r)))
    return _map(_fig5_point, jobs, threads)


# --- fig6 -------------------------------------------------------------------


def _s_max(f):
    return f.s_sup if math.isfinite(f.s_sup) else 3.0


def _fig6_point(args):
    name, L, kind, s, seed = args
    f = presets.flow(name)
    arr = presets.arrivals(kind, LAM)
    alloc = allocator.policies_for_cost(f, s)
    stats = allocator.policy_stats(f, alloc.policies)
    z = blocking.peakedness(stats, s, arr.c2, check=False)
    rep = simulator.run(simulator.SimConfig(f, alloc.policies, arr, L, SIM_ARRIVALS, seed))
    return {
        "flow": name,
        "L": L,
        "arrivals": kind,
        "s": s,
        "r_erlang": alloc.r * (1.0 - blocking.erlang_b(L, LAM * s)),
        "r_diffusion": alloc.r * (1.0 - blocking.diffusion_blocking(L, LAM * s, z)),
        "r_bound": alloc.r * (1.0 - blocking.blocking_upper_bound(L, LAM * s, arr.c2)),
        "r_small_buffer": min(1.0, L / LAM * alloc.r / s),
        "r_sim": rep.hit_ratio,
        "r_sim_se": rep.hit_ratio_se,
        "blocking_sim": rep.blocking_prob,
    }


def fig6(seed=0, threads=1):
    jobs = []
    for name in PRESETS["fig6"].flows:
        f = presets.flow(name)
        for L in (1, 10, 100):
            kinds = presets.ARRIVAL_KINDS if L == 10 else ("poisson",)
            for kind in kinds:
                for s in np.linspace(0.0, _s_max(f), 17)[1:]:
                    jobs.append((name, L, kind, float(s), _seed(seed, "fig6", name, L, kind, s)))
    return _map(_fig6_point, jobs, threads)


# --- fig7 / fig8 --------------------------------------------------------------


def _opt_point(args):
    name, kind, L, seed = args
    f = presets.flow(name)
    arr = presets.arrivals(kind, LAM)
    opt = finite_opt.optimize(f, L, LAM, arr.c2)
    lo, hi = 0.5 * opt.s_star, min(_s_max(f), 1.5 * opt.s_star + 0.05)
    grid = np.linspace(max(lo, 1e-3), hi, 9)
    best = (-1.0, 0.0, 0.0)
    for k, s in enumerate(grid):
        pols = allocator.policies_for_cost(f, float(s)).policies
        rep = simulator.run(simulator.SimConfig(f, pols, arr, L, SIM_ARRIVALS, seed + k))
        if rep.hit_ratio > best[0]:
            best = (rep.hit_ratio, float(s), rep.hit_ratio_se)
    return {
        "flow": name,
        "arrivals": kind,
        "L": L,
        "s_star_theory": opt.s_star,
        "s_star_sim": best[1],
        "regime": opt.regime,
        "r_star_theory": opt.r_star,
        "r_star_sim": best[0],
        "r_star_sim_se": best[2],
    }


def fig78(seed=0, threads=1):
    jobs = []
    for name in PRESETS["fig7"].flows:
        for kind in presets.ARRIVAL_KINDS:
            for L in PRESETS["fig7"].sweep["L"]:
                jobs.append((name, kind, L, _seed(seed, "fig78", name, kind, L)))
    return _map(_opt_point, jobs, threads)


# --- fig9 -------------------------------------------------------------------


def _fig9_point(args):
    L, kind, lam, seed = args
    f = presets.flow("pi2", lam=lam)
    arr = presets.arrivals(kind, lam)
    opt = finite_opt.optimize(f, L, lam, arr.c2)
    pols = allocator.policies_for_cost(f, opt.s_star).policies
    rep = simulator.run(simulator.SimConfig(f, pols, arr, L, SIM_ARRIVALS, seed))
    return {
        "L": L,
        "arrivals": kind,
        "lambda": lam,
        "s_star": opt.s_star,
        "R_star_theory": opt.R_star,
        "R_sim": rep.effective_throughput,
        "R_sim_se": rep.effective_throughput_se,
    }


def fig9(seed=0, threads=1):
    jobs = []
    for L in PRESETS["fig9"].sweep["L"]:
        for kind in presets.ARRIVAL_KINDS:
            for lam in PRESETS["fig9"].sweep["lambda"]:
                jobs.append((L, kind, float(lam), _seed(seed, "fig9", L, kind, lam)))
    return _map(_fig9_point, jobs, threads)


_RUNNERS = {"fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig78, "fig8": fig78, "fig9": fig9}


def reproduce(name: str, out_dir=".", seed=0, threads=1, check=True):
    """Write ``<out_dir>/<name>.csv`` and run the acceptance checks tied to the preset.

    Returns ``(csv_path, check_results)``.
    """
    if name not in PRESETS:
        raise presets.ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    rows = _RUNNERS[name](seed=seed, threads=threads)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.csv")
    write_csv(path, p.columns, rows)
    results = validation.run_all(p.checks, seed=seed, workers=threads) if check else []
    return path, results
