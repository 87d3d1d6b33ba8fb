"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

from . import allocator, blocking, controller, finite_opt, presets, ratecost, rdi, reproduce, simulator, validation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("tdcache")


def _load_rdi(arg):
    if os.path.exists(arg):
        return rdi.spec_from_dict(presets.load_json(arg))
    return rdi.preset(arg)


def _load_flow(arg):
    if os.path.exists(arg):
        return presets.flow_from_dict(presets.load_json(arg))
    return presets.flow(arg)


def _json_default(o):
    if isinstance(o, float):
        return str(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    return str(o)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _emit_json(obj, out):
    text = json.dumps(_clean(obj), indent=2, default=_json_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _emit_csv(columns, rows, out):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([reproduce._fmt(float(v)) if isinstance(v, float) else v for v in row])
    finally:
        if out:
            fh.close()


# --- commands -------------------------------------------------------------------


def cmd_curve(a):
    curve = ratecost.build_curve(_load_rdi(a.rdi), a.grid)
    _emit_csv(("r", "s_static", "s_envelope", "classification"), curve.to_rows(), a.out)
    return EXIT_OK


def cmd_envelope(a):
    curve = ratecost.build_curve(_load_rdi(a.rdi), a.grid)
    rows = list(zip(curve.env_r, curve.env_s, curve.env_t))
    _emit_csv(("r", "s", "t"), rows, a.out)
    return EXIT_OK


def cmd_allocate(a):
    f = _load_flow(a.flow)
    _emit_json(allocator.allocate(f, a.target_r).to_dict(), a.out)
    return EXIT_OK


def cmd_overall_curve(a):
    oc = allocator.overall_cost_rate(_load_flow(a.flow))
    _emit_csv(("s", "r_breve"), list(zip(oc.s, oc.r)), a.out)
    return EXIT_OK


def cmd_blocking(a):
    if a.model == "erlang":
        val = blocking.erlang_b(a.L, a.load)
    elif a.model == "bound":
        val = blocking.blocking_upper_bound(a.L, a.load, a.c2)
    elif a.model == "heavy":
        val = blocking.heavy_traffic_blocking(a.L, a.load)
    else:
        z = a.peakedness if a.peakedness is not None else a.c2
        val = blocking.diffusion_blocking(a.L, a.load, z)
    _emit_json({"model": a.model, "L": a.L, "load": a.load, "c2": a.c2, "blocking": float(val)}, a.out)
    return EXIT_OK


def cmd_optimize(a):
    f = _load_flow(a.flow)
    res = finite_opt.optimize(f, a.L, a.lam, a.c2)
    _emit_json(res.to_dict(), a.out)
    return EXIT_OK


def cmd_qc_verify(a):
    ok, count, witness = finite_opt.qc_verify(a.max_L, a.threads)
    _emit_json({"max_L": a.max_L, "pairs_checked": count, "nonnegative": ok, "witness": witness}, a.out)
    if not ok:
        print(f"negative discriminant at (L, l) = {witness}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(a):
    cfg = presets.sim_config_from_dict(presets.load_json(a.config), seed=a.seed, record=a.record_ecdf)
    rep = simulator.run(cfg)
    out = rep.to_dict()
    if a.record_ecdf:
        xs = rep.caching_times
        k = min(len(xs), 1001)
        idx = [round(i * (len(xs) - 1) / (k - 1)) for i in range(k)] if k > 1 else [0]
        out["ecdf"] = {"x": [float(xs[i]) for i in idx], "F": [(i + 1) / len(xs) for i in idx]}
    _emit_json(out, a.out)
    return EXIT_OK


def cmd_control(a):
    f = _load_flow(a.flow)
    arr = presets.arrivals(a.arrivals, f.lam)
    if a.mode == "infinite":
        if a.target_S is None:
            raise presets.ConfigError("--target-S is required in infinite mode")
        env = controller.SimEnvironment(f, arr, seed=a.seed)
        st = controller.run_infinite(a.target_S, env, epochs=a.epochs, window=a.window)
        rows = [(h["epoch"], h["beta"], h["S_hat"]) for h in st.history]
        _emit_csv(("epoch", "beta", "S_hat"), rows, a.out)
    else:
        if a.L is None:
            raise presets.ConfigError("--L is required in finite mode")
        env = controller.SimEnvironment(f, arr, buffer=a.L, seed=a.seed)
        st = controller.run_finite(env, window=a.window)
        rows = [(h["epoch"], h["beta"], h["R_hat"]) for h in st.history]
        _emit_csv(("epoch", "beta", "R_hat"), rows, a.out)
    if not st.converged:
        print("controller did not converge within the epoch budget", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_reproduce(a):
    path, results = reproduce.reproduce(a.preset, a.out or ".", seed=a.seed, threads=a.threads, check=not a.no_check)
    print(path)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_validate(a):
    ids = a.only or list(validation.CRITERIA)
    unknown = [i for i in ids if i not in validation.CRITERIA]
    if unknown:
        raise presets.ConfigError(f"unknown criteria {unknown}")
    results = []
    for cid in ids:
        r = validation.run_check(cid, seed=a.seed, workers=a.threads)
        print(r.line(), file=sys.stderr)
        results.append(r)
    _emit_json({"passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}, a.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdcache", description="Time-domain buffer-sharing caching toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    for parser, default in ((p, None), (common, argparse.SUPPRESS)):
        parser.add_argument("--seed", type=int, default=0 if default is None else default, help="base random seed")
        parser.add_argument("--threads", type=int, default=1 if default is None else default, help="worker processes")
        parser.add_argument("--out", default=default, help="output file (directory for reproduce)")
        parser.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("curve", cmd_curve, "static and envelope rate-cost curve of one RDI")
    sp.add_argument("--rdi", required=True, help="preset name (p1..p10) or JSON file")
    sp.add_argument("--grid", type=int, default=ratecost.DEFAULT_GRID)

    sp = add("envelope", cmd_envelope, "vertices of the lower convex envelope")
    sp.add_argument("--rdi", required=True)
    sp.add_argument("--grid", type=int, default=ratecost.DEFAULT_GRID)

    sp = add("allocate", cmd_allocate, "optimal per-class policies for a target hit ratio")
    sp.add_argument("--flow", required=True, help="preset name (pi1..pi3) or JSON file")
    sp.add_argument("--target-r", type=float, required=True)

    sp = add("overall-curve", cmd_overall_curve, "overall cost-rate curve of a flow")
    sp.add_argument("--flow", required=True)

    sp = add("blocking", cmd_blocking, "blocking probability of an L-slot buffer")
    sp.add_argument("--L", type=float, required=True)
    sp.add_argument("--load", type=float, required=True)
    sp.add_argument("--c2", type=float, default=1.0)
    sp.add_argument("--peakedness", type=float, default=None, help="diffusion model only; defaults to c2")
    sp.add_argument("--model", choices=("erlang", "diffusion", "bound", "heavy"), default="erlang")

    sp = add("optimize", cmd_optimize, "finite-buffer optimal mean caching time")
    sp.add_argument("--flow", required=True)
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--c2", type=float, default=None)

    sp = add("qc-verify", cmd_qc_verify, "exact check of the quasi-concavity discriminant")
    sp.add_argument("--max-L", type=int, default=finite_opt.QC_VERIFIED_L)

    sp = add("simulate", cmd_simulate, "run the loss-queue simulator")
    sp.add_argument("--config", required=True)
    sp.add_argument("--record-ecdf", action="store_true")

    sp = add("control", cmd_control, "online shadow-price controller against the simulator")
    sp.add_argument("--mode", choices=("infinite", "finite"), required=True)
    sp.add_argument("--flow", required=True)
    sp.add_argument("--target-S", type=float, default=None, help="stored bits (infinite mode)")
    sp.add_argument("--L", type=int, default=None, help="buffer slots (finite mode)")
    sp.add_argument("--arrivals", choices=presets.ARRIVAL_KINDS, default="poisson")
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--window", type=int, default=controller.DEFAULT_WINDOW)

    sp = add("reproduce", cmd_reproduce, "write figure data as CSV")
    sp.add_argument("preset", choices=sorted(reproduce.PRESETS))
    sp.add_argument("--no-check", action="store_true", help="skip the associated acceptance checks")

    sp = add("validate", cmd_validate, "run the acceptance suite")
    sp.add_argument("--only", nargs="*", default=None, help="subset of criteria, e.g. A3 A12")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (presets.ConfigError, rdi.RdiError, allocator.InfeasibleTarget, ratecost.InfeasibleHitRatio) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
