"""Command-line harness: benchmark runs, certification loops, model scans.

Commands: run | certify | vc-scan | enumerate | bounds.  Configuration comes
from a versioned JSON file (--config); the --seed/--out/--time-limit flags
override file values.  See the README for the config and CSV schemas.

Determinism contract: with a fixed config and seed, results.csv and
summary.csv are byte-identical across invocations.  Wall-clock times go to
separate timing files, which are exempt (they can never be reproducible).
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time

import numpy as np

from . import local, micp, problems, smc
from .errors import SmcError
from .smc import SmcProblem
from .subsolve import Box, FeasibleSet

CONFIG_VERSION = 1
RESULTS_SCHEMA = "results/1"
SUMMARY_SCHEMA = "summary/1"
VCSCAN_SCHEMA = "vc-scan/1"
ENUM_CAP_CLI = 4096


# ---------------------------------------------------------------------------
# instance loading
# ---------------------------------------------------------------------------

def load_instance(spec: dict) -> SmcProblem:
    """Build a problem from an instance description (see README)."""
    if "builtin" in spec:
        lib = problems.toy_library()
        name = spec["builtin"]
        if name not in lib:
            raise ValueError(f"unknown builtin {name!r}; have {sorted(lib)}")
        return lib[name]
    if "path" in spec:
        with open(spec["path"]) as fh:
            return SmcProblem.from_json(fh.read())
    if "synthetic" in spec:
        kind = spec["synthetic"]
        if kind == "plr":
            ps = problems.plr_synthetic(
                N=spec.get("N", 60), p=spec.get("p", 6),
                B1=spec.get("B1", 2), B2=spec.get("B2", 2),
                L=spec.get("L", 100.0), seed=spec.get("gen_seed", 0))
            return problems.plr_build(ps)
        if kind == "rfl":
            rs = problems.rfl_synthetic(
                N=spec.get("N", 12), B=spec.get("B", 2),
                seed=spec.get("gen_seed", 0), Lam=spec.get("Lam", 0.0),
                R_ref=spec.get("R_ref", 1.0))
            return problems.rfl_build(rs)
        if kind == "fully_active":
            return problems.fully_active(
                spec["N"], spec["n"], spec.get("d", spec["N"]))
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if "dataset" in spec:
        builder = spec.get("builder")
        if builder == "plr":
            gamma, raw = problems.load_regression_csv(spec["dataset"])
            beta = problems.plr_feature_expand(raw) \
                if spec.get("expand_features", False) else raw
            ps = problems.PlrSpec(gamma, beta, spec.get("B1", 6),
                                  spec.get("B2", 5), spec.get("L", 100.0))
            return problems.plr_build(ps)
        if builder == "rfl":
            pop, beta = problems.load_cities_csv(spec["dataset"])
            rs = problems.RflSpec(pop, beta, spec.get("B", 10),
                                  spec.get("R_ref", 1.0), spec.get("Lam", 0.0))
            return problems.rfl_build(rs)
        raise ValueError("dataset instances need builder 'plr' or 'rfl'")
    raise ValueError("instance spec needs builtin/path/synthetic/dataset")


def _load_config(args) -> dict:
    # defaults: 50 multi-starts, the standard tolerance and iteration cap
    cfg = {"version": CONFIG_VERSION, "methods": ["am"], "starts": 50,
           "seed": 0, "delta": local.DELTA_DEFAULT, "K_max": local.KMAX_DEFAULT}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if file_cfg.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ValueError("unsupported config version")
        cfg.update(file_cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    if getattr(args, "time_limit", None) is not None:
        cfg["time_limit"] = args.time_limit
    if getattr(args, "instance", None):
        cfg["instance"] = {"builtin": args.instance}
    return cfg


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _run_one(problem, method, start, seed, delta, k_max):
    rng = np.random.default_rng(np.random.SeedSequence((seed, start)))
    q_init = local.random_weights(problem, rng)
    if method == "dca":
        from .subsolve.solve import OracleSolver
        x_init = OracleSolver(problem).solve_weights(q_init).x
        return local.dca_run(problem, x_init, delta=delta, K_max=k_max)
    schedule = local.Schedule.by_name(method)
    run_delta = 0.0 if schedule.epsilon_rule == "alternate" else delta
    return local.ram_run(problem, q_init, schedule, delta=run_delta,
                         K_max=k_max, rng=rng)


def cmd_run(cfg: dict) -> int:
    problem = load_instance(cfg["instance"])
    out = cfg.get("out", "out")
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "traces"), exist_ok=True)

    enum_value = ""
    if problem.n_pieces <= cfg.get("enum_cap", ENUM_CAP_CLI):
        enum_value = _fmt(smc.enumerate_global(
            problem, cap=cfg.get("enum_cap", ENUM_CAP_CLI))[0])

    results = []
    timings = []
    for method in cfg["methods"]:
        for start in range(cfg["starts"]):
            t0 = time.perf_counter()
            trace = _run_one(problem, method, start, cfg["seed"],
                             cfg["delta"], cfg["K_max"])
            wall = time.perf_counter() - t0
            results.append((method, start, trace.f_best, trace.iterations,
                            trace.termination))
            timings.append((method, start, wall))
            trace.meta["seed"] = f"{cfg['seed']}:{start}"
            trace.to_csv(os.path.join(out, "traces",
                                      f"{method}_{start}.csv"))

    with open(os.path.join(out, "results.csv"), "w", newline="") as fh:
        fh.write(f"# {RESULTS_SCHEMA}\n")
        fh.write("method,start,best_value,iters,termination\n")
        for method, start, val, iters, term in results:
            fh.write(f"{method},{start},{_fmt(val)},{iters},{term}\n")

    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        fh.write(f"# {SUMMARY_SCHEMA}\n")
        fh.write("method,runs,min_value,avg_value,med_value,enum_value\n")
        for method in cfg["methods"]:
            vals = [r[2] for r in results if r[0] == method]
            fh.write(",".join([
                method, str(len(vals)), _fmt(min(vals)),
                _fmt(statistics.fmean(vals)), _fmt(statistics.median(vals)),
                enum_value]) + "\n")

    with open(os.path.join(out, "timings.csv"), "w", newline="") as fh:
        fh.write("method,start,wall_s\n")
        for method, start, wall in timings:
            fh.write(f"{method},{start},{wall!r}\n")

    with open(os.path.join(out, "metadata.json"), "w") as fh:
        json.dump({"config": cfg, "schema": {"results": RESULTS_SCHEMA,
                                             "summary": SUMMARY_SCHEMA}},
                  fh, indent=2, sort_keys=True, default=str)
    return 0


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def _neighbourhood(problem, x_hat, radius) -> FeasibleSet:
    return problem.X.intersect(Box(x_hat - radius, x_hat + radius))


def cmd_certify(cfg: dict) -> int:
    problem = load_instance(cfg["instance"])
    delta_glob = cfg.get("delta_glob", micp.DELTA_GLOB_DEFAULT)
    radius = cfg.get("radius", 0.1)
    rho = cfg.get("rho", micp.RHO_DEFAULT)
    budget = micp.Budget(time_limit=cfg.get("time_limit", 120.0),
                         node_cap=cfg.get("node_cap"))
    max_rounds = cfg.get("max_rounds", 10)
    method = cfg.get("restart_method", "am")

    if "xhat" in cfg:
        x_hat = np.asarray(cfg["xhat"], dtype=float)
    else:
        trace = _run_one(problem, method, 0, cfg.get("seed", 0),
                         cfg.get("delta", local.DELTA_DEFAULT),
                         cfg.get("K_max", local.KMAX_DEFAULT))
        x_hat = trace.x_best

    try:
        fallback_bounds = micp.auto_sbounds(problem)
    except SmcError:
        fallback_bounds = None  # enumeration route only

    rounds = []
    first_value = smc.objective(problem, x_hat)
    final_value = first_value
    outcome = None
    for _ in range(max_rounds):
        S = _neighbourhood(problem, x_hat, radius)
        outcome = micp.certify_or_improve(
            problem, x_hat, rho=rho, S=S, delta_glob=delta_glob,
            budget=budget, local_bounds=fallback_bounds,
            enum_cap=cfg.get("enum_cap", micp.ENUM_FACTOR_CAP))
        rounds.append(json.loads(outcome.to_json()))
        if outcome.kind != "improved":
            break
        schedule = local.Schedule.by_name(method)
        trace = local.ram_run(problem,
                              local.greedy_weights(problem, outcome.x_new),
                              schedule,
                              delta=cfg.get("delta", local.DELTA_DEFAULT),
                              K_max=cfg.get("K_max", local.KMAX_DEFAULT))
        x_hat = trace.x_best
        final_value = min(final_value, trace.f_best, outcome.value_new)
    enhancement = 0.0
    if first_value != 0:
        enhancement = 100.0 * (first_value - final_value) / abs(first_value)
    report = {
        "first_value": first_value,
        "final_value": final_value,
        "value_enhancement_pct": enhancement,
        "restarts": max(len(rounds) - 1, 0),
        "final_kind": outcome.kind if outcome else "inconclusive",
        "rounds": rounds,
        "x_final": x_hat.tolist(),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    _emit(cfg, text, "certify.json")
    return 0


# ---------------------------------------------------------------------------
# vc-scan
# ---------------------------------------------------------------------------

def cmd_vc_scan(cfg: dict) -> int:
    problem = load_instance(cfg["instance"])
    if problem.d > 2:
        raise ValueError("vc-scan needs a 1-d or 2-d instance")
    bounds = micp.auto_sbounds(problem)
    c_grid = cfg.get("C_grid", [0.0, 0.25, 0.5, 0.75, 1.0])
    n_x = cfg.get("x_points", 101)
    lo, hi = problem.X.bounding_box()
    axes = [np.linspace(lo[i], hi[i], n_x) for i in range(problem.d)]
    grid = axes[0][:, None] if problem.d == 1 else \
        np.array([[a, b] for a in axes[0] for b in axes[1]])

    lines = [f"# {VCSCAN_SCHEMA}"]
    coord_cols = ",".join(f"x{i}" for i in range(problem.d))
    lines.append(f"C,{coord_cols},value,objective")
    for C in c_grid:
        for point in grid:
            x = np.asarray(point, dtype=float)
            v = micp.value_function(problem, bounds, C, x)
            f = smc.objective(problem, x)
            coords = ",".join(_fmt(c) for c in x)
            lines.append(f"{_fmt(C)},{coords},{_fmt(v)},{_fmt(f)}")
    _emit(cfg, "\n".join(lines) + "\n", "vc_scan.csv")
    return 0


# ---------------------------------------------------------------------------
# enumerate / bounds
# ---------------------------------------------------------------------------

def cmd_enumerate(cfg: dict) -> int:
    problem = load_instance(cfg["instance"])
    cap = cfg.get("enum_cap", smc.ENUM_CAP_DEFAULT)
    value, x, sigma = smc.enumerate_global(problem, cap=cap)
    text = json.dumps({"F_star": value, "x_star": x.tolist(),
                       "sigma_star": list(sigma.sigma)},
                      indent=2, sort_keys=True)
    _emit(cfg, text, "enumerate.json")
    return 0


def cmd_bounds(cfg: dict) -> int:
    problem = load_instance(cfg["instance"])
    bounds = micp.auto_sbounds(problem)
    _emit(cfg, bounds.to_json(), "bounds.json")
    return 0


def _emit(cfg: dict, text: str, default_name: str) -> None:
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, default_name), "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text + ("\n" if not text.endswith("\n") else ""))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="smcopt",
        description="solvers for sums of pointwise minima of convex functions")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "certify", "vc-scan", "enumerate", "bounds"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--instance", help="builtin instance name")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (stdout if omitted)")
        p.add_argument("--time-limit", dest="time_limit", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        handler = {"run": cmd_run, "certify": cmd_certify,
                   "vc-scan": cmd_vc_scan, "enumerate": cmd_enumerate,
                   "bounds": cmd_bounds}[args.command]
        return handler(cfg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
