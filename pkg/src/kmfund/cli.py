"""Command-line front end.

    kmfund solve     --config PATH [--out-dir DIR]
    kmfund simulate  --config PATH [--seed N] [--scenarios N] [--measure P|Q]
                     [--percentiles 1,5,50,95,99] [--trace N]
    kmfund analytic  --config PATH [--points N] [--horizon T]
    kmfund validate  --config PATH [--checks a,b,...] [--values CSV]

Exit status: 0 on success, 1 when a validation check fails, 2 for bad input
or an infeasible problem.
"""

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import outputs
from .analytic import mattress_consumption_path, solve_w
from .config import ConfigError, load_config, parse_levels
from .oneperiod import MinimumBudget
from .simulate import simulate_paths
from .solver import InfeasibleProblem, min_budget_curve, solve_backward
from .validation import CHECKS, mattress_params, run_battery

log = logging.getLogger("kmfund")


def _prepare(cfg):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def _solve(cfg):
    return solve_backward(cfg.solve_config())


def _floor_curve(table):
    return {"t": table.times, "floor": table.floor, "x_min": min_budget_curve(table)}


def cmd_solve(cfg):
    out = _prepare(cfg)
    table = _solve(cfg)
    outputs.write_value_surface(out / "value_surface.csv", table)
    outputs.write_policy(out / "policy.csv", table)
    mono, conc = 0, 0
    for v in table.shape_violations():
        mono += v["monotone"]
        conc += v["concave"]
    summary = {
        "config": cfg.echo(),
        "grid": {"points": int(table.grid.size), "lower": table.grid[0],
                 "upper": table.grid[-1]},
        "times": int(table.n_times),
        "floor_curve": _floor_curve(table),
        "shape_violations": {"monotone": mono, "concave": conc},
    }
    outputs.write_json(out / "solve_summary.json", summary)
    outputs.write_json(out / "timings.json", table.timings)
    return 0


def cmd_simulate(cfg):
    out = _prepare(cfg)
    table = _solve(cfg)
    start = time.perf_counter()
    fan = simulate_paths(table, cfg.sim)
    sim_seconds = time.perf_counter() - start
    outputs.write_fan(out / "fan.csv", fan)
    if cfg.sim.trace:
        outputs.write_trace(out / "trace.csv", fan)
    summary = {
        "config": cfg.echo(),
        "seed": fan.seed,
        "scenarios": fan.scenarios,
        "measure": fan.measure,
        "x0": fan.x0,
        "boundary_hits": {"top_fraction": fan.top_fraction,
                          "bottom_fraction": fan.bottom_fraction,
                          "top": fan.hits_top, "bottom": fan.hits_bottom,
                          "transitions": fan.transitions},
        "discounted_consumption": {"estimate": fan.budget_estimate,
                                   "stderr": fan.budget_stderr},
    }
    if fan.measure == "Q":
        z = (fan.budget_estimate - fan.x0) / fan.budget_stderr if fan.budget_stderr else 0.0
        summary["budget_check"] = {"estimate": fan.budget_estimate, "stderr": fan.budget_stderr,
                                   "x0": fan.x0, "z_score": z,
                                   "within_3_stderr": bool(abs(z) <= 3.0)}
    outputs.write_json(out / "simulate_summary.json", summary)
    outputs.write_json(out / "timings.json", dict(table.timings, simulate_seconds=sim_seconds))
    return 0


def cmd_analytic(cfg):
    params = mattress_params(cfg)
    if params is None:
        raise ConfigError("analytic solution needs individual mode, exponential mortality "
                          "(lambda) and a power utility with 0 < n < 1 and x0 = 0")
    out = _prepare(cfg)
    horizon = cfg.analytic_horizon
    if horizon is None:
        horizon = cfg.mortality["horizon"]
    t = np.linspace(0.0, horizon, cfg.analytic_points)
    w0 = solve_w(params)
    gamma = mattress_consumption_path(params, t, w0=w0)
    outputs.write_table(out / "analytic.csv", ("t", "gamma"), (t, gamma))
    xs = np.linspace(0.0, params.x, cfg.analytic_points)
    ws = np.array([solve_w(dataclasses.replace(params, x=float(x))) for x in xs])
    v = np.array([params.v_of_w(w) for w in ws])
    g0 = np.array([mattress_consumption_path(params, 0.0, w0=w) for w in ws])
    outputs.write_table(out / "value_table.csv", ("x", "v_hat", "gamma"), (xs, v, g0))
    outputs.write_json(out / "analytic_summary.json", {
        "config": cfg.echo(),
        "params": {"a": params.a, "k": params.k, "c": params.c, "lam": params.lam,
                   "x": params.x},
        "w0": w0, "v_hat": params.v_of_w(w0), "gamma0": float(gamma[0])})
    return 0


def cmd_validate(cfg, checks=CHECKS, values=None):
    out = _prepare(cfg)
    surface = outputs.read_value_surface(values) if values is not None else None
    report = run_battery(cfg, checks, values=surface)
    failed = [name for name, r in report.items() if r["status"] == "fail"]
    outputs.write_json(out / "validate_report.json",
                       {"config": cfg.echo(), "checks": report, "failed": failed,
                        "passed": not failed})
    for name, r in report.items():
        print(f"{name}: {r['status']}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--out-dir", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int)
    common.add_argument("--scenarios", type=int)
    common.add_argument("--measure", choices=("P", "Q", "p", "q"))
    common.add_argument("--percentiles", help="comma-separated levels, e.g. 1,5,50,95,99")
    common.add_argument("--trace", type=int, help="number of scenario paths to export")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kmfund", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="backward induction; value and policy CSVs")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo fans of a solved policy")
    p = sub.add_parser("analytic", parents=[common], help="closed-form mattress solution")
    p.add_argument("--points", type=int, help="number of output rows")
    p.add_argument("--horizon", type=float, help="last output time")
    p = sub.add_parser("validate", parents=[common], help="run the self-check battery")
    p.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    p.add_argument("--values", help="check the shape of this value-surface CSV instead")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, scenarios=args.scenarios,
            measure=args.measure.upper() if args.measure else None,
            percentiles=parse_levels(args.percentiles) if args.percentiles else None,
            trace=args.trace, out_dir=args.out_dir,
            points=getattr(args, "points", None), horizon=getattr(args, "horizon", None))
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "analytic":
            return cmd_analytic(cfg)
        checks = CHECKS
        if args.checks:
            checks = tuple(c.strip() for c in args.checks.split(",") if c.strip())
        values = args.values
        if values is not None and not Path(values).is_file():
            raise ConfigError(f"value surface file not found: {values}")
        return cmd_validate(cfg, checks, values)
    except (ConfigError, InfeasibleProblem, MinimumBudget, ValueError, OSError) as exc:
        print(f"kmfund: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
