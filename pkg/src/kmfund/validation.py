"""Self-checks run by ``kmfund validate``.

Each check returns a dict with ``status`` in ``{"pass", "fail", "skipped"}``
plus the numbers it was decided on.
"""

import math
from dataclasses import replace

import numpy as np
from scipy import optimize

from .analytic import MattressParams, mattress_consumption_path
from .model import FundMode, MarketParams, MortalityModel
from .simulate import simulate_paths
from .solver import GridSpec, SolveConfig, solve_backward
from .valuefn import PLValueFunction

SHAPE_SLACK = 1e-12
REFINE_SLACK = 1e-12
BRUTE_RTOL = 1e-4
ANALYTIC_RTOL = 0.02
ANALYTIC_WINDOW = 100.0
INCREMENT_TOL = 1e-3


def _status(ok):
    return "pass" if ok else "fail"


def _pl_value(grid, ell, y):
    """``-exp(-l)`` interpolated linearly in ``v``; ``-inf`` left of the finite tail."""
    finite = np.isfinite(ell)
    if not finite.any():
        return np.full(np.shape(y), -np.inf)
    f = int(np.argmax(finite))
    xs, vs = grid[f:], -np.exp(-ell[f:])
    y = np.asarray(y, dtype=float)
    out = np.interp(y, xs, vs)
    return np.where(y < xs[0] * (1 - 1e-14), -np.inf, out)


def brute_force_deterministic(market, utility, mortality, mode, grid, n_scan=20001):
    """Values and consumption of the ``mu = r`` problem by exhaustive search.

    With no risk premium the best payoff is deterministic, so each grid budget
    only needs a one-dimensional search over consumption: a dense scan followed
    by a bounded Brent polish around the best scan point.
    """
    if market.M != 0.0:
        raise ValueError("exhaustive deterministic search needs mu = r")
    mode = FundMode.parse(mode)
    grid = np.asarray(grid, dtype=float)
    dt = market.delta_t
    K = mortality.n_steps
    s_all = mortality.one_step_survival
    ell = np.full((K, grid.size), -np.inf)
    gamma = np.full((K, grid.size), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell[-1] = utility(grid) * dt
    gamma[-1] = grid
    g_min = utility.gamma_min
    for k in range(K - 2, -1, -1):
        s = s_all[k]
        scale = s ** mode.C * math.exp(-market.r * dt)
        nxt = ell[k + 1]
        finite = np.isfinite(nxt)
        if not finite.any():
            continue
        x_first = grid[int(np.argmax(finite))]

        def objective(g, X):
            y = (X - g) / scale
            with np.errstate(divide="ignore", invalid="ignore"):
                v = _pl_value(grid, nxt, y)
                inner = (1.0 - s) - s * v
                return utility(g) * dt - np.log(inner)

        for i, X in enumerate(grid):
            hi = X - scale * x_first
            if hi < g_min - 1e-12 * max(X, 1.0):
                continue
            if not hi > g_min:
                # exactly at the floor: the only choice is (gamma_min, x_first)
                ell[k, i] = objective(np.array([g_min]), max(X, g_min + scale * x_first))[0]
                gamma[k, i] = g_min
                continue
            scan = np.linspace(g_min, hi, n_scan)
            vals = objective(scan, X)
            j = int(np.nanargmax(np.where(np.isfinite(vals), vals, -np.inf)))
            if not np.isfinite(vals[j]):
                continue
            a, b = scan[max(j - 1, 0)], scan[min(j + 1, n_scan - 1)]
            res = optimize.minimize_scalar(lambda g: -objective(g, X), bounds=(a, b),
                                           method="bounded",
                                           options={"xatol": 1e-15 * max(X, 1.0)})
            best_g, best_v = scan[j], vals[j]
            if res.success and -res.fun > best_v:
                best_g, best_v = float(res.x), -float(res.fun)
            ell[k, i] = best_v
            gamma[k, i] = best_g
    return ell, gamma


def toy_problem(market, utility, mode, mortality, lower, upper, n_steps=3, n_points=5):
    """Small ``mu = r`` instance derived from a run configuration."""
    flat = MarketParams(market.r, market.sigma, market.r, market.delta_t)
    surv = mortality.survival[:n_steps]
    toy_mort = MortalityModel.from_survival(market.delta_t, surv)
    grid = GridSpec(n_points, lower, upper)
    return SolveConfig(flat, utility, toy_mort, mode, grid)


def check_brute_force(cfg):
    """Solver against exhaustive search on a toy problem; skipped unless ``mu = r``."""
    if cfg.market.M != 0.0:
        return {"status": "skipped", "reason": "mu != r"}
    toy = toy_problem(cfg.market, cfg.utility, cfg.mode, cfg.mortality_model(),
                      cfg.grid.lower, cfg.grid.upper)
    return compare_brute_force(toy)


def compare_brute_force(toy):
    table = solve_backward(toy)
    ell_bf, gamma_bf = brute_force_deterministic(toy.market, toy.utility, toy.mortality,
                                                 toy.mode, table.grid)
    both = np.isfinite(table.ell) & np.isfinite(ell_bf)
    same_support = bool(np.array_equal(np.isfinite(table.ell), np.isfinite(ell_bf)))
    g_err = np.abs(table.gamma[both] - gamma_bf[both]) / np.maximum(np.abs(gamma_bf[both]),
                                                                      1e-300)
    l_err = np.abs(table.ell[both] - ell_bf[both]) / np.maximum(1.0, np.abs(ell_bf[both]))
    worst_g = float(g_err.max()) if g_err.size else 0.0
    worst_l = float(l_err.max()) if l_err.size else 0.0
    ok = same_support and worst_g <= BRUTE_RTOL and worst_l <= BRUTE_RTOL
    return {"status": _status(ok), "max_rel_gamma": worst_g, "max_rel_ell": worst_l,
            "same_support": same_support, "points": int(both.sum())}


def surface_violations(grid, ell, slack=SHAPE_SLACK):
    """Monotone/concave violation counts for every row of a value surface."""
    mono = conc = 0
    for row in ell:
        finite = np.isfinite(row)
        if not finite.any():
            continue
        f = int(np.argmax(finite))
        if not finite[f:].all():
            mono += 1
            continue
        if row.size - f < 2:
            continue
        v = PLValueFunction(grid[f:], row[f:]).shape_violations(slack)
        mono += v["monotone"]
        conc += v["concave"]
    return mono, conc


def check_shape(grid, ell):
    mono, conc = surface_violations(grid, ell)
    return {"status": _status(mono == 0 and conc == 0), "monotone_violations": mono,
            "concave_violations": conc, "times": int(len(ell))}


def check_budget(table, sim):
    fan = simulate_paths(table, replace(sim, measure="Q", trace=0))
    z = (fan.budget_estimate - fan.x0) / fan.budget_stderr if fan.budget_stderr > 0 else 0.0
    return {"status": _status(abs(z) <= 3.0), "estimate": fan.budget_estimate,
            "stderr": fan.budget_stderr, "x0": fan.x0, "z_score": z,
            "top_fraction": fan.top_fraction, "bottom_fraction": fan.bottom_fraction}


def mattress_params(cfg):
    """Closed-form parameters matching ``cfg``, or ``None`` if it is not a mattress problem."""
    u = cfg.utility
    if (cfg.mode is not FundMode.INDIVIDUAL or cfg.mortality["source"] != "lambda"
            or not 0 < u.n < 1 or u.x0 != 0):
        return None
    try:
        return MattressParams(u.a, u.n, u.b, cfg.mortality["lambda"], cfg.sim.x0)
    except ValueError:
        return None


def compare_analytic(table, params, sim, window=ANALYTIC_WINDOW, rtol=ANALYTIC_RTOL):
    """Median simulated consumption rate against the closed form on ``[0, window]``."""
    fan = simulate_paths(table, replace(sim, measure="P", trace=0, percentiles=(50.0,)))
    t = table.times
    keep = t <= window + 1e-9
    exact = mattress_consumption_path(params, t[keep])
    median = fan.consumption[keep, 0] / table.config.delta_t
    rel = np.abs(median / exact - 1.0)
    worst = int(np.argmax(rel))
    return {"status": _status(bool(rel.max() <= rtol)), "max_rel_error": float(rel.max()),
            "worst_time": float(t[keep][worst]), "window": window, "rtol": rtol,
            "median": median, "closed_form": exact}


def check_analytic(cfg, table):
    params = mattress_params(cfg)
    if params is None:
        return {"status": "skipped", "reason": "not an individual exponential-mortality "
                                                "power-utility problem"}
    out = compare_analytic(table, params, cfg.sim)
    out.pop("median")
    out.pop("closed_form")
    return out


def nested_grids(spec):
    """``(coarse, fine)`` specs whose point sets are nested, keeping ``spec`` as one of them."""
    n = spec.n_points
    if spec.spacing != "uniform":
        raise ValueError("refinement check needs a uniform grid")
    if n % 2 == 1 and n >= 3:
        return GridSpec((n + 1) // 2, spec.lower, spec.upper), spec
    return spec, GridSpec(2 * n - 1, spec.lower, spec.upper)


def refinement_increments(coarse, fine, x0, slack=REFINE_SLACK):
    """Pointwise comparison of two solves on nested grids.

    Returns the number of coarse points where the fine surface is lower by
    more than ``slack`` (relative to ``max(1, |l|)``), and the increment of
    the interpolated ``l`` at ``(0, x0)``.
    """
    pos = np.searchsorted(fine.grid, coarse.grid)
    pos = np.clip(pos, 0, fine.grid.size - 1)
    if not np.allclose(fine.grid[pos], coarse.grid, rtol=1e-12, atol=0):
        raise ValueError("grids are not nested")
    lc = coarse.ell
    lf = fine.ell[:, pos]
    with np.errstate(invalid="ignore"):
        tol = slack * np.maximum(1.0, np.abs(lc))
        bad = np.isfinite(lc) & ~(lf >= lc - tol)
    inc = float(fine.value_function(0).eval_ell(x0)[0] - coarse.value_function(0).eval_ell(x0)[0])
    return int(bad.sum()), inc


def check_refinement(cfg, table=None):
    base = cfg.solve_config()
    # start both grids at the first feasible point so their point sets nest
    lo = float(base.grid.build(base.utility)[0])
    coarse_spec, fine_spec = nested_grids(GridSpec(cfg.grid.n_points, lo, cfg.grid.upper))
    tables = []
    for spec in (coarse_spec, fine_spec):
        if table is not None and np.array_equal(table.grid, spec.nominal()):
            tables.append(table)
        else:
            tables.append(solve_backward(replace(base, grid=spec)))
    bad, inc = refinement_increments(tables[0], tables[1], cfg.sim.x0)
    ok = bad == 0 and abs(inc) < INCREMENT_TOL and inc >= -REFINE_SLACK
    return {"status": _status(ok), "points": [coarse_spec.n_points, fine_spec.n_points],
            "decreases": bad, "increment_at_x0": inc}


CHECKS = ("budget", "shape", "brute_force", "analytic", "refinement")


def run_battery(cfg, checks=CHECKS, values=None):
    """Run the selected checks; ``values`` replaces the solved surface in the shape check."""
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(sorted(unknown))}")
    report = {}
    needs_table = {"budget", "analytic", "refinement"} & set(checks) or \
        ("shape" in checks and values is None)
    table = solve_backward(cfg.solve_config()) if needs_table else None
    for name in checks:
        if name == "budget":
            report[name] = check_budget(table, cfg.sim)
        elif name == "shape":
            if values is not None:
                report[name] = check_shape(values[1], values[2])
            else:
                report[name] = check_shape(table.grid, table.ell)
        elif name == "brute_force":
            report[name] = check_brute_force(cfg)
        elif name == "analytic":
            report[name] = check_analytic(cfg, table)
        elif name == "refinement":
            report[name] = check_refinement(cfg, table)
    return report
