"""Acceptance criteria, each at its stated tolerance.

Every test records a verdict line that is printed in the terminal summary
(section "acceptance criteria"), and fails when the criterion is not met.
"""

import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from acceptance_log import record
from conftest import random_inputs
from kmfund.analytic import MattressParams, mattress_consumption_path, solve_w
from kmfund.model import MarketParams, MortalityModel, PowerUtility
from kmfund.numerics import gauss_2f1, norm_cdf_L
from kmfund.oneperiod import eta_step, solve_eta, step_value
from kmfund.simulate import SimConfig, simulate_paths
from kmfund.solver import GridSpec, SolveConfig, solve_backward
from kmfund.validation import (compare_analytic, compare_brute_force, mattress_params,
                               refinement_increments, surface_violations, toy_problem)
from oracles import mattress_integral, one_period_primal

pytestmark = pytest.mark.acceptance


def verdict(number, title, ok, detail):
    record(number, title, ok, detail)
    print(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    assert ok, detail


def test_1_analytic_vs_numeric(mattress_cfg):
    params = mattress_params(mattress_cfg)
    table = solve_backward(mattress_cfg.solve_config())
    sim = replace(mattress_cfg.sim, scenarios=100_000)
    out = compare_analytic(table, params, sim, window=100.0, rtol=0.02)
    verdict(1, "median consumption vs closed form on [0, 100]", out["status"] == "pass",
            f"max rel error {out['max_rel_error']:.4f} at t={out['worst_time']:g} (tol 0.02)")


def test_2_budget_identity(table1, table1_cfg):
    cfg = replace(table1_cfg.sim, scenarios=100_000, measure="Q", trace=0)
    fan = simulate_paths(table1, cfg)
    z = (fan.budget_estimate - 65.0) / fan.budget_stderr
    verdict(2, "Q-measure budget identity, Table 1", abs(z) <= 3.0,
            f"estimate {fan.budget_estimate:.4f} stderr {fan.budget_stderr:.4f} "
            f"z {z:+.2f}; top-edge hits {fan.top_fraction:.2e}")


def test_3_value_shape(table1):
    mono, conc = surface_violations(table1.grid, table1.ell, slack=1e-12)
    verdict(3, "value concave and increasing at every time", mono == 0 and conc == 0,
            f"{mono} monotone and {conc} concave violations over {table1.n_times} times")


def test_4_flat_market_brute_force(flat_cfg):
    mort = flat_cfg.mortality_model()
    cases = [toy_problem(flat_cfg.market, flat_cfg.utility, flat_cfg.mode, mort,
                         flat_cfg.grid.lower, 3.0)]
    base = MortalityModel.from_survival(1.0, [1.0, 0.9, 0.75])
    for mode in ("individual", "collective"):
        for u in (PowerUtility(-0.1, -2.0), PowerUtility(0.05, 0.5, 0.0, -0.01),
                  PowerUtility(1.0, 0.5, 0.3)):
            cases.append(SolveConfig(MarketParams(0.02, 0.15, 0.02, 1.0), u, base, mode,
                                     GridSpec(5, 0.0, 3.0)))
    worst_g = worst_l = 0.0
    ok = True
    for toy in cases:
        assert toy.mortality.n_steps == 3 and toy.grid.n_points == 5
        res = compare_brute_force(toy)
        ok &= res["same_support"] and res["max_rel_gamma"] <= 1e-4
        worst_g = max(worst_g, res["max_rel_gamma"])
        worst_l = max(worst_l, res["max_rel_ell"])
    verdict(4, "mu = r solver vs exhaustive deterministic search", ok,
            f"{len(cases)} toys, worst rel consumption error {worst_g:.2e}, "
            f"worst rel l error {worst_l:.2e}")


def test_5_one_period_oracle():
    rng = np.random.default_rng(2024)
    worst_g = worst_v = 0.0
    count = 0
    for N in (2, 3, 5):
        for _ in range(8):
            inp = random_inputs(rng, n_points=N)
            X0 = inp.floor + rng.uniform(0.2, 2.0)
            sol = solve_eta(inp, X0)
            m = inp.market
            ell, gamma = one_period_primal(inp.vf.grid, inp.vf.values, inp.s, m.M, m.r,
                                           m.delta_t, inp.C, inp.utility, X0)
            worst_g = max(worst_g, abs(sol.gamma / gamma - 1.0))
            # relative error of v = -exp(-l) is the difference in l
            worst_v = max(worst_v, abs(math.expm1(ell - step_value(inp, sol))))
            count += 1
    verdict(5, "one-period closed form vs primal maximisation",
            worst_g <= 1e-4 and worst_v <= 1e-4,
            f"{count} instances, worst rel consumption {worst_g:.2e}, worst rel value "
            f"{worst_v:.2e}")


def test_6_refinement(table1_cfg):
    base = table1_cfg.solve_config()
    lo = float(base.grid.build(base.utility)[0])
    tables = [solve_backward(replace(base, grid=GridSpec(n, lo, 195.0)))
              for n in (501, 1001, 2001)]
    bad_a, inc_a = refinement_increments(tables[0], tables[1], 65.0)
    bad_b, inc_b = refinement_increments(tables[1], tables[2], 65.0)
    ok = bad_a == 0 and bad_b == 0 and abs(inc_b) < 1e-3
    verdict(6, "nested grid refinement 501/1001/2001", ok,
            f"pointwise decreases {bad_a} and {bad_b}; l increments at x=65: "
            f"{inc_a:.4g} then {inc_b:.4g} (tol 1e-3)")


def test_7_eta_limits():
    rng = np.random.default_rng(7)
    rows = []
    for _ in range(10):
        inp = random_inputs(rng)
        X0 = inp.floor + rng.uniform(0.2, 2.0)
        hi, lo = eta_step(inp, 40.0), eta_step(inp, -40.0)
        rows.append((inp.utility.n, hi.X - inp.floor, lo.X / X0))
    ok_hi = all(0.0 <= d <= 1e-6 for _, d, _ in rows)
    ok_lo = all(r >= 1e6 for _, _, r in rows)
    detail = []
    for n in sorted({n for n, _, _ in rows}):
        sub = [r for r in rows if r[0] == n]
        detail.append(f"n={n:g}: {len(sub)} instances, max X(+40)-floor "
                      f"{max(d for _, d, _ in sub):.1e}, min X(-40)/X0 "
                      f"{min(q for _, _, q in sub):.1e}")
    verdict(7, "budget bracket at log eta = +-40", ok_hi and ok_lo, "; ".join(detail))


def test_8_mattress_budget():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(5):
        lam = rng.uniform(0.01, 0.1)
        p = MattressParams(a=rng.uniform(0.02, 2.0), k=rng.uniform(0.2, 0.8),
                           c=rng.uniform(-0.8 * lam, 0.05), lam=lam, x=rng.uniform(0.5, 10.0))
        w0 = solve_w(p)
        total = mattress_integral(p, lambda q, t: mattress_consumption_path(q, t, w0=w0))
        worst = max(worst, abs(total / p.x - 1.0))
    verdict(8, "closed-form consumption spends the initial wealth", worst <= 1e-4,
            f"5 parameter sets, worst rel error {worst:.2e}")


def _series(a, z):
    with mpmath.workdps(40):
        a, z = mpmath.mpf(a), mpmath.mpf(z)
        return float(mpmath.nsum(lambda n: mpmath.rf(a, n) ** 2 / (mpmath.rf(1 + a, n)
                                                                  * mpmath.factorial(n)) * z**n,
                                 [0, mpmath.inf]))


def test_9_special_functions():
    rng = np.random.default_rng(9)
    worst_lo = worst_hi = 0.0
    for _ in range(50):
        a = 1.0 / rng.uniform(0.15, 0.95)
        z = rng.uniform(0.0, 0.5)
        worst_lo = max(worst_lo, abs(gauss_2f1(a, a, 1 + a, z) / _series(a, z) - 1.0))
    for _ in range(50):
        a = 1.0 / rng.uniform(0.15, 0.95)
        z = rng.uniform(0.5, 0.999)
        with mpmath.workdps(40):
            ref = float(mpmath.hyp2f1(a, a, 1 + a, z))
        worst_hi = max(worst_hi, abs(gauss_2f1(a, a, 1 + a, z) / ref - 1.0))
    zs = np.linspace(-40.0, 40.0, 8001)
    anti = float(np.max(np.abs(norm_cdf_L(zs) + norm_cdf_L(-zs))))
    ok = worst_lo <= 1e-10 and worst_hi <= 1e-8 and anti <= 1e-12
    verdict(9, "2F1 against the series oracle; L antisymmetry", ok,
            f"worst rel 2F1 error {worst_lo:.1e} (z <= 0.5), {worst_hi:.1e} (z > 0.5); "
            f"max |L(z)+L(-z)| {anti:.1e}")
