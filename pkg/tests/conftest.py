from pathlib import Path

import numpy as np
import pytest

from kmfund.config import load_config
from kmfund.model import FundMode, MarketParams, PowerUtility, mortality_exponential
from kmfund.oneperiod import OnePeriodInputs
from kmfund.solver import solve_backward
from kmfund.valuefn import PLValueFunction

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def table1_cfg():
    return load_config(CONFIGS / "table1.cfg")


@pytest.fixture(scope="session")
def table1(table1_cfg):
    """Backward induction for the Table 1 setup; about two minutes."""
    return solve_backward(table1_cfg.solve_config())


@pytest.fixture(scope="session")
def mattress_cfg():
    return load_config(CONFIGS / "mattress.cfg")


@pytest.fixture(scope="session")
def flat_cfg():
    return load_config(CONFIGS / "flat_market.cfg")


@pytest.fixture(scope="session")
def small_table():
    """A quick stochastic problem used by solver and simulation tests."""
    from kmfund.solver import GridSpec, SolveConfig
    cfg = SolveConfig(MarketParams(0.06, 0.2, 0.02, 0.25), PowerUtility(-0.1, -2.0),
                      mortality_exponential(0.08, 0.25, 8.0), FundMode.COLLECTIVE,
                      GridSpec(121, 0.0, 30.0))
    return solve_backward(cfg)


def random_inputs(rng, n_points=None, M=None, mode=None, utility=None):
    """A random one-period problem with a concave increasing next-step value."""
    N = n_points or int(rng.choice([2, 3, 5]))
    x = np.sort(rng.uniform(0.2, 4.0, N))
    while np.any(np.diff(x) < 0.05):
        x = np.sort(rng.uniform(0.2, 4.0, N))
    # v = -c exp(-k x) is concave increasing and negative
    c, k = rng.uniform(0.5, 2.0), rng.uniform(0.2, 1.5)
    vf = PLValueFunction(x, -np.log(c) + k * x)
    dt = float(rng.choice([0.25, 0.5, 1.0]))
    if M is None:
        M = rng.uniform(0.05, 0.8)
    sigma = 0.2
    r = rng.uniform(0.0, 0.04)
    mu = r + M * sigma / np.sqrt(dt)
    market = MarketParams(mu, sigma, r, dt)
    s = rng.uniform(0.7, 1.0)
    if mode is None:
        mode = FundMode.COLLECTIVE if rng.random() < 0.5 else FundMode.INDIVIDUAL
    if utility is None:
        utility = PowerUtility(0.5, 0.5) if rng.random() < 0.5 else PowerUtility(-0.1, -2.0)
    return OnePeriodInputs.build(vf, s, market, mode, utility)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    lines = acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
