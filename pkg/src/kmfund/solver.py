"""Backward induction on a fixed wealth grid.

Starting from the terminal value ``l = u(x) dt`` the value at each earlier
time is obtained by solving the one-period problem at every grid point.
Grid points whose budget is below the one-step floor get ``l = -inf`` and are
dropped from the next step's slopes, so the feasible set at every time is a
contiguous tail ``grid[first[t]:]`` of the shared grid.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .model import FundMode, MarketParams, MortalityModel, PowerUtility
from .oneperiod import (ROOT_TOL, OnePeriodInputs, StepArrays, eta_step, limit_value,
                        solve_many)
from .valuefn import PLValueFunction, terminal_value

log = logging.getLogger(__name__)

SPACINGS = ("uniform", "geometric")
# relative band around the floor treated as "exactly at the floor"
FLOOR_SLACK = 1e-12


class InfeasibleProblem(ValueError):
    """Every grid point is below the minimum budget at some time."""


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    lower: float
    upper: float
    spacing: str = "uniform"

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.n_points}")
        if not self.upper > self.lower:
            raise ValueError(f"grid range [{self.lower}, {self.upper}] is empty")
        if self.spacing not in SPACINGS:
            raise ValueError(f"spacing must be one of {SPACINGS}, got {self.spacing!r}")
        if self.spacing == "geometric" and not self.lower > 0:
            raise ValueError("geometric spacing needs a positive lower bound")

    def nominal(self):
        if self.spacing == "uniform":
            return np.linspace(self.lower, self.upper, self.n_points)
        return np.geomspace(self.lower, self.upper, self.n_points)

    def build(self, utility):
        """Grid points, moving ``lower`` up to the first point with finite utility.

        The point count is kept, so ``[0, 195]`` with 1001 points becomes
        1001 points on ``[0.195, 195]`` for utilities that are ``-inf`` at 0.
        """
        x = self.nominal()
        ok = np.isfinite(utility(x))
        if ok[0]:
            return x
        if not ok[1:].any():
            raise ValueError(f"utility is -inf on the whole grid [{self.lower}, {self.upper}]")
        first = float(x[np.argmax(ok)])
        return GridSpec(self.n_points, first, self.upper, self.spacing).nominal()


@dataclass(frozen=True)
class SolveConfig:
    market: MarketParams
    utility: PowerUtility
    mortality: MortalityModel
    mode: FundMode
    grid: GridSpec
    eps: float | None = None
    tol: float = ROOT_TOL

    def __post_init__(self):
        object.__setattr__(self, "mode", FundMode.parse(self.mode))
        if not math.isclose(self.market.delta_t, self.mortality.delta_t, rel_tol=1e-12):
            raise ValueError(f"market step {self.market.delta_t} and mortality step "
                             f"{self.mortality.delta_t} differ")
        if self.eps is not None and not 0.0 <= self.eps < 0.5:
            raise ValueError(f"eps must lie in [0, 0.5), got {self.eps}")
        if not self.tol > 0:
            raise ValueError("root tolerance must be positive")

    @property
    def delta_t(self):
        return self.market.delta_t


@dataclass
class PolicyTable:
    """Value surface and optimal policy on the ``(time, grid)`` lattice.

    Arrays are ``(K, N)`` unless noted.  ``log_p[k]`` holds the slopes of the
    value at ``t_{k+1}`` over the full grid (``+inf`` left of the feasible
    tail), so the payoff index for a draw is a plain search over it.
    With ``M = 0`` a budget between two payoff levels splits the payoff:
    ``mix`` holds the mass on grid index ``k_min`` (the rest goes to
    ``k_max``) and is NaN elsewhere.
    """

    config: SolveConfig
    grid: np.ndarray
    times: np.ndarray
    ell: np.ndarray
    log_eta: np.ndarray
    log_gamma: np.ndarray
    k_min: np.ndarray
    k_max: np.ndarray
    first: np.ndarray
    floor: np.ndarray
    log_p: np.ndarray
    shift: np.ndarray
    survival_step: np.ndarray
    mix: np.ndarray | None = None
    timings: dict = field(default_factory=dict)

    @property
    def n_times(self):
        return self.times.size

    @property
    def gamma(self):
        return np.exp(self.log_gamma)

    @property
    def M(self):
        return self.config.market.M

    def value_function(self, k):
        f = int(self.first[k])
        return PLValueFunction(self.grid[f:], self.ell[k, f:])

    def step_inputs(self, k):
        """One-period inputs used to produce row ``k`` (``k < K - 1``)."""
        if not 0 <= k < self.n_times - 1:
            raise IndexError(f"no one-period problem at step {k}")
        cfg = self.config
        return OnePeriodInputs.build(self.value_function(k + 1), self.survival_step[k],
                                     cfg.market, cfg.mode, cfg.utility)

    def eta_solution(self, k, i):
        """Re-run the closed form at the stored multiplier of ``(t_k, x_i)``."""
        f = int(self.first[k + 1])
        mix = None
        if self.mix is not None and np.isfinite(self.mix[k, i]):
            mix = (int(self.k_min[k, i]) - f, int(self.k_max[k, i]) - f, float(self.mix[k, i]))
        return eta_step(self.step_inputs(k), float(self.log_eta[k, i]), self.config.eps, mix=mix)

    def shape_violations(self, slack=1e-12):
        """Per-time counts of monotonicity and concavity violations."""
        return [self.value_function(k).shape_violations(slack) for k in range(self.n_times)]

    def next_index(self, k, i, z):
        """Grid index of next-step wealth for normal draws ``z = Phi^{-1}(U)``."""
        lp = self.log_p[k]
        z = np.asarray(z, dtype=float)
        if self.M == 0.0 and self.mix is not None and np.isfinite(self.mix[k, i]):
            lower = special.ndtr(z) < self.mix[k, i]
            return np.where(lower, self.k_min[k, i], self.k_max[k, i])
        if self.log_eta[k, i] == np.inf or self.M == 0.0:
            kappa = np.full(z.shape, self.log_eta[k, i] - self.shift[k])
        else:
            kappa = self.log_eta[k, i] - self.shift[k] - self.M * (z + 0.5 * self.M)
        idx = np.searchsorted(-lp, -kappa, side="left")
        return np.clip(idx, self.first[k + 1], self.grid.size - 1)


def solve_backward(config, progress_every=0):
    """Run the backward induction and return the full :class:`PolicyTable`."""
    start = time.perf_counter()
    cfg = config
    dt = cfg.delta_t
    grid = cfg.grid.build(cfg.utility)
    N = grid.size
    mort = cfg.mortality
    K = mort.n_steps
    s_step = mort.one_step_survival

    ell = np.full((K, N), -np.inf)
    log_eta = np.full((K, N), np.nan)
    log_gamma = np.full((K, N), np.nan)
    k_min = np.zeros((K, N), dtype=np.int32)
    k_max = np.zeros((K, N), dtype=np.int32)
    first = np.zeros(K, dtype=np.int64)
    floor = np.zeros(K)
    log_p = np.full((K, max(N - 1, 0)), np.nan)
    shift = np.zeros(K)
    mix = np.full((K, N), np.nan)

    # final time: consume everything
    ell[K - 1] = terminal_value(grid, cfg.utility, dt).ell
    with np.errstate(divide="ignore"):
        log_gamma[K - 1] = np.log(grid)
    floor[K - 1] = grid[0]

    for k in range(K - 2, -1, -1):
        f = int(first[k + 1])
        vf = PLValueFunction(grid[f:], ell[k + 1, f:])
        inputs = OnePeriodInputs.build(vf, s_step[k], cfg.market, cfg.mode, cfg.utility)
        arrays = StepArrays(inputs, cfg.eps)
        floor[k] = inputs.floor
        shift[k] = inputs.shift
        log_p[k, :f] = np.inf
        log_p[k, f:] = arrays.lp

        above = grid > floor[k] * (1.0 + FLOOR_SLACK) + 1e-300
        at = ~above & (grid >= floor[k] * (1.0 - FLOOR_SLACK))
        if above.any():
            g = log_eta[k + 1, above]
            if k + 2 < K - 1:
                # multipliers drift smoothly in time; extrapolate the last two rows
                g = 2.0 * g - log_eta[k + 2, above]
            guesses = np.where(np.isfinite(g), g, np.nan)
            le, lv, lg, a, b, w = solve_many(inputs, grid[above], guesses, tol=cfg.tol,
                                             step=1e-3, arrays=arrays)
            log_eta[k, above] = le
            ell[k, above] = lv
            log_gamma[k, above] = lg
            k_min[k, above] = a + f
            k_max[k, above] = b + f
            mix[k, above] = w
        if at.any():
            lim = limit_value(inputs)
            if np.isfinite(lim):
                ell[k, at] = lim
                log_eta[k, at] = np.inf
                with np.errstate(divide="ignore"):
                    log_gamma[k, at] = math.log(cfg.utility.gamma_min) \
                        if cfg.utility.gamma_min > 0 else -np.inf
                k_min[k, at] = k_max[k, at] = f
        feasible = np.isfinite(ell[k])
        if not feasible.any():
            raise InfeasibleProblem(
                f"no grid point affords the minimum budget {floor[k]:.6g} at t={mort.times[k]:.6g}; "
                f"raise the grid's upper bound")
        first[k] = int(np.argmax(feasible))
        if progress_every and k % progress_every == 0:
            log.info("step %d/%d done, floor %.6g", K - 1 - k, K - 1, floor[k])

    timings = {"solve_seconds": time.perf_counter() - start}
    return PolicyTable(cfg, grid, mort.times, ell, log_eta, log_gamma, k_min, k_max, first,
                       floor, log_p, shift, s_step, mix, timings)


def min_budget_curve(table):
    """Smallest grid wealth with finite value at each time."""
    return table.grid[table.first]
