"""Monte Carlo replay of a solved policy.

Wealth never leaves the solver grid: at each step the payoff is the grid
point picked by the abstract-market coordinate ``U``.  With ``z = Phi^{-1}(U)``
the payoff index is the first ``j`` with

    log p_j <= log eta - shift - M (z + M/2)

``U`` increases with the period return of the favourable asset direction, so
``z = sgn Z`` under P and ``z = sgn Z - M`` under Q, where ``Z`` is the
standardised log-return shock of the stock under the simulating measure.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

MEASURES = ("P", "Q")
DEFAULT_LEVELS = (1.0, 5.0, 50.0, 95.0, 99.0)


@dataclass(frozen=True)
class SimConfig:
    x0: float
    scenarios: int = 100_000
    seed: int = 0
    measure: str = "P"
    percentiles: tuple = DEFAULT_LEVELS
    trace: int = 0
    initial: str = "exact"

    def __post_init__(self):
        if self.scenarios < 1:
            raise ValueError(f"need at least one scenario, got {self.scenarios}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        m = str(self.measure).upper()
        if m not in MEASURES:
            raise ValueError(f"measure must be P or Q, got {self.measure!r}")
        object.__setattr__(self, "measure", m)
        lv = tuple(float(p) for p in self.percentiles)
        if not lv or any(not 0 < p < 100 for p in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"percentiles must be increasing and inside (0, 100), got {lv}")
        object.__setattr__(self, "percentiles", lv)
        if not 0 <= self.trace <= self.scenarios:
            raise ValueError("trace count must lie in [0, scenarios]")
        if self.initial not in ("exact", "snap"):
            raise ValueError(f"initial must be 'exact' or 'snap', got {self.initial!r}")


@dataclass
class FanResult:
    times: np.ndarray
    levels: tuple
    consumption: np.ndarray
    wealth: np.ndarray
    survivor: np.ndarray
    budget_estimate: float
    budget_stderr: float
    hits_top: int
    hits_bottom: int
    transitions: int
    x0: float
    seed: int
    scenarios: int
    measure: str
    paths: dict = field(default_factory=dict)

    @property
    def top_fraction(self):
        return self.hits_top / max(self.transitions, 1)

    @property
    def bottom_fraction(self):
        return self.hits_bottom / max(self.transitions, 1)


def percentiles(paths, levels):
    """Nearest-rank percentiles along axis 0 of ``paths``.

    Level ``p`` picks the ``ceil(p n / 100)``-th smallest value, so every
    reported number is an actual path value.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 1:
        paths = paths[:, None]
    n = paths.shape[0]
    if n < 1:
        raise ValueError("need at least one path")
    ranks = [max(1, math.ceil(p * n / 100.0 - 1e-9)) - 1 for p in levels]
    part = np.partition(paths, sorted(set(ranks)), axis=0)
    return part[ranks]


def _weighted_nearest_rank(values, counts, levels):
    """Nearest-rank percentiles of ``values`` repeated ``counts`` times."""
    keep = counts > 0
    v, c = values[keep], counts[keep]
    order = np.argsort(v, kind="stable")
    v, cum = v[order], np.cumsum(c[order])
    n = cum[-1]
    ranks = np.array([max(1, math.ceil(p * n / 100.0 - 1e-9)) for p in levels])
    return v[np.searchsorted(cum, ranks, side="left")]


def uniforms(seed, step, n):
    """``n`` uniforms in ``(0, 1)`` for time step ``step``.

    Each step has its own Philox stream (key ``seed``, counter word 2 set to
    the step) and scenario ``j`` always reads the ``j``-th draw, so any
    partition of scenarios reproduces the same numbers.
    """
    bitgen = np.random.Philox(key=seed, counter=[0, 0, step, 0])
    raw = bitgen.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def shocks(seed, step, n):
    """Standard normal log-return shocks ``Z`` for one step."""
    return special.ndtri(uniforms(seed, step, n))


def snap_to_grid(grid, x0):
    i = int(np.argmin(np.abs(grid - x0)))
    gap = abs(grid[i] - x0)
    cell = np.diff(grid)
    half = 0.5 * (cell[min(i, cell.size - 1)] if cell.size else 0.0)
    if gap > half:
        warnings.warn(f"initial wealth {x0} lies {gap:.3g} from the nearest grid point "
                      f"{grid[i]:.6g}", stacklevel=3)
    return i


def _survival(table):
    return table.config.mortality.survival[: table.n_times]


def _next_indices(table, k, log_eta, z):
    lp = table.log_p[k]
    M = table.M
    if M == 0.0:
        kappa = log_eta - table.shift[k]
    else:
        with np.errstate(invalid="ignore"):
            kappa = np.where(np.isinf(log_eta), log_eta,
                             log_eta - table.shift[k] - M * (z + 0.5 * M))
    nxt = np.searchsorted(-lp, -kappa, side="left")
    return np.clip(nxt, table.first[k + 1], table.grid.size - 1)


def _split(table, k, idx, split0, z, nxt):
    # M = 0 budgets between payoff levels pay k_lo when U < mass, else k_hi
    if idx is None:
        if split0 is None:
            return nxt
        lo, hi, w = split0
        return np.where(special.ndtr(z) < w, lo, hi)
    if table.mix is None:
        return nxt
    w = table.mix[k, idx]
    split = np.isfinite(w)
    if not split.any():
        return nxt
    lower = special.ndtr(z) < w
    return np.where(split, np.where(lower, table.k_min[k, idx], table.k_max[k, idx]), nxt)


def initial_policy(table, x0):
    """``(gamma, log_eta, split)`` at ``t = 0`` for a budget that need not be a grid point.

    ``split`` is ``(k_lo, k_hi, mass on k_lo)`` in full-grid indices for an
    ``M = 0`` split payoff and ``None`` otherwise.
    """
    from .oneperiod import MinimumBudget, solve_eta, step_value

    if table.n_times == 1:
        return float(x0), np.nan, None
    inputs = table.step_inputs(0)
    try:
        sol = solve_eta(inputs, x0, eps=table.config.eps, tol=table.config.tol)
    except MinimumBudget as exc:
        raise ValueError(f"initial wealth {x0} does not exceed the minimum budget "
                         f"{exc.floor:.6g} at t=0") from None
    if not np.isfinite(step_value(inputs, sol)):
        raise ValueError(f"initial wealth {x0} has value -inf")
    split = None
    if sol.mix is not None:
        f = int(table.first[1])
        split = (sol.mix[0] + f, sol.mix[1] + f, sol.mix[2])
    return sol.gamma, sol.log_eta, split


def simulate_paths(table, cfg):
    """Replay ``table`` for ``cfg.scenarios`` scenarios; returns a :class:`FanResult`.

    By default the first step is solved at exactly ``cfg.x0``; with
    ``initial='snap'`` the budget is moved to the nearest grid point instead.
    """
    grid = table.grid
    K = table.n_times
    N = grid.size
    S = cfg.scenarios
    if cfg.initial == "snap":
        i0 = snap_to_grid(grid, cfg.x0)
        if not np.isfinite(table.ell[0, i0]):
            raise ValueError(f"initial wealth {grid[i0]} is below the minimum budget "
                             f"{grid[table.first[0]]} at t=0")
        x0 = float(grid[i0])
        gamma0, log_eta0 = table.gamma[0, i0], table.log_eta[0, i0]
        split0 = None
        if table.mix is not None and np.isfinite(table.mix[0, i0]):
            split0 = (table.k_min[0, i0], table.k_max[0, i0], table.mix[0, i0])
    else:
        x0 = float(cfg.x0)
        gamma0, log_eta0, split0 = initial_policy(table, x0)
    market = table.config.market
    sgn = market.favourable_sign
    shift_q = table.M if cfg.measure == "Q" else 0.0
    C = table.config.mode.C
    surv = _survival(table)
    weight = np.exp(-market.r * table.times) * surv ** C

    levels = cfg.percentiles
    L = len(levels)
    cons_fan = np.empty((K, L))
    wealth_fan = np.empty((K, L))
    cons_fan[0] = gamma0
    wealth_fan[0] = x0
    total = np.full(S, weight[0] * gamma0)
    idx = None
    hits_top = hits_bottom = transitions = 0
    T = cfg.trace
    trace_c = np.empty((T, K))
    trace_x = np.empty((T, K))
    trace_z = np.full((T, K), np.nan)
    trace_c[:, 0] = gamma0
    trace_x[:, 0] = x0

    for k in range(K - 1):
        le = np.full(S, log_eta0) if idx is None else table.log_eta[k, idx]
        Z = shocks(cfg.seed, k, S)
        z = sgn * Z - shift_q
        nxt = _next_indices(table, k, le, z)
        if table.M == 0.0:
            nxt = _split(table, k, idx, split0, z, nxt)
        if not np.all(np.isfinite(table.ell[k + 1, nxt])):
            raise AssertionError(f"wealth left the feasible grid at step {k + 1}")
        hits_top += int(np.count_nonzero(nxt == N - 1))
        hits_bottom += int(np.count_nonzero(nxt == table.first[k + 1]))
        transitions += S
        idx = nxt
        g = table.gamma[k + 1]
        cons = g[idx]
        total += weight[k + 1] * cons
        counts = np.bincount(idx, minlength=N)
        cons_fan[k + 1] = _weighted_nearest_rank(g, counts, levels)
        wealth_fan[k + 1] = _weighted_nearest_rank(grid, counts, levels)
        if T:
            trace_z[:, k] = Z[:T]
            trace_c[:, k + 1] = cons[:T]
            trace_x[:, k + 1] = grid[idx[:T]]

    paths = {}
    if T:
        paths = {"consumption": trace_c, "wealth": trace_x, "shock": trace_z}
    stderr = float(total.std(ddof=1) / math.sqrt(S)) if S > 1 else 0.0
    return FanResult(table.times.copy(), levels, cons_fan, wealth_fan, surv.copy(),
                     float(total.mean()), stderr, hits_top, hits_bottom, transitions,
                     x0, cfg.seed, S, cfg.measure, paths)


def budget_check(table, cfg):
    """Q-measure estimate of discounted survivor-weighted consumption and its standard error."""
    if cfg.measure != "Q":
        raise ValueError("the budget identity holds under the risk-neutral measure; use measure='Q'")
    res = simulate_paths(table, cfg)
    return res.budget_estimate, res.budget_stderr


# --- replication --------------------------------------------------------------

def payoff_digitals(table, k, i):
    """Step payoff at ``(t_k, x_i)`` as ``base + sum_j dx_j 1{z > zeta_j}``.

    ``z`` is the standardised favourable-direction return shock; the
    thresholds ``zeta_j`` are where the payoff steps from ``x_j`` to ``x_{j+1}``.
    """
    if not 0 <= k < table.n_times - 1:
        raise IndexError(f"no payoff is chosen at step {k}")
    f = int(table.first[k + 1])
    grid = table.grid
    base = float(grid[f])
    dx = np.diff(grid[f:])
    kappa = table.log_eta[k, i] - table.shift[k]
    lp = table.log_p[k, f:]
    M = table.M
    if M == 0.0 or np.isinf(kappa):
        # deterministic payoff: fold the steps below the chosen index into the base
        j = int(np.clip(np.searchsorted(-lp, -kappa, side="left"), 0, dx.size))
        pay = float(grid[f + j])
        if table.mix is not None and np.isfinite(table.mix[k, i]):
            # a split payoff costs and is worth the same as its mean paid surely
            w = table.mix[k, i]
            pay = w * grid[table.k_min[k, i]] + (1.0 - w) * grid[table.k_max[k, i]]
        return pay, np.zeros(0), np.zeros(0)
    zeta = -0.5 * M + (kappa - lp) / M
    return base, dx, zeta


def _digital_legs(table, k, i, elapsed, spot):
    market = table.config.market
    dt = market.delta_t
    tau = dt - elapsed
    if not 0.0 <= elapsed < dt:
        raise ValueError(f"time within the period must lie in [0, {dt}), got {elapsed}")
    if not spot > 0:
        raise ValueError("spot must be positive")
    base, dx, zeta = payoff_digitals(table, k, i)
    sig = market.sigma
    sgn = market.favourable_sign
    # strikes relative to the period-start price 1
    log_k = (market.mu - 0.5 * sig * sig) * dt + sgn * sig * math.sqrt(dt) * zeta
    srt = sig * math.sqrt(tau)
    d2 = (math.log(spot) - log_k + (market.r - 0.5 * sig * sig) * tau) / srt
    scale = table.survival_step[k] ** table.config.mode.C
    return base, dx, d2, sgn, tau, srt, scale


def replicating_price(table, k, i, elapsed, spot):
    """Value at ``t_k + elapsed`` of the step payoff chosen at ``(t_k, x_i)``."""
    base, dx, d2, sgn, tau, srt, scale = _digital_legs(table, k, i, elapsed, spot)
    r = table.config.market.r
    disc = math.exp(-r * tau)
    digital = special.ndtr(sgn * d2)
    return scale * disc * (base + float(np.sum(dx * digital)))


def replicating_delta(table, k, i, elapsed, spot):
    """Stock holding (per unit of period-start stock price) that replicates the payoff."""
    base, dx, d2, sgn, tau, srt, scale = _digital_legs(table, k, i, elapsed, spot)
    if dx.size == 0:
        return 0.0
    r = table.config.market.r
    dens = np.exp(-0.5 * d2 * d2) / math.sqrt(2.0 * math.pi)
    return scale * math.exp(-r * tau) * sgn * float(np.sum(dx * dens)) / (spot * srt)


def stock_proportion(table, k, i, elapsed, spot):
    """Fraction of the invested wealth held in stock, ``delta * spot / price``."""
    price = replicating_price(table, k, i, elapsed, spot)
    return replicating_delta(table, k, i, elapsed, spot) * spot / price
