"""Market, preference and mortality primitives."""

import csv
import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

from .numerics import log_sum_exp, _log_diff_exp


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market observed over one consumption step.

    ``M = |mu - r| sqrt(delta_t) / sigma`` is the market price of risk scaled
    to a single step; it is the only market quantity the one-period problem
    depends on besides the discount ``r * delta_t``.
    """

    mu: float
    sigma: float
    r: float
    delta_t: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")

    @property
    def M(self):
        return abs(self.mu - self.r) * math.sqrt(self.delta_t) / self.sigma

    @property
    def favourable_sign(self):
        """+1 when the risky asset has positive excess drift, -1 otherwise."""
        return 1.0 if self.mu >= self.r else -1.0


class FundMode(enum.Enum):
    INDIVIDUAL = "individual"
    COLLECTIVE = "collective"

    @property
    def C(self):
        return 0 if self is FundMode.INDIVIDUAL else 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"1": "individual", "n=1": "individual",
                   "inf": "collective", "n=inf": "collective", "infinite": "collective"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class PowerUtility:
    """Shifted power utility ``u(x) = a (x - x0)**n + b``.

    ``u`` is ``-inf`` below ``gamma_min = max(x0, 0)``.  Concave increasing
    requires ``0 < n < 1, a > 0`` or ``n < 0, a < 0``.
    """

    a: float
    n: float
    x0: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        ok = (0 < self.n < 1 and self.a > 0) or (self.n < 0 and self.a < 0)
        if not ok:
            raise ValueError(
                "utility must be concave increasing: need 0<n<1 with a>0 "
                f"or n<0 with a<0 (got a={self.a}, n={self.n})")

    @property
    def gamma_min(self):
        """Minimum acceptable consumption ``inf{x : u(x) > -inf}``."""
        return max(self.x0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = x - self.x0
            val = self.a * np.power(np.where(d > 0, d, 1.0), self.n) + self.b
            at_shift = -np.inf if self.n < 0 else self.b
            val = np.where(d > 0, val, np.where(d == 0, at_shift, -np.inf))
        val = np.where(x < self.gamma_min, -np.inf, val)
        return float(val) if val.ndim == 0 else val

    def value_from_log_excess(self, log_excess):
        """``u`` at ``x0 + exp(log_excess)``; avoids forming ``x`` itself."""
        return self.a * math.exp(self.n * log_excess) + self.b

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = np.maximum(x - self.x0, 0.0)
            return self.a * self.n * np.power(d, self.n - 1.0)

    @property
    def log_an(self):
        return math.log(self.a * self.n)

    def u_tilde(self, y):
        """``log u_dagger(exp(y))``: log consumption at log marginal utility ``y``."""
        return u_tilde_kernel(float(y), self.log_an, self.n, self.x0)

    def dagger(self, p):
        """Generalised inverse of ``u'``: ``inf{x : p in du(x)}``."""
        return math.exp(self.u_tilde(math.log(p)))


@njit(cache=True)
def u_tilde_kernel(y, log_an, n, x0):
    base = (y - log_an) / (n - 1.0)
    if x0 == 0.0:
        return base
    if x0 > 0.0:
        return log_sum_exp(base, math.log(x0))
    lneg = math.log(-x0)
    if base > lneg:
        return _log_diff_exp(base, lneg)
    return -np.inf


@njit(cache=True)
def log_excess_kernel(y, log_an, n, x0):
    """``log(u_dagger(e^y) - x0)``, the log excess over the shift."""
    base = (y - log_an) / (n - 1.0)
    if x0 < 0.0 and base <= math.log(-x0):
        # corner solution u_dagger = 0
        return math.log(-x0)
    return base


# --- mortality -----------------------------------------------------------------

@dataclass(frozen=True)
class MortalityModel:
    """Death-time distribution on the grid ``{0, dt, ..., (K-1) dt}``.

    ``survival[k] = P(tau >= t_k)`` with a trailing zero so that
    ``death_mass[k] = survival[k] - survival[k + 1]`` sums to one.  Grid
    points after the last one with positive survival are dropped, so the
    horizon ``T* = (K-1) dt`` is always alive-reachable.
    """

    delta_t: float
    survival: np.ndarray = field(repr=False)
    start_age: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.survival, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("survival needs at least one grid point plus terminal zero")
        if abs(s[0] - 1.0) > 1e-12 or s[-1] != 0.0:
            raise ValueError("survival must start at 1 and end at 0")
        if np.any(np.diff(s) > 1e-15) or np.any(s < 0):
            raise ValueError("survival must be non-increasing and non-negative")
        if np.any(s[:-1] <= 0):
            raise ValueError("survival must be positive before the horizon")
        object.__setattr__(self, "survival", s)

    @classmethod
    def from_survival(cls, delta_t, survival, start_age=0.0):
        s = np.append(np.asarray(survival, dtype=float), 0.0)
        alive = np.flatnonzero(s > 0)
        s = s[: alive[-1] + 2]
        return cls(delta_t=delta_t, survival=s, start_age=start_age)

    @classmethod
    def from_death_mass(cls, delta_t, death_mass, start_age=0.0):
        p = np.asarray(death_mass, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("death mass must be non-negative and sum to one")
        tail = np.cumsum(p[::-1])[::-1]
        return cls.from_survival(delta_t, tail, start_age)

    @property
    def n_steps(self):
        return self.survival.size - 1

    @property
    def times(self):
        return self.delta_t * np.arange(self.n_steps)

    @property
    def horizon(self):
        """Last grid time with positive survival."""
        return self.delta_t * (self.n_steps - 1)

    @property
    def death_mass(self):
        return self.survival[:-1] - self.survival[1:]

    @property
    def one_step_survival(self):
        return self.survival[1:] / self.survival[:-1]

    def index(self, t):
        k = int(round(t / self.delta_t))
        if abs(k * self.delta_t - t) > 1e-9 * max(1.0, abs(t)) or k < 0:
            raise ValueError(f"t={t} is not on the grid of step {self.delta_t}")
        return k

    def survival_step(self, t):
        """``P(tau >= t + dt | tau >= t)``."""
        k = self.index(t)
        if k >= self.n_steps:
            raise ValueError(f"t={t} lies beyond the horizon {self.horizon}")
        return float(self.one_step_survival[k])


def mortality_exponential(lam, delta_t, horizon):
    """Constant force of mortality ``lam`` truncated at ``horizon`` years."""
    if not lam > 0:
        raise ValueError(f"force of mortality must be positive, got {lam}")
    k = int(round(horizon / delta_t))
    if k < 1:
        raise ValueError("horizon shorter than one step")
    return MortalityModel.from_survival(delta_t, np.exp(-lam * delta_t * np.arange(k)))


def survival_from_annual_rates(rates, delta_t):
    """Survival on the step grid from one-year death rates.

    The hazard is constant within each year; residual survival at the end of
    the table is left for the caller to assign.
    """
    rates = np.asarray(rates, dtype=float)
    with np.errstate(divide="ignore"):
        hazard = -np.log1p(-rates)
    n_years = rates.size
    k = int(math.floor(n_years / delta_t + 1e-9))
    t = delta_t * np.arange(k)
    year = np.minimum(np.floor(t + 1e-12).astype(int), n_years - 1)
    frac = np.clip(t - year, 0.0, None)
    cum = np.concatenate([[0.0], np.cumsum(hazard)])
    with np.errstate(invalid="ignore"):
        partial = np.where(frac > 0, hazard[year] * frac, 0.0)
    return np.exp(-(cum[year] + partial))


def mortality_from_rates(rates, delta_t, start_age=0.0):
    return MortalityModel.from_survival(
        delta_t, survival_from_annual_rates(rates, delta_t), start_age)


def read_mortality_csv(path, start_age=None, end_age=None):
    """Read an ``age,rate`` table; returns ``(ages, rates)``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["age", "rate"]:
            raise ValueError(f"{path}: expected header 'age,rate'")
        rows = [(float(r["age"]), float(r["rate"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: empty mortality table")
    ages = np.array([a for a, _ in rows])
    rates = np.array([q for _, q in rows])
    if np.any(np.diff(ages) != 1.0):
        raise ValueError(f"{path}: ages must be consecutive increasing integers")
    if np.any((rates < 0) | (rates > 1)) or np.any(np.isnan(rates)):
        raise ValueError(f"{path}: rates must lie in [0, 1]")
    keep = np.ones(ages.size, dtype=bool)
    if start_age is not None:
        keep &= ages >= start_age
    if end_age is not None:
        keep &= ages < end_age
    if not keep.any():
        raise ValueError(f"{path}: no rows between ages {start_age} and {end_age}")
    return ages[keep], rates[keep]


def mortality_from_csv(path, delta_t, start_age=None, end_age=None):
    ages, rates = read_mortality_csv(path, start_age, end_age)
    return mortality_from_rates(rates, delta_t, start_age=float(ages[0]))


# Synthetic Gompertz-Makeham hazard h(x) = A + B c**x shipped as the default table.
GM_A, GM_B, GM_C = 2e-4, 2.7e-6, 1.124


def gompertz_makeham_rates(ages, A=GM_A, B=GM_B, c=GM_C):
    ages = np.asarray(ages, dtype=float)
    integrated = A + B * c ** ages * (c - 1.0) / math.log(c)
    return -np.expm1(-integrated)


def builtin_table_path():
    return resources.files("kmfund") / "data" / "gompertz_makeham.csv"


def builtin_mortality(delta_t, start_age=65, end_age=None):
    with resources.as_file(builtin_table_path()) as p:
        return mortality_from_csv(p, delta_t, start_age, end_age)
