"""scikit-learn style wrapper around the solver.

There is no training data: ``fit`` runs the backward induction for the
hyper-parameters given to the constructor, and ``predict`` maps initial
budgets to optimal first-step consumption.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import FundMode, MarketParams, PowerUtility, builtin_mortality
from .simulate import DEFAULT_LEVELS, SimConfig, initial_policy, simulate_paths
from .solver import GridSpec, SolveConfig, solve_backward


class FundPolicy(BaseEstimator):
    """Optimal consumption/investment policy for a fund of identical investors.

    Parameters mirror the run configuration: market (``mu, sigma, r,
    delta_t``), utility ``u(x) = a (x - x0)**n + b``, fund ``mode`` and the
    wealth grid.  ``mortality`` is a :class:`~kmfund.model.MortalityModel`;
    ``None`` uses the built-in synthetic table from age 65.

    Attributes
    ----------
    table_ : PolicyTable
    grid_ : ndarray
        Wealth grid actually used (left end moved to the first feasible point).
    min_budget_ : float
        Smallest feasible budget at ``t = 0``.
    """

    def __init__(self, mu=0.05, sigma=0.15, r=0.02, delta_t=0.02, a=-0.1, n=-2.0, x0=0.0,
                 b=0.0, mode="collective", mortality=None, grid_points=1001, grid_lower=0.0,
                 grid_upper=195.0, spacing="uniform", eps=None):
        self.mu = mu
        self.sigma = sigma
        self.r = r
        self.delta_t = delta_t
        self.a = a
        self.n = n
        self.x0 = x0
        self.b = b
        self.mode = mode
        self.mortality = mortality
        self.grid_points = grid_points
        self.grid_lower = grid_lower
        self.grid_upper = grid_upper
        self.spacing = spacing
        self.eps = eps

    def _solve_config(self):
        market = MarketParams(self.mu, self.sigma, self.r, self.delta_t)
        utility = PowerUtility(self.a, self.n, self.x0, self.b)
        mortality = self.mortality
        if mortality is None:
            mortality = builtin_mortality(self.delta_t)
        grid = GridSpec(int(self.grid_points), self.grid_lower, self.grid_upper, self.spacing)
        return SolveConfig(market, utility, mortality, FundMode.parse(self.mode), grid,
                           eps=self.eps)

    def fit(self, X=None, y=None):
        """Solve the problem; ``X`` and ``y`` are ignored."""
        self.table_ = solve_backward(self._solve_config())
        self.grid_ = self.table_.grid
        f = int(self.table_.first[0])
        self.min_budget_ = float(self.table_.grid[f])
        return self

    def _budgets(self, X):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_all_finite=True)
        return X[:, 0]

    def predict(self, X):
        """Optimal consumption at ``t = 0`` for each budget in ``X``."""
        check_is_fitted(self, "table_")
        budgets = self._budgets(X)
        return np.array([initial_policy(self.table_, float(x))[0] for x in budgets])

    def value(self, X):
        """``l = -log(-v)`` at ``t = 0``, linearly interpolated in ``v`` between grid points."""
        check_is_fitted(self, "table_")
        vf = self.table_.value_function(0)
        return vf.eval_ell(self._budgets(X))

    def score(self, X, y=None):
        """Mean of :meth:`value` over ``X`` (higher is better)."""
        return float(np.mean(self.value(X)))

    def simulate(self, x0, scenarios=100_000, seed=0, measure="P", percentiles=DEFAULT_LEVELS,
                 trace=0):
        """Consumption and wealth fans from initial budget ``x0``."""
        check_is_fitted(self, "table_")
        return simulate_paths(self.table_, SimConfig(x0, scenarios, seed, measure,
                                                     tuple(percentiles), trace))
