"""Concave piecewise-linear value functions stored in l-space.

A value function ``v < 0`` on a wealth grid is stored as ``l = -log(-v)`` so
that exponential-preference recursions never overflow.  Interpolation is
linear in ``v`` (not in ``l``); ``v`` is ``-inf`` left of the first grid
point and constant right of the last one.
"""

from dataclasses import dataclass, field

import numpy as np

# log-slope increases below this are treated as rounding noise and flattened
SLOPE_NOISE = 1e-9


def log_diff_exp_vec(a, b):
    """Elementwise ``log(exp(a) - exp(b))`` for ``a >= b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        d = b - a
        out = a + np.where(d > -np.log(2.0), np.log(-np.expm1(d)), np.log1p(-np.exp(d)))
    out = np.where(b == -np.inf, a, out)
    out = np.where(a == b, -np.inf, out)
    return out


@dataclass(frozen=True)
class PLValueFunction:
    grid: np.ndarray
    ell: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        ell = np.asarray(self.ell, dtype=float)
        if x.ndim != 1 or x.size < 1 or ell.shape != x.shape:
            raise ValueError("grid and ell must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(ell)):
            raise ValueError("ell must be finite on the grid; drop infeasible points first")
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "ell", ell)

    @property
    def size(self):
        return self.grid.size

    @property
    def values(self):
        with np.errstate(over="ignore"):
            return -np.exp(-self.ell)

    def log_slopes(self):
        """``log p_i`` for the ``N - 1`` interior segments (raw, unclamped)."""
        logw = -self.ell
        return log_diff_exp_vec(logw[:-1], logw[1:]) - np.log(np.diff(self.grid))

    def shape_violations(self, slack=1e-12):
        """Count monotonicity and concavity violations beyond a relative slack.

        Monotone: ``v_{i+1} >= v_i`` up to ``slack |v_i|``.  Concave: each
        value is at least the chord of its neighbours, up to ``slack |v_i|``.
        Checks are done in log space so huge ``|v|`` does not overflow.
        """
        logw = -self.ell
        mono = int(np.sum(self.ell[1:] < self.ell[:-1] - slack))
        if self.size < 3:
            return {"monotone": mono, "concave": 0}
        x = self.grid
        theta = (x[1:-1] - x[:-2]) / (x[2:] - x[:-2])
        # chord of -v: (1-theta) w_{i-1} + theta w_{i+1}; concavity of v <=> w_i <= chord
        with np.errstate(divide="ignore"):
            chord = np.logaddexp(np.log1p(-theta) + logw[:-2], np.log(theta) + logw[2:])
        conc = int(np.sum(logw[1:-1] > chord + slack))
        return {"monotone": mono, "concave": conc}

    def eval_ell(self, x):
        """``l(v(x))`` with ``v`` interpolated linearly in value space."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        grid, logw = self.grid, -self.ell
        out = np.full(x.shape, -np.inf)
        inside = x >= grid[0]
        xi = np.minimum(x[inside], grid[-1])
        k = np.clip(np.searchsorted(grid, xi, side="right") - 1, 0, max(self.size - 2, 0))
        if self.size == 1:
            out[inside] = self.ell[0]
        else:
            theta = (xi - grid[k]) / (grid[k + 1] - grid[k])
            with np.errstate(divide="ignore"):
                lw = np.logaddexp(np.log1p(-theta) + logw[k], np.log(theta) + logw[k + 1])
            out[inside] = -lw
        return out

    def __call__(self, x):
        with np.errstate(over="ignore"):
            out = -np.exp(-self.eval_ell(x))
        return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class DualSlopes:
    """``log p_i`` for ``i = 0..N`` with ``log p_0 = +inf``, ``log p_N = -inf``."""

    log_p: np.ndarray

    @property
    def interior(self):
        return self.log_p[1:-1]


def terminal_value(grid, utility, delta_t):
    """Final-step value ``v(x) = -exp(-u(x) dt)`` stored as ``l = u(x) dt``."""
    grid = np.asarray(grid, dtype=float)
    u = np.asarray(utility(grid), dtype=float)
    if np.any(~np.isfinite(u)):
        bad = grid[~np.isfinite(u)]
        raise ValueError(f"utility is -inf at grid points {bad[:3]}...; start the grid "
                         f"above gamma_min={utility.gamma_min}")
    return PLValueFunction(grid, u * delta_t)


def dual_slopes(vf):
    """Decreasing log-slopes of ``vf`` with the +inf / -inf end conventions.

    Rounding can leave adjacent slopes a hair out of order; increases up to
    ``SLOPE_NOISE`` in log space are flattened into a single bracket, larger
    ones mean ``vf`` is not concave and raise.
    """
    raw = vf.log_slopes()
    if raw.size:
        clamped = np.minimum.accumulate(raw)
        with np.errstate(invalid="ignore"):
            excess = np.where(np.isfinite(raw), raw - clamped, 0.0)
        if np.any(excess > SLOPE_NOISE):
            i = int(np.argmax(excess))
            raise ValueError(f"value function is not concave near grid index {i + 1} "
                             f"(log-slope rises by {excess[i]:.3g})")
    else:
        clamped = raw
    return DualSlopes(np.concatenate([[np.inf], clamped, [-np.inf]]))


def v_dagger(slopes, grid, log_p):
    """Grid point ``x_i`` whose slope bracket ``[p_i, p_{i-1})`` contains ``p``.

    ``log_p`` may be a scalar or array; ``+inf`` maps to ``x_1``.
    """
    grid = np.asarray(grid, dtype=float)
    lp = np.asarray(log_p, dtype=float)
    # smallest i >= 1 with log p_i <= log_p, via ascending -log p
    idx = np.searchsorted(-slopes.log_p[1:], -lp, side="left")
    out = grid[np.minimum(idx, grid.size - 1)]
    return float(out) if out.ndim == 0 else out


def value_surface_rows(times, grid, ell):
    """Rows ``(t, x_i, l_i)`` of a value surface."""
    for t, row in zip(times, ell):
        for x, e in zip(grid, row):
            yield t, x, e
