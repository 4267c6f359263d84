"""Closed-form solution of the mattress problem.

A single investor with exponential Kihlstrom-Mirman preferences, constant
force of mortality ``lam`` and no market return consumes out of a fixed pot.
With ``u(x) = a x**k + c`` the stationary value ``v_hat`` solves an implicit
equation in ``w = c v_hat + lam + lam v_hat``:

    x = (1-k)^(1-1/k) a^(-1/k) lam^(-1/k) (c+lam)^(1/k-1) w^(1/k)
        2F1(1/k, 1/k; 1+1/k; w/lam),          0 < w < lam

and ``w`` decays like ``exp(k (c+lam) t / (k-1))`` along the optimal path.
"""

import math
from dataclasses import dataclass

import numpy as np

from .numerics import gauss_2f1

# relative accuracy in x of the w bisection
X_RTOL = 1e-12
MAX_BISECT = 400


@dataclass(frozen=True)
class MattressParams:
    a: float
    k: float
    c: float
    lam: float
    x: float

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ValueError(f"k must lie in (0, 1), got {self.k}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.lam > 0:
            raise ValueError(f"force of mortality must be positive, got {self.lam}")
        if not self.c + self.lam > 0:
            raise ValueError(f"need c + lam > 0, got c={self.c}, lam={self.lam}")

    @property
    def v_hat_zero(self):
        """Value with no wealth: ``-lam / (c + lam)``."""
        return -self.lam / (self.c + self.lam)

    def _log_prefactor(self):
        k, a, c, lam = self.k, self.a, self.c, self.lam
        return ((1 - 1 / k) * math.log(1 - k) - math.log(a) / k - math.log(lam) / k
                + (1 / k - 1) * math.log(c + lam))

    def wealth_of_w(self, w):
        """Initial wealth whose value has ``w = c v_hat + lam + lam v_hat``."""
        if not 0.0 <= w < self.lam:
            raise ValueError(f"w must lie in [0, lam), got {w}")
        if w == 0.0:
            return 0.0
        k = self.k
        f = gauss_2f1(1 / k, 1 / k, 1 + 1 / k, w / self.lam)
        return math.exp(self._log_prefactor() + math.log(w) / k) * f

    def w_of_v(self, v_hat):
        return (self.c + self.lam) * v_hat + self.lam

    def v_of_w(self, w):
        return (w - self.lam) / (self.c + self.lam)


def solve_w(p):
    """``w0`` with ``wealth_of_w(w0) = p.x``, by bisection on ``(0, lam)``."""
    if p.x < 0:
        raise ValueError(f"initial wealth must be non-negative, got {p.x}")
    if p.x == 0:
        return 0.0
    lo, hi = 0.0, p.lam
    x_lo = 0.0
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        xm = p.wealth_of_w(mid)
        if xm < x_lo:
            raise ArithmeticError("x(w) is not increasing; 2F1 evaluation failed")
        if abs(xm - p.x) <= X_RTOL * p.x:
            return mid
        if xm < p.x:
            lo, x_lo = mid, xm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mattress_value(p):
    """Stationary value ``v_hat`` at wealth ``p.x``; lies in ``(-lam/(c+lam), 0)``."""
    return p.v_of_w(solve_w(p))


def mattress_gamma_from_v(p, v_hat):
    """Optimal consumption rate for value ``v_hat``."""
    v0 = p.v_hat_zero
    if not v0 <= v_hat < 0:
        raise ValueError(f"v_hat must lie in [{v0}, 0), got {v_hat}")
    num = p.c * v_hat + p.lam + p.lam * v_hat
    return (num / (p.a * (p.k - 1) * v_hat)) ** (1 / p.k)


def mattress_consumption_path(p, t, w0=None):
    """Optimal consumption rate at times ``t >= 0`` starting from wealth ``p.x``."""
    if w0 is None:
        w0 = solve_w(p)
    k, lam = p.k, p.lam
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    w = w0 * np.exp(k * t * (p.c + lam) / (k - 1))
    log_g = (-math.log(1 - k) - math.log(p.a) - math.log(lam) + math.log(p.c + lam)) / k
    with np.errstate(divide="ignore"):
        out = np.exp(log_g) * (w / (1 - w / lam)) ** (1 / k)
    return float(out) if out.ndim == 0 else out
