"""Overflow-safe scalar kernels.

Probabilities are carried through the solver in the signed-log encoding

    L(u) = log(2u)          for u <= 1/2
    L(u) = -log(2 - 2u)     for u >  1/2

which is a strictly increasing bijection [0, 1] -> [-inf, +inf] that keeps
full relative precision in both tails.  ``L(Phi(z))`` is antisymmetric in
``z`` and is computed from the log of the complementary error function, so
the normal tails never underflow.

The scalar kernels are compiled with numba so the one-period solver can call
them from inside its own compiled loops.
"""

import math

import numpy as np
from numba import njit, vectorize
from scipy import special

LOG2 = math.log(2.0)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)

# |z| above which the lower tail switches to the Mills-ratio continued fraction
_TAIL_SWITCH = 5.0


@njit(cache=True)
def log_sum_exp(a, b):
    """Return ``log(exp(a) + exp(b))`` without overflow."""
    if a < b:
        a, b = b, a
    if a == -np.inf:
        return -np.inf
    if a == np.inf:
        return np.inf
    return a + math.log1p(math.exp(b - a))


@njit(cache=True)
def _log_diff_exp(a, b):
    if b == -np.inf:
        return a
    if a == b:
        return -np.inf
    d = b - a
    # log1p(-e^d) loses accuracy for d near 0; log(-expm1(d)) is the fix
    if d > -LOG2:
        return a + math.log(-math.expm1(d))
    return a + math.log1p(-math.exp(d))


def log_diff_exp(a, b):
    """Return ``log(exp(a) - exp(b))`` for ``a >= b``.

    Equal arguments give ``-inf``.  Raises ``ValueError`` when ``a < b``.
    """
    if a < b:
        raise ValueError(f"log_diff_exp needs a >= b, got a={a!r}, b={b!r}")
    return _log_diff_exp(float(a), float(b))


@njit(cache=True)
def log_ndtr_neg(a):
    """``log Phi(-a)`` for ``a >= 0`` (lower normal tail at ``-a``)."""
    if a <= _TAIL_SWITCH:
        return math.log(0.5 * math.erfc(a / SQRT2))
    if a > 1e154:
        return -np.inf
    # Mills ratio Phi(-a)/phi(a) = 1/(a + 1/(a + 2/(a + 3/(a + ...))));
    # 10 + 300/a^2 terms reach double precision for a >= 5
    t = a
    for k in range(10 + int(300.0 / (a * a)), 0, -1):
        t = a + k / t
    return -0.5 * a * a - HALF_LOG_2PI - math.log(t)


@njit(cache=True)
def log_ndtr(z):
    """``log Phi(z)`` for any real ``z``."""
    if z <= 0.0:
        return log_ndtr_neg(-z)
    if z <= 35.0:
        # erfc keeps full relative accuracy while it stays normal
        return math.log1p(-0.5 * math.erfc(z / SQRT2))
    return -math.exp(log_ndtr_neg(z))


@njit(cache=True)
def _log_2ndtr_neg(a):
    # log(2 Phi(-a)), a >= 0; near a = 0 this is tiny and erf keeps it accurate
    if a <= 0.5:
        return math.log1p(-math.erf(a / SQRT2))
    return LOG2 + log_ndtr_neg(a)


@njit(cache=True)
def norm_cdf_L_scalar(z):
    if z != z:
        return np.nan
    if z <= 0.0:
        return _log_2ndtr_neg(-z)
    return -_log_2ndtr_neg(z)


@vectorize(["float64(float64)"], cache=True)
def _norm_cdf_L_ufunc(z):
    return norm_cdf_L_scalar(z)


def norm_cdf_L(z):
    """``L(Phi(z))``; exactly antisymmetric in ``z``."""
    out = _norm_cdf_L_ufunc(np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@njit(cache=True)
def L_log_lower(lval):
    """``log u`` from ``L(u)``."""
    if lval <= 0.0:
        return lval - LOG2
    return math.log1p(-0.5 * math.exp(-lval))


@njit(cache=True)
def L_log_upper(lval):
    """``log(1 - u)`` from ``L(u)``."""
    if lval >= 0.0:
        return -lval - LOG2
    return math.log1p(-0.5 * math.exp(lval))


def to_L(u):
    """Encode probabilities as ``L(u)``."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        out = np.where(u <= 0.5, np.log(2.0 * u), -np.log(2.0 - 2.0 * u))
    return float(out) if out.ndim == 0 else out


def from_L(lval):
    """Decode ``L(u)`` back to ``u``."""
    lval = np.asarray(lval, dtype=float)
    with np.errstate(over="ignore"):
        out = np.where(lval <= 0, 0.5 * np.exp(np.minimum(lval, 0.0)),
                       1.0 - 0.5 * np.exp(-np.maximum(lval, 0.0)))
    return float(out) if out.ndim == 0 else out


def _inv_lower_tail(logp):
    # a >= 0 with log Phi(-a) = logp, logp <= log(1/2)
    if logp >= -LOG2:
        return 0.0
    if logp > -700.0:
        a = -float(special.ndtri(math.exp(logp)))
    else:
        t = -2.0 * logp
        a = math.sqrt(t - math.log(t) - math.log(2.0 * math.pi))
    for _ in range(50):
        f = log_ndtr_neg(a) - logp
        # d/da log Phi(-a) = -phi(a)/Phi(-a)
        dlog = -math.exp(-0.5 * a * a - HALF_LOG_2PI - log_ndtr_neg(a))
        step = f / dlog
        a -= step
        if a < 0.0:
            a = 0.0
        if abs(step) <= 1e-15 * max(1.0, a):
            break
    return a


def norm_cdf_inv_L(lval):
    """Inverse of :func:`norm_cdf_L`: the ``z`` with ``L(Phi(z)) = lval``."""
    lval = float(lval)
    if math.isnan(lval):
        return math.nan
    if lval == 0.0:
        return 0.0
    if math.isinf(lval):
        return lval
    if lval < 0.0:
        return -_inv_lower_tail(lval - LOG2)
    return _inv_lower_tail(-lval - LOG2)


# --- Gauss hypergeometric function -------------------------------------------

_SERIES_MAX_TERMS = 200_000
_NEAR_INTEGER = 5e-4
_RICHARDSON_STEP = 2e-3


def _series_2f1(a, b, c, z):
    term = 1.0
    total = 1.0
    for n in range(_SERIES_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total
    raise ArithmeticError("2F1 series did not converge")


def _transformed_2f1(a, b, c, z):
    # z -> 1 - z linear transformation; m = c - a - b must not be an integer
    m = c - a - b
    w = 1.0 - z
    g = special.gamma
    first = g(c) * g(m) / (g(c - a) * g(c - b)) * _series_2f1(a, b, 1.0 - m, w)
    second = (w ** m * g(c) * g(-m) / (g(a) * g(b))
              * _series_2f1(c - a, c - b, m + 1.0, w))
    return first + second


def gauss_2f1(alpha, beta, gamma, z):
    """Gauss hypergeometric function 2F1(alpha, beta; gamma; z) for 0 <= z < 1.

    Direct power series for ``z <= 0.5``; above that the ``z -> 1 - z``
    connection formula.  When ``gamma - alpha - beta`` is within 5e-4 of an
    integer the connection formula has a removable pole, so the value is
    recovered by three-level Richardson extrapolation of symmetric
    perturbations of ``gamma`` (step 2e-3, truncation error O(step**6)).
    """
    z = float(z)
    if not 0.0 <= z < 1.0:
        raise ValueError(f"gauss_2f1 is implemented for 0 <= z < 1, got z={z!r}")
    if z <= 0.5:
        return _series_2f1(alpha, beta, gamma, z)
    m = gamma - alpha - beta
    if abs(m - round(m)) >= _NEAR_INTEGER:
        return _transformed_2f1(alpha, beta, gamma, z)
    h = _RICHARDSON_STEP

    def sym(k):
        return 0.5 * (_transformed_2f1(alpha, beta, gamma + k * h, z)
                      + _transformed_2f1(alpha, beta, gamma - k * h, z))

    return (15.0 * sym(1) - 6.0 * sym(2) + sym(3)) / 10.0
