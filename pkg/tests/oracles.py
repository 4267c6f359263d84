"""Independent reference computations used by the tests.

Nothing here calls the package's solver code; the oracles work directly
from the problem statement in linear space with scipy/mpmath.
"""

import math

import numpy as np
from scipy import integrate, optimize, special


def one_period_primal(x, v, s, M, r, dt, C, u, X0, starts=12, seed=0):
    """Maximise the one-period objective over grid-valued monotone payoffs.

    The payoff pays ``x[i]`` when the abstract-market coordinate falls in
    ``(b_{i-1}, b_i]``; breakpoints are ``b_i = Phi(c_i)`` with ``c``
    increasing.  The Q-law of the coordinate is ``Phi(M + Phi^{-1}(b))``.
    Consumption takes whatever budget the payoff leaves.  Returns
    ``(ell, gamma)`` at the best point found.
    """
    x = np.asarray(x, dtype=float)
    w = -np.asarray(v, dtype=float)
    N = x.size
    disc = s**C * math.exp(-r * dt)
    rng = np.random.default_rng(seed)

    def unpack(p):
        if N == 1:
            return np.array([])
        return p[0] + np.concatenate([[0.0], np.cumsum(np.exp(p[1:]))])

    def masses(c):
        b = np.concatenate([[0.0], special.ndtr(c), [1.0]])
        q = np.concatenate([[0.0], special.ndtr(c + M), [1.0]])
        return np.diff(b), np.diff(q)

    def evaluate(p):
        dU, dQ = masses(unpack(p))
        gamma = X0 - disc * float(np.dot(x, dQ))
        ug = float(u(gamma)) if gamma > u.gamma_min else -np.inf
        A = math.log((1 - s) + s * float(np.dot(w, dU)))
        return ug * dt - A, gamma

    def loss(p):
        ell, _ = evaluate(p)
        return -ell if np.isfinite(ell) else 1e12

    best = None
    for k in range(starts):
        if N == 1:
            break
        c0 = np.sort(rng.normal(0.0, 1.5, N - 1)) if k else np.linspace(-1, 1, N - 1)
        p0 = np.concatenate([[c0[0]], np.log(np.maximum(np.diff(c0), 1e-3))])
        if loss(p0) >= 1e12:
            c0 = c0 + 3.0
            p0[0] = c0[0]
        res = optimize.minimize(loss, p0, method="Nelder-Mead",
                                options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 40000,
                                         "maxfev": 40000})
        res = optimize.minimize(loss, res.x, method="BFGS", options={"gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    if N == 1:
        return evaluate(np.array([0.0]))
    return evaluate(best.x)


def mattress_integral(params, gamma_path):
    """``int_0^inf gamma_t dt`` by adaptive quadrature on a mapped half-line."""
    def f(t):
        return float(gamma_path(params, t))

    total, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-11, limit=500)
    return total
