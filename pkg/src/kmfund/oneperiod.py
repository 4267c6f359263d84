"""The one-period consumption/investment problem in closed form.

Given the next-step value function ``v`` on a grid, the optimum for budget
``X0`` is indexed by a transformed Lagrange multiplier ``eta``.  For fixed
``eta`` the optimal payoff is a step function of the abstract-market
coordinate ``U``: it pays ``x_i`` on ``(U_{i-1}, U_i]`` where

    U_i = Phi(-M/2 + (log eta - r dt - (1-C) log s - log p_i) / M)
    Q_i = Phi(+M/2 + (log eta - r dt - (1-C) log s - log p_i) / M)

and ``p_i`` are the slopes of ``v``.  Consumption, budget and value follow:

    A      = log((1 - s) + s sum_i (-v(x_i)) (U_i - U_{i-1}))
    log g  = u_tilde(log eta - log dt - A)
    X      = g + s^C exp(-r dt) sum_i x_i (Q_i - Q_{i-1})
    l(v0)  = u(g) dt - A

``solve_eta`` finds ``log eta`` with ``X = X0``.  All probabilities are held
as ``L`` values (see :mod:`kmfund.numerics`).

Sums are restricted to a window outside of which ``U_i`` is within ``eps`` of
0 or 1; there ``U_i`` is set to exactly 0 or 1.  The two ends use separate
cutoffs (see :class:`Truncation`).  The compiled kernel uses the
summation-by-parts form of the same clamped sums, in which every term is
positive:

    sum_i w_i dU_i = w_{i_max} + sum_{i_min <= i < i_max} U_i p_i dx_i
    sum_i x_i dQ_i = x_{i_min} + sum_{i_min <= i < i_max} (1 - Q_i) dx_i
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .model import FundMode, MarketParams, PowerUtility, log_excess_kernel, u_tilde_kernel
from .numerics import LOG2, log_ndtr, log_sum_exp, norm_cdf_L, norm_cdf_inv_L, to_L
from .valuefn import DualSlopes, PLValueFunction, dual_slopes, log_diff_exp_vec

# symmetric cutoff eps = EPS_SCALE / max|v(x_i)|; the default window is adaptive
EPS_SCALE = 1e-10
UPPER_EPS = 1e-16
TAIL_REL = 1e-16
ROOT_TOL = 1e-13
MAX_ROOT_ITER = 200


class MinimumBudget(ValueError):
    """Budget at or below the minimum affordable wealth ``floor``."""

    def __init__(self, x0, floor):
        self.x0 = x0
        self.floor = floor
        super().__init__(f"budget {x0!r} does not exceed the minimum budget {floor!r}")


@dataclass(frozen=True)
class OnePeriodInputs:
    vf: PLValueFunction
    slopes: DualSlopes
    s: float
    market: MarketParams
    mode: FundMode
    utility: PowerUtility

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"one-step survival must lie in (0, 1], got {self.s}")

    @classmethod
    def build(cls, vf, s, market, mode, utility):
        return cls(vf, dual_slopes(vf), float(s), market, FundMode.parse(mode), utility)

    @property
    def C(self):
        return self.mode.C

    @property
    def delta_t(self):
        return self.market.delta_t

    @property
    def shift(self):
        """``r dt + (1 - C) log s``: offset between ``log eta`` and the slope scale."""
        return self.market.r * self.delta_t + (1 - self.C) * math.log(self.s)

    @property
    def discount(self):
        """``s^C exp(-r dt)``: price today of one unit paid to each survivor."""
        return self.s ** self.C * math.exp(-self.market.r * self.delta_t)

    @property
    def floor(self):
        """Minimum budget ``gamma_min + s^C e^{-r dt} x_1``."""
        return self.utility.gamma_min + self.discount * self.vf.grid[0]


@dataclass(frozen=True)
class Truncation:
    """Cutoffs for the ``U ~ 0`` and ``U ~ 1`` ends of the summation window.

    A scalar ``eps`` gives the symmetric window ``U_i < eps`` / ``U_i > 1 - eps``.
    Clamping ``U_i`` to 0 there perturbs ``sum w_i dU_i`` by at most
    ``eps max w``, which with ``eps = 1e-10 / max|v|`` is an absolute 1e-10.
    When values span hundreds of orders of magnitude that ``eps`` underflows
    and the window covers the whole grid, so the default instead scans the
    lower end adaptively with a relative tail bound (``log_tail``) and cuts
    the upper end at ``1 - UPPER_EPS``, where the clamping error is at most
    ``2 UPPER_EPS`` relative to the sum.  Cutoffs are held as logarithms.
    """

    log_lo: float
    log_hi: float
    log_tail: float = -np.inf

    @classmethod
    def default(cls):
        return cls(-np.inf, math.log(UPPER_EPS), math.log(TAIL_REL))

    @classmethod
    def paper(cls, ell):
        """Symmetric ``eps = 1e-10 / max|v(x_i)|``."""
        log_eps = math.log(EPS_SCALE) + float(np.min(ell))
        return cls(log_eps, log_eps)

    @classmethod
    def symmetric(cls, eps):
        if eps == 0.0:
            return cls(-np.inf, -np.inf)
        if not 0.0 < eps < 0.5:
            raise ValueError(f"eps must lie in [0, 0.5), got {eps}")
        return cls(math.log(eps), math.log(eps))

    @classmethod
    def resolve(cls, eps):
        if eps is None:
            return cls.default()
        if isinstance(eps, cls):
            return eps
        return cls.symmetric(float(eps))

    @property
    def adaptive(self):
        return self.log_tail > -np.inf

    @property
    def z_lo(self):
        """``Phi^{-1}(eps_lo)``."""
        return norm_cdf_inv_L(LOG2 + self.log_lo)

    @property
    def z_hi(self):
        """``Phi^{-1}(1 - eps_hi)``."""
        return -norm_cdf_inv_L(LOG2 + self.log_hi)


@dataclass(frozen=True)
class EtaSolution:
    log_eta: float
    L_U: np.ndarray
    L_Q: np.ndarray
    A_eta: float
    log_gamma: float
    log_excess: float
    log_X: float
    i_min: int
    i_max: int
    mix: tuple | None = None

    @property
    def gamma(self):
        return math.exp(self.log_gamma)

    @property
    def X(self):
        return math.exp(self.log_X)


def _centred(inputs, log_eta):
    M = inputs.market.M
    kappa = log_eta - inputs.shift
    with np.errstate(invalid="ignore"):
        return -0.5 * M + (kappa - inputs.slopes.interior) / M


def breakpoints(inputs, log_eta):
    """``(L(U_i), L(Q_i))`` for ``i = 0..N``.

    For ``M = 0`` the breakpoints degenerate to indicators: ``U_i = Q_i = 1``
    when ``log eta - shift >= log p_i`` and 0 otherwise.
    """
    M = inputs.market.M
    interior = inputs.slopes.interior
    if M == 0.0:
        step = np.where(log_eta - inputs.shift >= interior, np.inf, -np.inf)
        lu = lq = step
    else:
        z = _centred(inputs, log_eta)
        lu = norm_cdf_L(z)
        lq = norm_cdf_L(z + M)
    ends = (np.array([-np.inf]), np.array([np.inf]))
    L_U = np.concatenate([ends[0], np.atleast_1d(lu), ends[1]])
    L_Q = np.concatenate([ends[0], np.atleast_1d(lq), ends[1]])
    return L_U, L_Q


def mixed_breakpoints(N, j_lo, j_hi, theta):
    """``L(U_i)`` for mass ``theta`` on grid index ``j_lo`` and the rest on ``j_hi``."""
    U = np.zeros(N + 1)
    U[j_lo + 1:] = theta
    U[j_hi + 1:] = 1.0
    return to_L(U)


def truncation_window(L_U, eps):
    """Summation window ``(i_min, i_max)`` in the ``0..N`` indexing of ``L_U``.

    ``i_min = max({1} | {i : U_i < eps})`` and
    ``i_max = min({N} | {i : U_i > 1 - eps})``.  ``eps = 0`` disables
    truncation and returns ``(1, N)``.  ``eps`` may also be a
    :class:`Truncation` with separate cutoffs for the two ends.
    """
    L_U = np.asarray(L_U, dtype=float)
    N = L_U.size - 1
    trunc = eps if isinstance(eps, Truncation) else Truncation.symmetric(float(eps))
    # U < eps  <=>  L(U) < log(2 eps);  U > 1 - eps  <=>  L(U) > -log(2 eps)
    l_lo = LOG2 + trunc.log_lo
    l_hi = -(LOG2 + trunc.log_hi)
    idx = np.arange(1, N + 1)
    inner = L_U[1:]
    low = idx[inner < l_lo]
    high = idx[inner > l_hi]
    i_min = max(1, int(low.max()) if low.size else 1)
    i_max = min(N, int(high.min()) if high.size else N)
    return i_min, max(i_min, i_max)


def _log_mass(La, Lb):
    """``log(u_b - u_a)`` for ``L(u_a) <= L(u_b)`` using whichever tail is accurate."""
    La = np.asarray(La, dtype=float)
    Lb = np.asarray(Lb, dtype=float)
    lower = log_diff_exp_vec(Lb - LOG2, La - LOG2)
    upper = log_diff_exp_vec(-La - LOG2, -Lb - LOG2)
    with np.errstate(over="ignore", invalid="ignore"):
        mixed = np.log1p(-(0.5 * np.exp(La) + 0.5 * np.exp(-Lb)))
    return np.where(Lb <= 0, lower, np.where(La >= 0, upper, mixed))


def _clamp(L, i_min, i_max):
    out = L.copy()
    out[:i_min] = -np.inf
    out[i_max:] = np.inf
    return out


def eta_step(inputs, log_eta, eps=None, mix=None):
    """Consumption, budget and ``A`` for one value of ``log eta``.

    Reference implementation: interval masses ``U_i - U_{i-1}`` are formed
    from adjacent ``L`` values and summed in log space.  Only the adaptive
    window location is shared with the compiled kernel.  ``mix = (j_lo, j_hi,
    theta)`` selects the split payoff of an ``M = 0`` kink (see
    :func:`mixed_breakpoints`).
    """
    eps = Truncation.resolve(eps)
    if mix is not None:
        L_U = L_Q = mixed_breakpoints(inputs.vf.size, *mix)
        i_min, i_max = mix[0] + 1, mix[1] + 1
    else:
        L_U, L_Q = breakpoints(inputs, log_eta)
        if eps.adaptive and inputs.market.M > 0.0:
            k = x_eta_kernel(float(log_eta), *StepArrays(inputs, eps).args())
            i_min, i_max = k[4] + 1, k[5] + 1
        else:
            i_min, i_max = truncation_window(L_U, eps)
    U = _clamp(L_U, i_min, i_max)
    Q = _clamp(L_Q, i_min, i_max)
    x = inputs.vf.grid
    logw = -inputs.vf.ell
    s = inputs.s
    with np.errstate(divide="ignore"):
        dU = _log_mass(U[:-1], U[1:])
        dQ = _log_mass(Q[:-1], Q[1:])
        log1ms = math.log1p(-s) if s < 1.0 else -np.inf
        A = float(logsumexp(np.concatenate([[log1ms], math.log(s) + logw + dU])))
        y = log_eta - math.log(inputs.delta_t) - A
        u = inputs.utility
        log_gamma = u_tilde_kernel(y, u.log_an, u.n, u.x0)
        log_excess = log_excess_kernel(y, u.log_an, u.n, u.x0)
        pay = inputs.C * math.log(s) - inputs.market.r * inputs.delta_t + np.log(x) + dQ
        log_X = float(logsumexp(np.concatenate([[log_gamma], pay])))
    return EtaSolution(float(log_eta), L_U, L_Q, A, log_gamma, log_excess, log_X, i_min, i_max,
                       mix)


def step_value(inputs, sol):
    """``l(v_{t0}(X0)) = u(gamma) dt - A``."""
    u = inputs.utility
    return _utility_from_excess(sol.log_excess, u.a, u.n, u.b) * inputs.delta_t - sol.A_eta


@njit(cache=True)
def _utility_from_excess(log_excess, a, n, b):
    if log_excess == -np.inf:
        return -np.inf if n < 0.0 else b
    return a * math.exp(n * log_excess) + b


def limit_value(inputs):
    """``l`` of the ``eta -> inf`` limit: consume ``gamma_min``, pay ``x_1`` surely."""
    u = inputs.utility
    s = inputs.s
    ug = float(u(u.gamma_min))
    logw1 = -inputs.vf.ell[0]
    A = log_sum_exp(math.log1p(-s) if s < 1.0 else -np.inf, math.log(s) + logw1)
    return ug * inputs.delta_t - A


# --- compiled path -----------------------------------------------------------


@njit(cache=True)
def _lse_add(m, acc, t):
    # streaming log-sum-exp accumulator: value = m + log(acc)
    if t == -np.inf:
        return m, acc
    if t > m:
        return t, acc * math.exp(m - t) + 1.0
    return m, acc + math.exp(t - m)


@njit(cache=True)
def _lse_value(m, acc):
    if acc == 0.0:
        return -np.inf
    return m + math.log(acc)


@njit(cache=True)
def _first_le(lp, theta):
    # first 0-based k with lp[k] <= theta in a non-increasing array; len if none
    lo, hi = 0, lp.size
    while lo < hi:
        mid = (lo + hi) // 2
        if lp[mid] <= theta:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _first_lt(lp, theta):
    lo, hi = 0, lp.size
    while lo < hi:
        mid = (lo + hi) // 2
        if lp[mid] < theta:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def window_kernel(log_eta, lp, shift, M, z_lo, z_hi):
    """0-based grid indices ``(k_min, k_max)`` of the clamped window.

    Breakpoints ``lp[k]`` sit between grid points ``k`` and ``k + 1``.  For
    ``M = 0`` both indices equal the single payoff index.
    """
    kappa = log_eta - shift
    m = lp.size
    if M == 0.0:
        j = _first_le(lp, kappa)
        return j, j
    # U_k < eps_lo  <=>  lp[k] > kappa - M (z_lo + M/2)
    theta_lo = kappa - M * (z_lo + 0.5 * M)
    n_low = _first_le(lp, theta_lo)
    k_min = n_low - 1 if n_low > 0 else 0
    # U_k > 1 - eps_hi  <=>  lp[k] < kappa - M (z_hi + M/2)
    theta_hi = kappa - M * (z_hi + 0.5 * M)
    k_max = _first_lt(lp, theta_hi)
    if k_max > m:
        k_max = m
    if k_max < k_min:
        k_max = k_min
    return k_min, k_max


@njit(cache=True)
def x_eta_kernel(log_eta, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                 log_dt, log_an, n, x0):
    """Return ``(log X, A, log gamma, log excess, k_min, k_max, log(X - floor))``.

    With finite ``log_tail`` the lower end of the window is found adaptively:
    terms are added from ``k_max`` downwards and the scan stops at the first
    breakpoint past which the neglected parts of both sums are provably below
    ``exp(log_tail)`` relative to what has been summed.
    """
    shift = rdt + (1 - C) * math.log(s)
    k_min, k_max = window_kernel(log_eta, lp, shift, M, z_lo, z_hi)
    ma, acc_a = _lse_add(-np.inf, 0.0, logw[k_max])
    mx, acc_x = -np.inf, 0.0
    if M > 0.0:
        kappa = log_eta - shift
        adaptive = log_tail > -np.inf
        k = k_max - 1
        while k >= k_min:
            zeta = -0.5 * M + (kappa - lp[k]) / M
            lu = log_ndtr(zeta)
            # for zeta <= -M the terms U_j p_j grow with j, so every term left of
            # k is at most U_k p_k and every Q_j at most Q_k
            if adaptive and zeta <= -M:
                bound_a = lu + lp[k] + math.log(x[k + 1] - x[0])
                if (bound_a <= log_tail + _lse_value(ma, acc_a)
                        and log_ndtr(zeta + M) <= log_tail):
                    k_min = k + 1
                    break
            ma, acc_a = _lse_add(ma, acc_a, lu + lp[k] + logdx[k])
            mx, acc_x = _lse_add(mx, acc_x, log_ndtr(-zeta - M) + logdx[k])
            k -= 1
    # the same payoff sum without x_1, for the budget in excess of the floor
    me, acc_e = mx, acc_x
    if k_min > 0:
        me, acc_e = _lse_add(me, acc_e, math.log(x[k_min] - x[0]))
    mx, acc_x = _lse_add(mx, acc_x, logx[k_min])
    log_sum_w = _lse_value(ma, acc_a)
    log_sum_x = _lse_value(mx, acc_x)
    log1ms = math.log1p(-s) if s < 1.0 else -np.inf
    A = log_sum_exp(log1ms, math.log(s) + log_sum_w)
    y = log_eta - log_dt - A
    log_gamma = u_tilde_kernel(y, log_an, n, x0)
    log_excess = log_excess_kernel(y, log_an, n, x0)
    log_d = C * math.log(s) - rdt
    log_X = log_sum_exp(log_gamma, log_d + log_sum_x)
    # gamma - gamma_min: the excess over x0 when x0 >= 0, gamma itself otherwise
    log_g_ex = log_excess if x0 >= 0.0 else log_gamma
    log_X_ex = log_sum_exp(log_g_ex, log_d + _lse_value(me, acc_e))
    return log_X, A, log_gamma, log_excess, k_min, k_max, log_X_ex


@njit(cache=True)
def _x_mixed(log_eta, theta, j_lo, j_hi, logx, logw, s, C, rdt, log_dt, log_an, n, x0):
    # M = 0 at a kink: mass theta on grid point j_lo and 1 - theta on j_hi
    if theta >= 1.0:
        lw, lx = logw[j_lo], logx[j_lo]
    elif theta <= 0.0:
        lw, lx = logw[j_hi], logx[j_hi]
    else:
        lt, l1t = math.log(theta), math.log1p(-theta)
        lw = log_sum_exp(lt + logw[j_lo], l1t + logw[j_hi])
        lx = log_sum_exp(lt + logx[j_lo], l1t + logx[j_hi])
    log1ms = math.log1p(-s) if s < 1.0 else -np.inf
    A = log_sum_exp(log1ms, math.log(s) + lw)
    y = log_eta - log_dt - A
    log_gamma = u_tilde_kernel(y, log_an, n, x0)
    log_excess = log_excess_kernel(y, log_an, n, x0)
    log_X = log_sum_exp(log_gamma, C * math.log(s) - rdt + lx)
    return log_X, A, log_gamma, log_excess


@njit(cache=True)
def _flat_solve(target, x, logx, logw, lp, s, C, rdt, log_dt, log_an, n, x0, tol):
    # M = 0: the payoff is a sure grid value or a split between neighbours.  The
    # objective need not be concave in the budget, so every candidate is scored:
    # each pure payoff and each stationary split on each segment.
    X = math.exp(target)
    log_s = math.log(s) if s > 0.0 else -np.inf
    log_d = C * log_s - rdt
    d = math.exp(log_d)
    shift = rdt + (1 - C) * log_s
    log1ms = math.log1p(-s) if s < 1.0 else -np.inf
    dt = math.exp(log_dt)
    c = math.exp(log_an) / n
    g_min = max(x0, 0.0)
    N = x.size
    best, j_best, theta_best = -np.inf, -1, np.nan
    for j in range(N):
        g = X - d * x[j]
        if g < g_min or g - x0 <= 0.0:
            break
        val = c * (g - x0) ** n * dt - log_sum_exp(log1ms, log_s + logw[j])
        if val > best:
            best, j_best = val, j
    n_scan = 16
    for j in range(N - 1):
        le = shift + lp[j]
        f_prev = _x_mixed(le, 1.0, j, j + 1, logx, logw, s, C, rdt, log_dt, log_an, n,
                          x0)[0] - target
        for k in range(1, n_scan + 1):
            th_hi = 1.0 - k / n_scan
            f = _x_mixed(le, th_hi, j, j + 1, logx, logw, s, C, rdt, log_dt, log_an, n,
                         x0)[0] - target
            if f_prev * f < 0.0:
                # bracket [th_hi, th_lo] with opposite signs at the ends
                lo, hi, f_lo = th_hi, th_hi + 1.0 / n_scan, f
                theta = lo
                for _ in range(200):
                    theta = 0.5 * (lo + hi)
                    fm = _x_mixed(le, theta, j, j + 1, logx, logw, s, C, rdt, log_dt,
                                  log_an, n, x0)[0] - target
                    if abs(fm) <= tol or hi - lo <= 1e-17:
                        break
                    if fm * f_lo > 0.0:
                        lo, f_lo = theta, fm
                    else:
                        hi = theta
                out = _x_mixed(le, theta, j, j + 1, logx, logw, s, C, rdt, log_dt, log_an,
                               n, x0)
                val = c * math.exp(n * out[3]) * dt - out[1]
                if val > best:
                    best, j_best, theta_best = val, j, theta
            f_prev = f
    if j_best < 0:
        return 0.0, -np.inf, 0.0, 0.0, 0.0, 0, 0, 1, np.nan
    if theta_best == theta_best:
        le = shift + lp[j_best]
        out = _x_mixed(le, theta_best, j_best, j_best + 1, logx, logw, s, C, rdt, log_dt,
                       log_an, n, x0)
        status = 0 if abs(out[0] - target) <= 1e-10 else 2
        return le, out[0], out[1], out[2], out[3], j_best, j_best + 1, status, theta_best
    # pure payoff: eta from the first-order condition in consumption, kept inside
    # the bracket of slopes that selects x_j
    g = X - d * x[j_best]
    A = log_sum_exp(log1ms, log_s + logw[j_best])
    kappa = log_an + (n - 1.0) * math.log(g - x0) + log_dt + A - shift
    if j_best < N - 1 and kappa < lp[j_best]:
        kappa = lp[j_best]
    if j_best > 0 and kappa >= lp[j_best - 1]:
        kappa = np.nextafter(lp[j_best - 1], -np.inf)
    le = kappa + shift
    y = le - log_dt - A
    log_gamma = u_tilde_kernel(y, log_an, n, x0)
    log_excess = log_excess_kernel(y, log_an, n, x0)
    log_X = log_sum_exp(log_gamma, log_d + logx[j_best])
    status = 0 if abs(log_X - target) <= 1e-10 else 2
    return le, log_X, A, log_gamma, log_excess, j_best, j_best, status, np.nan


@njit(cache=True)
def _solve_kernel(target, guess, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                  log_dt, log_an, n, x0, tol, step=0.05):
    """Bracket then Illinois-safeguarded regula falsi on ``log X(log eta) = target``.

    Returns ``(log_eta, log_X, A, log_gamma, log_excess, k_min, k_max, status, mix)``;
    status 0 converged, 1 bracketing failed, 2 iteration cap hit.  For
    ``M = 0`` ``X`` jumps at every kink; a budget inside a jump is met by
    fixing ``eta`` at the kink and splitting the payoff between the two
    adjacent grid points, with ``mix`` the mass on the lower one (NaN when
    no split is needed).
    """
    if M == 0.0:
        return _flat_solve(target, x, logx, logw, lp, s, C, rdt, log_dt, log_an, n, x0, tol)
    # root on log(X - floor): near the floor log X cannot resolve consumption
    floor = max(x0, 0.0) + math.exp(C * math.log(s) - rdt) * x[0]
    X0 = math.exp(target)
    if not X0 > floor:
        return guess, target, 0.0, 0.0, 0.0, 0, 0, 1, np.nan
    target_ex = math.log(X0 - floor)
    a = guess
    fa = x_eta_kernel(a, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                      log_dt, log_an, n, x0)[6] - target_ex
    b, fb = a, fa
    it = 0
    # expand until the sign changes; X decreases in eta on every instance seen
    while fb != 0.0 and fa * fb >= 0.0:
        if it > 80:
            return a, target, 0.0, 0.0, 0.0, 0, 0, 1, np.nan
        b = a + step if fa > 0.0 else a - step
        fb = x_eta_kernel(b, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                          log_dt, log_an, n, x0)[6] - target_ex
        if fa * fb > 0.0:
            a, fa = b, fb
        step *= 2.0
        it += 1
    status = 2
    for it in range(MAX_ROOT_ITER):
        if abs(fb) <= tol:
            status = 0
            break
        if abs(b - a) <= 4e-16 * max(1.0, abs(b)):
            status = 0
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (min(a, b) < c < max(a, b)):
            c = 0.5 * (a + b)
        fc = x_eta_kernel(c, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                          log_dt, log_an, n, x0)[6] - target_ex
        if fc * fb < 0.0:
            a, fa = b, fb
        else:
            # Illinois step: halve the retained end so it cannot stall
            fa *= 0.5
        b, fb = c, fc
    if abs(fa) < abs(fb):
        b = a
    out = x_eta_kernel(b, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                       log_dt, log_an, n, x0)
    return b, out[0], out[1], out[2], out[3], out[4], out[5], status, np.nan


@njit(cache=True)
def solve_row_kernel(log_targets, guesses, x, logx, logw, lp, logdx, s, C, rdt, M, z_lo, z_hi, log_tail,
                     log_dt, log_an, n, x0, ua, ub, tol, step):
    """Solve every budget in ``log_targets``; a NaN guess reuses the previous root.

    Returns ``(log_eta, ell, log_gamma, k_min, k_max, mix, status)`` arrays.
    """
    m = log_targets.size
    log_eta = np.empty(m)
    ell = np.empty(m)
    log_gamma = np.empty(m)
    k_min = np.empty(m, dtype=np.int64)
    k_max = np.empty(m, dtype=np.int64)
    mix = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    prev = 0.0
    for i in range(m):
        g = guesses[i]
        if g != g:
            g = prev
        res = _solve_kernel(log_targets[i], g, x, logx, logw, lp, logdx, s, C, rdt, M,
                            z_lo, z_hi, log_tail, log_dt, log_an, n, x0, tol, step)
        log_eta[i] = res[0]
        log_gamma[i] = res[3]
        ell[i] = _utility_from_excess(res[4], ua, n, ub) * math.exp(log_dt) - res[2]
        k_min[i] = res[5]
        k_max[i] = res[6]
        status[i] = res[7]
        mix[i] = res[8]
        prev = res[0]
    return log_eta, ell, log_gamma, k_min, k_max, mix, status


class StepArrays:
    """Flat arrays the compiled kernels consume for one time step."""

    def __init__(self, inputs, eps=None):
        vf = inputs.vf
        self.x = vf.grid
        with np.errstate(divide="ignore"):
            self.logx = np.log(vf.grid)
        self.logw = -vf.ell
        self.lp = np.ascontiguousarray(inputs.slopes.interior)
        self.logdx = np.log(np.diff(vf.grid))
        self.s = inputs.s
        self.C = inputs.C
        self.rdt = inputs.market.r * inputs.delta_t
        self.M = inputs.market.M
        self.eps = Truncation.resolve(eps)
        self.z_lo = self.eps.z_lo
        self.z_hi = self.eps.z_hi
        self.log_tail = self.eps.log_tail
        self.log_dt = math.log(inputs.delta_t)
        u = inputs.utility
        self.log_an, self.n, self.x0 = u.log_an, u.n, u.x0
        self.ua, self.ub = u.a, u.b

    def args(self):
        return (self.x, self.logx, self.logw, self.lp, self.logdx, self.s, self.C,
                self.rdt, self.M, self.z_lo, self.z_hi, self.log_tail, self.log_dt, self.log_an, self.n, self.x0)


def solve_eta(inputs, X0, eps=None, guess=0.0, tol=ROOT_TOL, arrays=None):
    """Find ``log eta`` with ``log X^eta = log X0`` and return the full solution.

    Raises :class:`MinimumBudget` when ``X0`` does not exceed the floor
    ``gamma_min + s^C e^{-r dt} x_1``.
    """
    floor = inputs.floor
    if not X0 > floor * (1.0 + 1e-12) + 1e-300:
        raise MinimumBudget(X0, floor)
    arr = arrays if arrays is not None else StepArrays(inputs, eps)
    res = _solve_kernel(math.log(X0), guess, *arr.args(), tol)
    if res[7] == 1:
        raise ArithmeticError(f"could not bracket eta for budget {X0}")
    mix = None if math.isnan(res[8]) else (int(res[5]), int(res[6]), float(res[8]))
    return eta_step(inputs, res[0], arr.eps, mix=mix)


def solve_many(inputs, X0, guesses=None, eps=None, tol=ROOT_TOL, step=0.05, arrays=None):
    """Vectorised :func:`solve_eta` for budgets strictly above the floor.

    Returns ``(log_eta, ell, log_gamma, k_min, k_max, mix)``; windows are
    0-based grid indices and ``mix`` is NaN except for ``M = 0`` split payoffs.
    ``guesses`` may hold NaN to chain from the previous budget.
    """
    X0 = np.asarray(X0, dtype=float)
    if X0.size and not np.all(X0 > inputs.floor * (1.0 + 1e-12) + 1e-300):
        raise MinimumBudget(float(X0.min()), inputs.floor)
    arr = arrays if arrays is not None else StepArrays(inputs, eps)
    if guesses is None:
        guesses = np.full(X0.shape, np.nan)
    out = solve_row_kernel(np.log(X0), np.asarray(guesses, dtype=float), *arr.args(),
                           arr.ua, arr.ub, tol, step)
    bad = np.flatnonzero(out[6] == 1)
    if bad.size:
        raise ArithmeticError(f"could not bracket eta for budget {X0[bad[0]]}")
    return out[:6]
