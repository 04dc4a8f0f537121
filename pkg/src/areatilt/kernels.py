"""Correlation kernels of the Dyson Ferrari-Spohn ensemble and the extended Airy kernel.

Matrix-valued evaluators (``*_matrix``) are the workhorses; the scalar
operations wrap them.  All infinite sums and integrals are truncated with an
explicit bound on the discarded part; when the bound cannot be pushed below
the requested tolerance a ``TruncationError`` reports the achievable bound.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaincc

from . import airy
from .airy import AI_SUP
from .errors import DomainError, TruncationError
from .quadrature import composite_gauss_legendre

C1 = (1.5 * math.pi) ** (2.0 / 3.0)


class SpaceTimePoint(NamedTuple):
    x: float
    t: float


@dataclass(frozen=True)
class KernelSpec:
    """Finite-N kernel parameters.

    ``tail_terms`` is the minimum number of terms kept past N in the
    unequal-time sum; more are added until the tail certificate holds.
    """

    n_curves: int
    tail_terms: int = 8
    integral_cutoff: float = 40.0
    tol: float = 1e-8

    def __post_init__(self):
        if self.n_curves < 1:
            raise DomainError(f"n_curves must be >= 1, got {self.n_curves}")
        if self.tail_terms < 1:
            raise DomainError("tail_terms must be >= 1")
        if not self.tol > 0:
            raise DomainError("tol must be positive")

    @property
    def shift(self):
        return C1 * self.n_curves ** (2.0 / 3.0)


def edge_shift(n_curves):
    return C1 * n_curves ** (2.0 / 3.0)


# -- finite-N kernel -----------------------------------------------------------


def _log_upper_gamma_32(z):
    """log Gamma(3/2, z), using the bound Gamma(a,z) <= z^{a-1} e^{-z} / (1 - (a-1)/z) for large z."""
    if z < 30.0:
        return math.log(gammaincc(1.5, z) * math.gamma(1.5))
    return 0.5 * math.log(z) - z - math.log1p(-0.5 / z)


def _log_tail_bound(k_last, beta):
    """log of a bound on sum_{k > k_last} exp(-beta omega_k) sup|phi_k|^2.

    Uses omega_k >= w(k) = (3 pi (4k - 5) / 8)^{2/3}, the integral comparison
    sum_{k>K} e^{-beta w(k)} <= int_K^inf e^{-beta w(s)} ds
    = Gamma(3/2, beta w(K)) / (pi beta^{3/2}), and
    sup|phi_k| <= AI_SUP / |Ai'(-omega_K)| for k > K.
    """
    tab = airy.zero_table(k_last)
    w_k = (3.0 * math.pi * (4.0 * k_last - 5.0) / 8.0) ** (2.0 / 3.0)
    amp = AI_SUP / abs(tab.derivs_at_zero[k_last - 1])
    return (
        2.0 * math.log(amp)
        + _log_upper_gamma_32(beta * w_k)
        - math.log(math.pi)
        - 1.5 * math.log(beta)
    )


def _upper_branch_terms(n, dt_half, log_pref, tol, min_extra):
    """Pick the truncation index K for -sum_{k>n} exp(log_pref - dt_half*omega_k) phi_k phi_k.

    Returns ``(K, tail_bound)``.  Raises ``TruncationError`` if the zero table
    is exhausted first.
    """
    cap = airy.ZERO_CAPACITY
    k = min(n + min_extra, cap)
    best = math.inf
    while True:
        tab = airy.zero_table(k)
        amp = AI_SUP / abs(tab.derivs_at_zero[k - 1])
        log_term = log_pref - dt_half * tab.zeros[k - 1] + 2.0 * math.log(amp)
        log_tail = log_pref + _log_tail_bound(k, dt_half)
        tail = math.exp(min(log_tail, 700.0))
        best = min(best, tail)
        if log_term < math.log(tol / 10.0) and tail < tol:
            return k, tail
        if k >= cap:
            raise TruncationError(
                f"unequal-time sum not certifiable with {cap} Airy zeros: "
                f"achievable tail bound {best:.3e} > tol {tol:.1e}",
                achievable=best,
            )
        k = min(cap, max(k + 16, int(k * 1.25)))


def _kernel_block(n, x, t_i, y, t_j, log_pref_rate, tol, min_extra):
    """K_N(x, t_i; y, t_j) times exp(log_pref_rate * (t_j - t_i) / 2), as a matrix.

    ``log_pref_rate`` folds the exponential conjugation of the shifted kernel
    into each term so large prefactors never overflow.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dt = t_j - t_i
    if t_i >= t_j:
        tab = airy.zero_table(n)
        expo = -0.5 * dt * (tab.zeros[:n] - log_pref_rate)
        px = airy.eigenfunctions(n, x)
        py = airy.eigenfunctions(n, y)
        return (px * np.exp(expo)) @ py.T
    half = 0.5 * dt
    k_last, _ = _upper_branch_terms(n, half, half * log_pref_rate, tol, min_extra)
    tab = airy.zero_table(k_last)
    expo = -half * (tab.zeros[n:k_last] - log_pref_rate)
    px = _eigenfunction_range(n, k_last, x)
    py = _eigenfunction_range(n, k_last, y)
    return -(px * np.exp(expo)) @ py.T


def _eigenfunction_range(k_from, k_to, x):
    """Columns phi_{k_from+1} .. phi_{k_to} evaluated at x."""
    tab = airy.zero_table(k_to)
    vals = airy.ai(x[:, None] - tab.zeros[k_from:k_to])
    return vals / tab.norms[k_from:k_to]


def kernel_finite_matrix(spec, x, t_i, y, t_j):
    """Matrix ``[K_N(x_a, t_i; y_b, t_j)]``."""
    return _kernel_block(spec.n_curves, x, t_i, y, t_j, 0.0, spec.tol, spec.tail_terms)


def kernel_shifted_matrix(spec, xi, tau_i, eta, tau_j):
    """Matrix ``[K~_N(xi_a, tau_i; eta_b, tau_j)]``.

    K~_N = exp((tau_j - tau_i) c1 N^{2/3}) K_N(c1 N^{2/3} + xi, 2 tau_i; c1 N^{2/3} + eta, 2 tau_j).
    The same shift is applied to both spatial slots.
    """
    s = spec.shift
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    # exp((tau_j - tau_i) s) == exp(s * (2 tau_j - 2 tau_i) / 2)
    return _kernel_block(spec.n_curves, xi + s, 2.0 * tau_i, eta + s, 2.0 * tau_j, s, spec.tol, spec.tail_terms)


def kernel_finite(spec, p, q):
    p, q = SpaceTimePoint(*p), SpaceTimePoint(*q)
    return float(kernel_finite_matrix(spec, [p.x], p.t, [q.x], q.t)[0, 0])


def kernel_shifted(spec, p, q):
    p, q = SpaceTimePoint(*p), SpaceTimePoint(*q)
    return float(kernel_shifted_matrix(spec, [p.x], p.t, [q.x], q.t)[0, 0])


# -- extended Airy kernel -------------------------------------------------------

_PANEL_WIDTH = 1.0
_PANEL_ORDER = 20


def _ai_sq_tail(z0):
    """Bound on int_{z0}^inf Ai(z)^2 dz for z0 > 0."""
    return math.exp(-(4.0 / 3.0) * z0 ** 1.5) / (8.0 * math.pi * z0)


def _lambda_nodes(lo, hi):
    panels = max(1, int(math.ceil((hi - lo) / _PANEL_WIDTH)))
    return composite_gauss_legendre(lo, hi, panels, _PANEL_ORDER)


def airy_ext_matrix(xi, tau_i, eta, tau_j, cutoff=40.0, tol=1e-8):
    """Matrix of the extended Airy kernel ``A(tau_i, xi_a; tau_j, eta_b)``.

    tau_i >= tau_j:  int_0^inf e^{-lam (tau_i - tau_j)} Ai(xi + lam) Ai(eta + lam) dlam
    tau_i <  tau_j: -int_{-inf}^0 e^{-lam (tau_i - tau_j)} Ai(xi + lam) Ai(eta + lam) dlam
    The integral is cut at the smallest |lam| <= cutoff whose tail bound is below tol.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    gap = tau_i - tau_j
    if gap >= 0:
        lo_arg = min(xi.min(), eta.min())
        # AM-GM: |Ai(a)Ai(b)| <= (Ai(a)^2 + Ai(b)^2)/2, and e^{-lam gap} <= 1
        end = None
        for trial in np.arange(1.0, cutoff + 1e-9, 1.0):
            z0 = lo_arg + trial
            if z0 > 0.5 and _ai_sq_tail(z0) < tol:
                end = trial
                break
        if end is None:
            z0 = lo_arg + cutoff
            bound = _ai_sq_tail(z0) if z0 > 0 else math.inf
            raise TruncationError(
                f"Airy-kernel integral needs cutoff beyond {cutoff} (tail bound {bound:.2e})",
                achievable=bound,
            )
        lam, w = _lambda_nodes(0.0, end)
        w = w * np.exp(-lam * gap)
        sign = 1.0
    else:
        rate = -gap
        # |Ai| <= AI_SUP on the whole line
        need = math.log(AI_SUP ** 2 / (tol * rate)) / rate
        if need > cutoff:
            bound = AI_SUP ** 2 * math.exp(-cutoff * rate) / rate
            raise TruncationError(
                f"time gap {rate:.3g} too small: tail bound {bound:.2e} at cutoff {cutoff}",
                achievable=bound,
            )
        end = max(need, 1.0)
        lam, w = _lambda_nodes(-end, 0.0)
        w = w * np.exp(lam * rate)
        sign = -1.0
    ax = airy.ai(xi[:, None] + lam[None, :])
    ay = airy.ai(eta[:, None] + lam[None, :])
    return sign * (ax * w) @ ay.T


def kernel_airy_ext(p, q, cutoff=40.0, tol=1e-8):
    """Extended Airy kernel at points ``p = (xi_i, tau_i)``, ``q = (xi_j, tau_j)``."""
    p, q = SpaceTimePoint(*p), SpaceTimePoint(*q)
    return float(airy_ext_matrix([p.x], p.t, [q.x], q.t, cutoff, tol)[0, 0])


def kernel_sup_distance(spec, s, t, box, grid_pts):
    """max over a uniform grid on [-box, box]^2 of |K~_N(x,s;y,t) - A(x,s;y,t)|."""
    if box < 0:
        raise DomainError("box must be >= 0")
    if grid_pts < 2:
        raise DomainError("grid_pts must be >= 2")
    g = np.array([0.0]) if box == 0 else np.linspace(-box, box, grid_pts)
    kt = kernel_shifted_matrix(spec, g, s, g, t)
    ka = airy_ext_matrix(g, s, g, t, spec.integral_cutoff, spec.tol)
    return float(np.max(np.abs(kt - ka)))


def airy_kernel_closed_form(x, y):
    """Equal-time Airy kernel via (Ai(x)Ai'(y) - Ai'(x)Ai(y)) / (x - y); diagonal Ai'^2 - x Ai^2."""
    x = np.asarray(x, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[None, :]
    ax, axp = airy.airy_pair(x)
    ay, ayp = airy.airy_pair(y)
    diff = x - y
    close = np.abs(diff) < 1e-7
    with np.errstate(divide="ignore", invalid="ignore"):
        off = (ax * ayp - axp * ay) / diff
    diag = np.broadcast_to(axp ** 2 - x * ax ** 2, off.shape)
    return np.where(close, diag, off)
