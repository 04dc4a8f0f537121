"""Airy function, its zeros, and the Airy eigenfunctions on the half line.

Evaluation scheme for Ai and Ai':

* ``-12 < x < 9``: Taylor expansion about the nearest anchor of a grid with
  spacing 0.5.  Anchor values come from the exact constants at the origin
  (oscillatory side, integrated outwards) and from the asymptotic expansion at
  ``x = 9`` (recessive side, integrated back towards the origin, which is the
  stable direction for Ai).  Taylor coefficients follow from ``y'' = x y``.
* otherwise: the standard asymptotic expansions, whose truncation error is
  below 1e-15 relative once ``(2/3)|x|^{3/2} >= 18``.  The oscillatory side
  switches later because rounding of the large phase costs accuracy.

Zeros ``-omega_k`` are seeded from the asymptotic zero formula and polished by
safeguarded Newton steps.  The table grows lazily up to ``ZERO_CAPACITY``.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError

AI0 = 1.0 / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
AIP0 = -1.0 / (3.0 ** (1.0 / 3.0) * math.gamma(1.0 / 3.0))
AI_SUP = 0.5357 # max of |Ai| on the real line (attained near x = -1.0188)

ZERO_CAPACITY = 2000

_ASYMPTOTIC_CUTOFF = 9.0
_OSCILLATORY_CUTOFF = 12.0
_ANCHOR_STEP = 0.5
_TAYLOR_DEGREE = 30
_N_ASYMPTOTIC = 40


def _asymptotic_coefficients(n):
    u = np.empty(n)
    v = np.empty(n)
    u[0] = v[0] = 1.0
    for k in range(1, n):
        u[k] = u[k - 1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        v[k] = -u[k] * (6 * k + 1) / (6 * k - 1)
    return u, v


_U, _V = _asymptotic_coefficients(_N_ASYMPTOTIC)


def _series(coef, inv, alternate_start=0):
    """Sum ``(-1)^k coef[k] inv^k`` by Horner; ``inv`` is an array."""
    signed = coef * (-1.0) ** np.arange(alternate_start, alternate_start + len(coef))
    acc = np.zeros_like(inv)
    for c in signed[::-1]:
        acc = acc * inv + c
    return acc


def _asymptotic_positive(x):
    zeta = (2.0 / 3.0) * x * np.sqrt(x)
    inv = 1.0 / zeta
    pref = np.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    q = x ** 0.25
    return pref / q * _series(_U, inv), -pref * q * _series(_V, inv)


def _asymptotic_negative(x):
    z = -x
    zeta = (2.0 / 3.0) * z * np.sqrt(z)
    inv2 = 1.0 / (zeta * zeta)
    inv = 1.0 / zeta
    pu = _series(_U[0::2], inv2)
    qu = _series(_U[1::2], inv2) * inv
    pv = _series(_V[0::2], inv2)
    qv = _series(_V[1::2], inv2) * inv
    phase = zeta - 0.25 * math.pi
    c, s = np.cos(phase), np.sin(phase)
    q = z ** 0.25
    k = 1.0 / math.sqrt(math.pi)
    return k / q * (c * pu + s * qu), k * q * (s * pv - c * qv)


def _taylor_coefficients(x0, y0, dy0, degree):
    c = np.zeros(degree + 1)
    c[0], c[1] = y0, dy0
    for n in range(degree - 1):
        prev = c[n - 1] if n >= 1 else 0.0
        c[n + 2] = (x0 * c[n] + prev) / ((n + 1) * (n + 2))
    return c


def _taylor_step(x0, y0, dy0, h, degree=60):
    c = _taylor_coefficients(x0, y0, dy0, degree)
    powers = h ** np.arange(degree + 1)
    y = float(np.dot(c, powers))
    dy = float(np.dot(c[1:] * np.arange(1, degree + 1), powers[:-1]))
    return y, dy


def _build_anchors():
    n_pos = int(round(_ASYMPTOTIC_CUTOFF / _ANCHOR_STEP))
    n_neg = int(round(_OSCILLATORY_CUTOFF / _ANCHOR_STEP))
    xs = _ANCHOR_STEP * np.arange(-n_neg, n_pos + 1)
    vals = np.empty((len(xs), 2))
    mid = n_neg
    vals[mid] = AI0, AIP0
    y, dy = AI0, AIP0
    for i in range(mid - 1, -1, -1):
        y, dy = _taylor_step(xs[i + 1], y, dy, -_ANCHOR_STEP)
        vals[i] = y, dy
    a, ap = _asymptotic_positive(np.array([xs[-1]]))
    y, dy = float(a[0]), float(ap[0])
    vals[-1] = y, dy
    for i in range(len(xs) - 2, mid, -1):
        y, dy = _taylor_step(xs[i + 1], y, dy, -_ANCHOR_STEP)
        vals[i] = y, dy
    coef = np.array([_taylor_coefficients(x0, v[0], v[1], _TAYLOR_DEGREE) for x0, v in zip(xs, vals)])
    dcoef = coef[:, 1:] * np.arange(1, _TAYLOR_DEGREE + 1)
    return xs, coef, dcoef


_ANCHORS, _COEF, _DCOEF = _build_anchors()


def _taylor_eval(x):
    idx = np.rint((x - _ANCHORS[0]) / _ANCHOR_STEP).astype(np.intp)
    np.clip(idx, 0, len(_ANCHORS) - 1, out=idx)
    t = x - _ANCHORS[idx]
    c = _COEF[idx]
    dc = _DCOEF[idx]
    y = c[:, -1].copy()
    for j in range(_TAYLOR_DEGREE - 1, -1, -1):
        y *= t
        y += c[:, j]
    dy = dc[:, -1].copy()
    for j in range(_TAYLOR_DEGREE - 2, -1, -1):
        dy *= t
        dy += dc[:, j]
    return y, dy


def airy_pair(x):
    """Return ``(Ai(x), Ai'(x))`` elementwise for a real array or scalar."""
    arr = np.asarray(x, dtype=float)
    flat = arr.ravel()
    ai = np.empty_like(flat)
    aip = np.empty_like(flat)
    inner = (flat < _ASYMPTOTIC_CUTOFF) & (flat > -_OSCILLATORY_CUTOFF)
    if inner.all():
        ai, aip = _taylor_eval(flat)
    else:
        if inner.any():
            ai[inner], aip[inner] = _taylor_eval(flat[inner])
        pos = flat >= _ASYMPTOTIC_CUTOFF
        if pos.any():
            ai[pos], aip[pos] = _asymptotic_positive(flat[pos])
        neg = flat <= -_OSCILLATORY_CUTOFF
        if neg.any():
            ai[neg], aip[neg] = _asymptotic_negative(flat[neg])
    if arr.ndim == 0:
        return float(ai[0]), float(aip[0])
    return ai.reshape(arr.shape), aip.reshape(arr.shape)


def ai(x):
    """Airy function Ai."""
    return airy_pair(x)[0]


def ai_prime(x):
    """Derivative Ai'."""
    return airy_pair(x)[1]


# -- zeros -----------------------------------------------------------------


def _zero_guess(k):
    t = 3.0 * np.pi * (4.0 * k - 1.0) / 8.0
    t2 = t ** -2
    return t ** (2.0 / 3.0) * (1.0 + t2 * (5.0 / 48.0 + t2 * (-5.0 / 36.0 + t2 * 77125.0 / 82944.0)))


def _newton_zeros(k):
    """Positive numbers omega_k with Ai(-omega_k) = 0, for an index array ``k``."""
    w = _zero_guess(k.astype(float))
    # half the local zero spacing, pi / sqrt(omega) / 2, bounds each step
    cap = 0.5 * np.pi / np.sqrt(w)
    for _ in range(50):
        a, ap = airy_pair(-w)
        step = np.clip(a / ap, -cap, cap)
        w = w + step
        if np.all(np.abs(step) <= 4e-16 * w):
            break
    return w


@dataclass(frozen=True)
class AiryZeroTable:
    """``zeros[k-1] = omega_k`` and ``derivs_at_zero[k-1] = Ai'(-omega_k)``."""

    zeros: np.ndarray
    derivs_at_zero: np.ndarray

    @classmethod
    def build(cls, kmax):
        k = np.arange(1, kmax + 1)
        w = _newton_zeros(k)
        d = ai_prime(-w)
        w.setflags(write=False)
        d.setflags(write=False)
        return cls(w, d)

    def __len__(self):
        return len(self.zeros)

    @property
    def norms(self):
        """Normalizers ``(-1)^{k-1} Ai'(-omega_k)``, all positive."""
        return np.abs(self.derivs_at_zero)


_table = None
_table_lock = threading.Lock()


def zero_table(kmax):
    """Shared zero table holding at least ``kmax`` entries."""
    global _table
    if kmax > ZERO_CAPACITY:
        raise CapacityError(
            f"requested {kmax} Airy zeros; table capacity is {ZERO_CAPACITY}", limit=ZERO_CAPACITY
        )
    tab = _table
    if tab is not None and len(tab) >= kmax:
        return tab
    with _table_lock:
        if _table is None or len(_table) < kmax:
            size = 64
            while size < kmax:
                size *= 2
            _table = AiryZeroTable.build(min(size, ZERO_CAPACITY))
        return _table


def airy_zero(k):
    """The k-th zero magnitude omega_k (so Ai(-omega_k) = 0)."""
    k = int(k)
    if k < 1:
        raise DomainError(f"zero index must be >= 1, got {k}")
    return float(zero_table(k).zeros[k - 1])


# -- eigenfunctions ----------------------------------------------------------


def eigenfunctions(n, x):
    """Matrix ``[phi_k(x_a)]`` with shape ``x.shape + (n,)``.

    ``phi_k(x) = Ai(x - omega_k) / ((-1)^{k-1} Ai'(-omega_k))``.
    """
    tab = zero_table(n)
    x = np.asarray(x, dtype=float)
    vals = ai(x[..., None] - tab.zeros[:n])
    return vals / tab.norms[:n]


def phi(k, x):
    """Orthonormal Airy eigenfunction phi_k on (0, inf)."""
    k = int(k)
    if k < 1:
        raise DomainError(f"eigenfunction index must be >= 1, got {k}")
    tab = zero_table(k)
    return ai(np.asarray(x, dtype=float) - tab.zeros[k - 1]) / tab.norms[k - 1]


def phi_alpha(n, alpha, x):
    """Normalized eigenfunction of ``(1/2) d^2/dx^2 - alpha x`` with Dirichlet condition at 0.

    Eigenvalue ``-omega_n alpha^{2/3} 2^{-1/3}``; alpha = 1/2 gives ``phi``.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    beta = (2.0 * alpha) ** (1.0 / 3.0)
    return math.sqrt(beta) * phi(n, beta * np.asarray(x, dtype=float))


def eigenvalue_alpha(n, alpha):
    return -airy_zero(n) * alpha ** (2.0 / 3.0) * 2.0 ** (-1.0 / 3.0)


def normalization_cutoff(k, margin=12.0):
    """Right end of the quadrature window for phi_k; beyond it |phi_k| < 1e-10."""
    return airy_zero(k) + margin


def table_rows(kmax):
    """Rows ``(k, omega_k, Ai'(-omega_k))`` for the CSV dump."""
    tab = zero_table(kmax)
    return [(k + 1, float(tab.zeros[k]), float(tab.derivs_at_zero[k])) for k in range(kmax)]
