"""Gap probabilities det(I - K) on unions of intervals via Nystrom discretization.

The operator restricted to the domain is discretized with Gauss-Legendre nodes
on every interval and the symmetrized matrix ``W^{1/2} K W^{1/2}``; blocks
couple different times through the kernel.  Each value is computed at two
orders ``m`` and ``2m`` and only accepted when they agree.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import AccuracyError, DomainError
from .quadrature import QuadratureRule

log = logging.getLogger(__name__)

DET_SLACK = 1e-8
TRUNCATION_SPAN = 16.0
TRUNCATION_FLOOR = 8.0

# kernel(x, tau_x, y, tau_y) -> matrix [K(x_a, tau_x; y_b, tau_y)]
KernelRule = Callable[[np.ndarray, float, np.ndarray, float], np.ndarray]


def truncation_point(s):
    """Right end used in place of +inf for an interval starting at s."""
    return max(s + TRUNCATION_SPAN, TRUNCATION_FLOOR)


@dataclass(frozen=True)
class GapDomain:
    """Per-time intervals ``(tau, lo, hi)``; ``hi = inf`` is truncated on use."""

    pieces: tuple = ()

    def __post_init__(self):
        pieces = tuple((float(t), float(lo), float(hi)) for t, lo, hi in self.pieces)
        times = [p[0] for p in pieces]
        if len(set(times)) != len(times):
            raise DomainError("GapDomain times must be distinct")
        for t, lo, hi in pieces:
            if not (math.isfinite(t) and math.isfinite(lo)):
                raise DomainError("time and lower end must be finite")
            if not lo < hi:
                raise DomainError(f"degenerate interval [{lo}, {hi}]")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def single(cls, s, tau=0.0, hi=math.inf):
        return cls(((tau, s, hi),))

    def truncated(self):
        return [(t, lo, hi if math.isfinite(hi) else truncation_point(lo)) for t, lo, hi in self.pieces]


@dataclass
class GapResult:
    value: float
    raw: float
    value_low: float
    value_high: float
    orders: tuple
    clamped: bool = False
    notes: list = field(default_factory=list)

    @property
    def delta(self):
        return abs(self.value_high - self.value_low)

    def __float__(self):
        return self.value


def airy_rule(cutoff=40.0, tol=1e-8) -> KernelRule:
    def rule(x, tx, y, ty):
        return kernels.airy_ext_matrix(x, tx, y, ty, cutoff, tol)
    return rule


def shifted_rule(spec) -> KernelRule:
    def rule(x, tx, y, ty):
        return kernels.kernel_shifted_matrix(spec, x, tx, y, ty)
    return rule


def _order_for(lo, hi, m):
    # Airy-type kernels oscillate on the negative axis with phase (2/3)|x|^{3/2};
    # add nodes in proportion to the number of oscillations, and to the length.
    osc = (2.0 / 3.0) * max(0.0, -lo) ** 1.5 / math.pi
    return max(m, int(math.ceil(m * (hi - lo) / TRUNCATION_SPAN)), m + int(math.ceil(6.0 * osc)))


def fredholm_det(kernel: KernelRule, pieces: Sequence, m: int):
    """Raw det(I - W^{1/2} K W^{1/2}) at base order m."""
    if not pieces:
        return 1.0
    rules = [QuadratureRule.gauss_legendre(_order_for(lo, hi, m), lo, hi) for _, lo, hi in pieces]
    sizes = [len(r.nodes) for r in rules]
    offs = np.concatenate(([0], np.cumsum(sizes)))
    mat = np.empty((offs[-1], offs[-1]))
    for a, (ta, _, _) in enumerate(pieces):
        ra = rules[a]
        wa = np.sqrt(ra.weights)
        for b, (tb, _, _) in enumerate(pieces):
            rb = rules[b]
            blk = kernel(ra.nodes, ta, rb.nodes, tb)
            mat[offs[a]:offs[a + 1], offs[b]:offs[b + 1]] = wa[:, None] * blk * np.sqrt(rb.weights)[None, :]
    return float(np.linalg.det(np.eye(offs[-1]) - mat))


def gap_probability(kernel: KernelRule, domain: GapDomain, order=40, tol=1e-6):
    """Probability of no points in ``domain`` for the determinantal process of ``kernel``."""
    if order < 4:
        raise DomainError("quadrature order must be >= 4")
    pieces = domain.truncated()
    if not pieces:
        return GapResult(1.0, 1.0, 1.0, 1.0, (order, 2 * order))
    low = fredholm_det(kernel, pieces, order)
    high = fredholm_det(kernel, pieces, 2 * order)
    if not abs(high - low) <= tol:
        raise AccuracyError(
            f"Nystrom determinant not converged: m={order} gives {low!r}, m={2 * order} gives {high!r}",
            values=(low, high),
        )
    notes = []
    if not -DET_SLACK <= high <= 1.0 + DET_SLACK:
        notes.append(f"raw determinant {high!r} outside [-{DET_SLACK}, 1+{DET_SLACK}]")
        log.warning(notes[-1])
    value = min(1.0, max(0.0, high))
    if value != high:
        log.info("gap probability clamped from raw value %r", high)
    return GapResult(value, high, low, high, (order, 2 * order), value != high, notes)


def tracy_widom_cdf(s, order=40, tol=1e-6, detail=False):
    """F2(s): Airy-kernel gap probability on [s, inf)."""
    if not math.isfinite(s):
        raise DomainError("s must be finite")
    res = gap_probability(airy_rule(), GapDomain.single(s), order, tol)
    return res if detail else res.value


def top_curve_cdf_finite(spec, tau, s, order=40, tol=1e-6, detail=False):
    """P(top curve of the shifted N-curve ensemble at time tau <= s)."""
    if not s > -spec.shift:
        raise DomainError(f"s must exceed -c1 N^(2/3) = {-spec.shift:.6g}")
    res = gap_probability(shifted_rule(spec), GapDomain.single(s, tau), order, tol)
    return res if detail else res.value


def two_time_gap(s, t, order=40, tol=1e-6):
    """Airy gap probability on [s, inf) at times 0 and t."""
    return gap_probability(airy_rule(), GapDomain(((0.0, s, math.inf), (t, s, math.inf))), order, tol).value
