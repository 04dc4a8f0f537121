"""Gauss-Legendre rules on intervals, single and composite."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=64)
def _reference(m):
    t, w = leggauss(m)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights mapped to ``[lo, hi]``."""

    order: int
    lo: float
    hi: float
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, order, lo, hi):
        if order < 4:
            raise ValueError(f"quadrature order must be >= 4, got {order}")
        if not hi > lo:
            raise ValueError(f"degenerate interval [{lo}, {hi}]")
        t, w = _reference(int(order))
        half = 0.5 * (hi - lo)
        return cls(int(order), float(lo), float(hi), lo + half * (t + 1.0), half * w)

    def integrate(self, values):
        return np.tensordot(values, self.weights, axes=([-1], [0]))


def composite_gauss_legendre(lo, hi, panels, order=20):
    """Nodes/weights of ``panels`` equal Gauss-Legendre panels on ``[lo, hi]``."""
    t, w = _reference(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate(f, lo, hi, panels=64, order=20):
    x, w = composite_gauss_legendre(lo, hi, panels, order)
    return float(np.dot(f(x), w))
