"""Fixed-time marginal of the N-curve ensemble as a projection DPP.

The equal-time kernel ``sum_{k<=N} phi_k(x) phi_k(y)`` is a rank-N
projection, so the sequential (HKPV) algorithm samples it exactly: with an
orthonormal frame ``V`` of the remaining coefficient space, the next point has
density ``|V^T phi(x)|^2 / r``.  That density is at most ``|phi(x)|^2``, so each
point is drawn by rejection from the one-point intensity, which is itself
sampled by inverse CDF of its piecewise-linear interpolant on a refined grid.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import airy
from .errors import DegeneracyError, DomainError
from .kernels import edge_shift
from .rng import as_rng, make_rng

MIN_RESOLUTION = 2 ** 10
CDF_TOL = 1e-6
MAX_RESOLUTION = 2 ** 20
FRAME_TOL = 1e-10


@dataclass(frozen=True)
class FixedTimeConfig:
    n_curves: int
    x_max: float = None
    resolution: int = MIN_RESOLUTION

    def __post_init__(self):
        if self.n_curves < 1:
            raise DomainError(f"n_curves must be >= 1, got {self.n_curves}")
        if self.x_max is None:
            object.__setattr__(self, "x_max", edge_shift(self.n_curves) + 12.0)
        if not self.x_max > 0:
            raise DomainError("x_max must be positive")
        if self.resolution < MIN_RESOLUTION:
            raise DomainError(f"resolution must be >= {MIN_RESOLUTION}")

    @property
    def shift(self):
        return edge_shift(self.n_curves)


def delta_det(n, x):
    """det[Ai(x_{N-j+1} - omega_i)]_{i,j=1..N}."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DomainError(f"expected {n} positions, got shape {x.shape}")
    w = airy.zero_table(n).zeros[:n]
    mat = airy.ai(x[::-1][None, :] - w[:, None])
    return float(np.linalg.det(mat))


def intensity(cfg, x):
    """One-point intensity sum_{k<=N} phi_k(x)^2 on (0, inf); zero for x <= 0."""
    x = np.asarray(x, dtype=float)
    val = np.sum(airy.eigenfunctions(cfg.n_curves, x) ** 2, axis=-1)
    return np.where(x > 0, val, 0.0)


def _linear_cdf(x, dens):
    cells = 0.5 * (dens[1:] + dens[:-1]) * np.diff(x)
    cdf = np.concatenate(([0.0], np.cumsum(cells)))
    return cdf / cdf[-1]


@dataclass(frozen=True)
class IntensityGrid:
    """Piecewise-linear intensity on a uniform grid with its normalized CDF."""

    x: np.ndarray
    dens: np.ndarray
    cdf: np.ndarray
    mass: float

    def sample(self, u):
        """Inverse CDF of the piecewise-linear density at uniforms ``u``."""
        i = np.searchsorted(self.cdf, u, side="right") - 1
        i = np.clip(i, 0, len(self.x) - 2)
        h = self.x[i + 1] - self.x[i]
        p0 = self.dens[i] / self.mass
        p1 = self.dens[i + 1] / self.mass
        need = u - self.cdf[i]
        # solve p0 s + (p1 - p0) s^2 / (2h) = need for s in [0, h]
        slope = (p1 - p0) / h
        disc = np.maximum(p0 * p0 + 2.0 * slope * need, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(slope) > 1e-300, 2.0 * need / (p0 + np.sqrt(disc)), need / p0)
        s = np.clip(np.nan_to_num(s, nan=0.5 * h), 0.0, h)
        return self.x[i] + s


@lru_cache(maxsize=16)
def intensity_grid(cfg):
    """Refine the grid until the interpolated CDF moves by less than ``CDF_TOL``."""
    n = cfg.resolution
    x = np.linspace(0.0, cfg.x_max, n + 1)
    dens = intensity(cfg, x)
    cdf = _linear_cdf(x, dens)
    while True:
        n2 = 2 * n
        x2 = np.linspace(0.0, cfg.x_max, n2 + 1)
        dens2 = np.empty(n2 + 1)
        dens2[0::2] = dens
        dens2[1::2] = intensity(cfg, x2[1::2])
        cdf2 = _linear_cdf(x2, dens2)
        diff = np.max(np.abs(cdf2[0::2] - cdf))
        x, dens, cdf, n = x2, dens2, cdf2, n2
        if diff < CDF_TOL or n >= MAX_RESOLUTION:
            break
    mass = float(np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x)))
    for arr in (x, dens, cdf):
        arr.setflags(write=False)
    return IntensityGrid(x, dens, cdf, mass)


def _householder_drop(frame, v):
    """Orthonormal basis of the complement of ``frame @ v`` inside span(frame)."""
    r = frame.shape[1]
    if r == 1:
        return frame[:, :0]
    w = v / np.linalg.norm(v)
    e = np.zeros(r)
    e[0] = 1.0
    # reflection H with H w = +-e_1; columns 2..r of frame H span the complement
    sgn = 1.0 if w[0] >= 0 else -1.0
    u = w + sgn * e
    u /= np.linalg.norm(u)
    fh = frame - np.outer(frame @ u, 2.0 * u)
    return fh[:, 1:]


def sample_fixed_time(cfg, rng, batch=None):
    """One exact draw of the N positions, sorted decreasing (unshifted coordinates)."""
    rng = as_rng(rng)
    n = cfg.n_curves
    grid = intensity_grid(cfg)
    batch = batch or max(8, n)
    frame = np.eye(n)
    out = np.empty(n)
    pending = np.empty(0)
    pend_phi = np.empty((0, n))
    pend_u = np.empty(0)
    for drawn in range(n):
        while True:
            if len(pending) == 0:
                pending = grid.sample(rng.random(batch))
                pend_phi = airy.eigenfunctions(n, pending)
                pend_u = rng.random(batch)
            proj = pend_phi @ frame
            full = np.einsum("ij,ij->i", pend_phi, pend_phi)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.einsum("ij,ij->i", proj, proj) / full
            hit = np.flatnonzero(pend_u < ratio)
            if len(hit) == 0:
                pending = pending[:0]
                continue
            j = hit[0]
            x, v = pending[j], proj[j]
            pending, pend_phi, pend_u = pending[j + 1:], pend_phi[j + 1:], pend_u[j + 1:]
            break
        if np.linalg.norm(v) < FRAME_TOL:
            raise DegeneracyError(f"residual frame norm {np.linalg.norm(v):.2e} after {drawn} points")
        out[drawn] = x
        frame = _householder_drop(frame, v)
    out.sort()
    out = out[::-1].copy()
    if n > 1 and np.min(-np.diff(out)) <= 1e-12:
        raise DegeneracyError("two sampled positions coincide within 1e-12")
    return out


def sample_many(cfg, n_samples, seed, start=0):
    """Replica r (r = start, start+1, ...) uses its own stream keyed by (seed, r)."""
    return np.array([sample_fixed_time(cfg, make_rng(seed, 1, r)) for r in range(start, start + n_samples)])


def first_moment_phi1():
    """int_0^inf x phi_1(x)^2 dx by Gauss-Legendre."""
    from .quadrature import integrate

    return integrate(lambda x: x * airy.phi(1, x) ** 2, 0.0, airy.normalization_cutoff(1), panels=32)


def top_point_fraction_below(samples, s, shift):
    """Empirical P(max - shift <= s) with its standard error."""
    hits = (samples[:, 0] - shift) <= s
    p = float(np.mean(hits))
    return p, math.sqrt(max(p * (1 - p), 1e-300) / len(samples))
