"""Brownian bridges, avoiding ensembles with area tilts, and their transforms.

Continuous laws live on uniform time grids.  Avoidance is checked at grid
nodes, areas use the trapezoid rule, and exact (grid-level) samples of the
tilted avoiding law come from rejection: propose independent bridges, keep the
ordered ones with probability ``exp(-sum_i A_i * area(curve_i - floor))``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, RejectionBudgetError
from .rng import as_rng

DEFAULT_INTERVALS = 256
DEFAULT_MAX_ATTEMPTS = 10 ** 7
_BATCH_CELLS = 4_000_000


def uniform_grid(a, b, n_intervals=DEFAULT_INTERVALS):
    if not a < b:
        raise DomainError(f"need a < b, got [{a}, {b}]")
    if n_intervals < 1:
        raise DomainError("a grid needs at least one interval")
    t = np.linspace(a, b, n_intervals + 1)
    t[0], t[-1] = a, b
    return t


@dataclass(frozen=True)
class TiltVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or np.any(~np.isfinite(v)) or np.any(v < 0):
            raise DomainError("tilt coefficients must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, k, value):
        return cls(np.full(k, float(value)))

    @classmethod
    def zeros(cls, k):
        return cls(np.zeros(k))

    def __len__(self):
        return len(self.values)

    @property
    def active(self):
        return bool(np.any(self.values > 0))

    def scaled(self, factor):
        return TiltVector(self.values * factor)


@dataclass
class LineEnsemble:
    """Curves ``values[i]`` (index ``first_index + i``) on the grid ``times``."""

    times: np.ndarray
    values: np.ndarray
    first_index: int = 1
    non_intersecting: bool = False
    tilts: TiltVector = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.times.ndim != 1 or len(self.times) < 2:
            raise DomainError("time grid needs at least two nodes")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("time grid must be strictly increasing")
        if self.values.shape[1] != len(self.times):
            raise DomainError(f"values shape {self.values.shape} does not match {len(self.times)} nodes")
        if self.non_intersecting and self.values.shape[0] > 1:
            if np.any(np.diff(self.values, axis=0) >= 0):
                raise DomainError("ensemble flagged non-intersecting but curves touch or cross")

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def a(self):
        return float(self.times[0])

    @property
    def b(self):
        return float(self.times[-1])

    @property
    def indices(self):
        return range(self.first_index, self.first_index + self.k)

    def curve(self, i):
        return self.values[i - self.first_index]


def _boundary_curve(spec, grid):
    """Evaluate a ceiling/floor description (+-inf, constant, callable, or grid array) on grid."""
    if callable(spec):
        return np.asarray(spec(grid), dtype=float) * np.ones_like(grid)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(len(grid), float(arr))
    if arr.shape != grid.shape:
        raise DomainError(f"boundary array has shape {arr.shape}, grid has {grid.shape}")
    return arr


def _map_boundary(spec, fn_values, fn_time):
    """Transform a boundary description: values v at new time s -> fn_values(v, s), read at old time fn_time(s)."""
    if callable(spec):
        return lambda s: fn_values(np.asarray(spec(fn_time(s)), dtype=float) * np.ones_like(s), s)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0 and not math.isfinite(arr):
        return float(arr)
    return _MappedArray(arr, fn_values)


class _MappedArray:
    """A grid array or constant boundary with a value map applied on evaluation."""

    def __init__(self, base, fn):
        self.base, self.fn = base, fn

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        base = self.base if self.base.ndim else np.full(s.shape, float(self.base))
        return self.fn(base, s)


@dataclass(frozen=True)
class BoundaryData:
    """Interval [a,b], entrance/exit vectors, ceiling f and floor g."""

    a: float
    b: float
    x: np.ndarray
    y: np.ndarray
    f: object = math.inf
    g: object = -math.inf

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not self.a < self.b:
            raise DomainError(f"need a < b, got [{self.a}, {self.b}]")
        if x.shape != y.shape or x.ndim != 1:
            raise DomainError("x and y must be vectors of equal length")
        if np.any(np.diff(x) >= 0) or np.any(np.diff(y) >= 0):
            raise DomainError("x and y must be strictly decreasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def k(self):
        return len(self.x)

    def ceiling(self, grid):
        return _boundary_curve(self.f, grid)

    def floor(self, grid):
        return _boundary_curve(self.g, grid)

    def floor_is_finite(self, grid):
        return bool(np.all(np.isfinite(self.floor(grid))))

    def validate(self, grid):
        if grid[0] != self.a or grid[-1] != self.b:
            raise DomainError("grid must start at a and end at b")
        f, g = self.ceiling(grid), self.floor(grid)
        if not (f[0] > self.x[0] and f[-1] > self.y[0]):
            raise DomainError("ceiling must lie above the top entrance and exit points")
        if not (g[0] < self.x[-1] and g[-1] < self.y[-1]):
            raise DomainError("floor must lie below the bottom entrance and exit points")
        if np.any(f <= g):
            raise DomainError("ceiling must stay above floor at every node")


def brownian_bridges(grid, x, y, rng, size=None):
    """Independent unit-diffusion bridges from x to y on grid (exact on the nodes).

    ``x`` and ``y`` broadcast against each other; with ``size`` given the result
    has shape ``(size,) + x.shape + (len(grid),)``.
    """
    rng = as_rng(rng)
    grid = np.asarray(grid, dtype=float)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    shape = x.shape if size is None else (size,) + x.shape
    x = np.broadcast_to(x, shape)
    y = np.broadcast_to(y, shape)
    dt = np.diff(grid)
    steps = rng.standard_normal(shape + (len(dt),)) * np.sqrt(dt)
    walk = np.concatenate((np.zeros(shape + (1,)), np.cumsum(steps, axis=-1)), axis=-1)
    frac = (grid - grid[0]) / (grid[-1] - grid[0])
    out = walk - frac * walk[..., -1:] + x[..., None] + frac * (y - x)[..., None]
    out[..., 0] = x
    out[..., -1] = y
    return out


def sample_brownian_bridge(a, b, x, y, grid, rng):
    grid = np.asarray(grid, dtype=float)
    if not a < b:
        raise DomainError("need a < b")
    if grid[0] != a or grid[-1] != b:
        raise DomainError("grid must span [a, b]")
    return brownian_bridges(grid, float(x), float(y), rng)


def trapezoid_area(values, grid):
    """Trapezoid integral along the last axis."""
    dt = np.diff(grid)
    return np.sum(0.5 * (values[..., 1:] + values[..., :-1]) * dt, axis=-1)


def tilt_weight(e, g, tilts):
    """exp(-sum_i A_i * trapezoid-area(e_i - g)) for a LineEnsemble ``e``."""
    tilts = tilts if isinstance(tilts, TiltVector) else TiltVector(tilts)
    if len(tilts) != e.k:
        raise DomainError("tilt vector length must equal the number of curves")
    floor = _boundary_curve(g, e.times)
    if not np.all(np.isfinite(floor)):
        raise DomainError("tilt weight needs a finite floor")
    gap = e.values - floor
    if np.any(gap < 0):
        raise DomainError("curve below the floor: weight would exceed 1")
    return float(np.exp(-np.dot(tilts.values, trapezoid_area(gap, e.times))))


@dataclass
class RejectionStats:
    attempts: int = 0
    accepted: int = 0
    ties: int = 0

    @property
    def acceptance_rate(self):
        return self.accepted / self.attempts if self.attempts else 0.0

    def as_dict(self):
        return {"attempts": self.attempts, "accepted": self.accepted, "ties": self.ties,
                "acceptance_rate": self.acceptance_rate}


def _admissible(paths, ceiling, floor):
    """Strict ordering mask and tie mask for proposals of shape (..., k, n)."""
    top = paths[..., 0, :]
    bot = paths[..., -1, :]
    ok = np.all(top < ceiling, axis=-1) & np.all(bot > floor, axis=-1)
    tie = np.any(top == ceiling, axis=-1) | np.any(bot == floor, axis=-1)
    if paths.shape[-2] > 1:
        gaps = paths[..., :-1, :] - paths[..., 1:, :]
        # endpoints are given data; only interior nodes can create ties
        inner = gaps[..., 1:-1]
        ok &= np.all(inner > 0, axis=(-2, -1))
        tie |= np.any(inner == 0, axis=(-2, -1))
    return ok, tie & ~ok


def _weights(paths, floor, tilts, grid):
    if not np.any(tilts > 0):
        return np.ones(paths.shape[:-2])
    area = trapezoid_area(paths - floor, grid)
    return np.exp(-np.sum(area * tilts, axis=-1))


def _batch_size(stats, needed, cells):
    rate = stats.acceptance_rate if stats.accepted else 1.0 / max(stats.attempts, 1)
    want = int(math.ceil(1.25 * needed / max(rate, 1e-7))) + 16
    cap = max(16, _BATCH_CELLS // max(cells, 1))
    return max(16, min(want, cap))


def sample_avoiding_tilted_many(bd, tilts, grid, rng, n_samples, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """``n_samples`` exact draws of the tilted avoiding law; returns ``(values, stats)``.

    ``values`` has shape ``(n_samples, k, len(grid))``.  ``max_attempts``
    bounds the proposals spent on any single accepted sample.
    """
    rng = as_rng(rng)
    grid = np.asarray(grid, dtype=float)
    tilts = tilts if isinstance(tilts, TiltVector) else TiltVector(tilts)
    if len(tilts) != bd.k:
        raise DomainError("tilt vector length must equal the number of curves")
    bd.validate(grid)
    ceiling, floor = bd.ceiling(grid), bd.floor(grid)
    if tilts.active and not np.all(np.isfinite(floor)):
        raise DomainError("area tilts require a finite floor g")
    stats = RejectionStats()
    out = np.empty((n_samples, bd.k, len(grid)))
    got = 0
    since = 0
    cells = bd.k * len(grid)
    while got < n_samples:
        batch = _batch_size(stats, n_samples - got, cells)
        paths = brownian_bridges(grid, bd.x, bd.y, rng, size=batch)
        u = rng.random(batch)
        ok, tie = _admissible(paths, ceiling, floor)
        keep = ok.copy()
        if np.any(ok):
            keep[ok] = u[ok] < _weights(paths[ok], floor, tilts.values, grid)
        idx = np.flatnonzero(keep)
        take = idx[: n_samples - got]
        used = int(take[-1]) + 1 if len(take) and got + len(take) == n_samples else batch
        stats.attempts += used
        stats.ties += int(np.count_nonzero(tie[:used]))
        stats.accepted += len(take)
        out[got:got + len(take)] = paths[take]
        got += len(take)
        # proposals since the last acceptance inside this batch
        since = (used - 1 - int(take[-1])) if len(take) else since + used
        if since >= max_attempts:
            raise RejectionBudgetError(
                f"rejection budget of {max_attempts} proposals exhausted "
                f"(acceptance rate {stats.acceptance_rate:.3g})",
                attempts=stats.attempts, accepted=stats.accepted,
            )
    return out, stats


def sample_avoiding_tilted(bd, tilts, grid, rng, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """One exact draw of the tilted avoiding law as a LineEnsemble with telemetry in ``info``."""
    tilts = tilts if isinstance(tilts, TiltVector) else TiltVector(tilts)
    vals, stats = sample_avoiding_tilted_many(bd, tilts, grid, rng, 1, max_attempts)
    return LineEnsemble(np.asarray(grid, dtype=float), vals[0], non_intersecting=True, tilts=tilts,
                        info=stats.as_dict())


# -- transforms ----------------------------------------------------------------


def parabola(A, c, d):
    return lambda s: 0.5 * A * np.asarray(s, dtype=float) ** 2 + c * np.asarray(s, dtype=float) + d


def parabolic_shift(e, A, c, d, direction="add"):
    """Add or subtract h(s) = (A/2) s^2 + c s + d to every curve."""
    if direction not in ("add", "subtract"):
        raise DomainError("direction must be 'add' or 'subtract'")
    h = parabola(A, c, d)(e.times)
    vals = e.values + h if direction == "add" else e.values - h
    return replace(e, values=vals, info=dict(e.info))


def shift_boundary(bd, A, c, d):
    """Boundary data after adding h: u = x + h(a), v = y + h(b), f + h, g + h."""
    h = parabola(A, c, d)
    return BoundaryData(
        bd.a, bd.b, bd.x + h(bd.a), bd.y + h(bd.b),
        _map_boundary(bd.f, lambda v, s: v + h(s), lambda s: s),
        _map_boundary(bd.g, lambda v, s: v + h(s), lambda s: s),
    )


def affine_transform(e, lam, r=0.0, u=0.0):
    """(F f)(s) = f(lam^2 (s - u)) / lam + r; grid -> grid / lam^2 + u; tilts -> lam^3 tilts."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    times = e.times / lam ** 2 + u
    vals = e.values / lam + r
    tilts = e.tilts.scaled(lam ** 3) if e.tilts is not None else None
    return LineEnsemble(times, vals, e.first_index, e.non_intersecting, tilts, dict(e.info))


def affine_boundary(bd, lam, r=0.0, u=0.0):
    """Boundary data seen through F_{lam,r,u}."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    back = lambda s: lam ** 2 * (np.asarray(s, dtype=float) - u)
    fwd = lambda v, s: v / lam + r
    return BoundaryData(
        bd.a / lam ** 2 + u, bd.b / lam ** 2 + u, bd.x / lam + r, bd.y / lam + r,
        _map_boundary(bd.f, fwd, back), _map_boundary(bd.g, fwd, back),
    )


# -- window resampling -----------------------------------------------------------


def resample_window(values, grid, curves, nodes, tilts, f, g, rng, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """Heat-bath move on a batch of ensembles.

    ``values`` has shape ``(S, k, n)``; the block ``curves = (i0, i1)`` (0-based,
    inclusive) on node range ``nodes = (c, d)`` is redrawn from its conditional
    law given everything else, independently for every ensemble in the batch.
    ``f``/``g`` are the outer ceiling and floor specs.  Returns a new array.
    """
    rng = as_rng(rng)
    values = np.array(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    i0, i1 = curves
    c, d = nodes
    S, k, _ = values.shape
    if not (0 <= i0 <= i1 < k and 0 <= c < d < len(grid)):
        raise DomainError("window outside the ensemble")
    tilts = np.asarray(tilts.values if isinstance(tilts, TiltVector) else tilts, dtype=float)[i0:i1 + 1]
    sub = grid[c:d + 1]
    top = values[:, i0 - 1, c:d + 1] if i0 > 0 else np.broadcast_to(_boundary_curve(f, grid)[c:d + 1], (S, d - c + 1))
    bot = values[:, i1 + 1, c:d + 1] if i1 < k - 1 else np.broadcast_to(_boundary_curve(g, grid)[c:d + 1], (S, d - c + 1))
    if np.any(tilts > 0) and not np.all(np.isfinite(bot)):
        raise DomainError("area tilts require a finite floor g")
    xs = values[:, i0:i1 + 1, c]
    ys = values[:, i0:i1 + 1, d]
    pending = np.arange(S)
    since = 0
    while len(pending):
        reps = max(1, min(64, _BATCH_CELLS // max(1, len(pending) * (i1 - i0 + 1) * len(sub))))
        prop = brownian_bridges(sub, xs[pending], ys[pending], rng, size=reps)  # (reps, P, m, n)
        uni = rng.random((reps, len(pending)))
        ok, _ = _admissible(prop, top[pending], bot[pending])
        w = np.ones_like(uni)
        if np.any(tilts > 0):
            area = trapezoid_area(prop - bot[pending][None, :, None, :], sub)
            w = np.exp(-np.sum(area * tilts, axis=-1))
        acc = ok & (uni < w)
        hit = acc.any(axis=0)
        first = np.argmax(acc, axis=0)
        done = pending[hit]
        values[done, i0:i1 + 1, c:d + 1] = prop[first[hit], np.flatnonzero(hit)]
        pending = pending[~hit]
        since = since + reps if len(pending) else 0
        if since >= max_attempts:
            raise RejectionBudgetError(
                f"window resampling exhausted {max_attempts} proposals for {len(pending)} ensembles",
                attempts=since, accepted=S - len(pending),
            )
    return values
