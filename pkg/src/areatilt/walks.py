"""Tilted non-intersecting random-walk bridges and the window Gibbs chain.

Walk bridges are sampled exactly by a backward dynamic program over the
n-step transition table: from height z with m steps left the next step s is
taken with probability ``p(s) q_{m-1}(y - z - s) / q_m(y - z)``.  Avoidance and
the area tilt are then imposed by rejection.  The hot loops are compiled with
numba and draw from the same Philox ``Generator`` objects used elsewhere.
"""

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .bridges import LineEnsemble, affine_transform
from .errors import AlignmentError, CapacityError, DomainError, InfeasibleError, RejectionBudgetError
from .kernels import edge_shift
from .rng import as_rng

STEPS = np.arange(-2, 3)
INF_HEIGHT = np.int64(1) << 62
PMF_CAPACITY = 100_000
BRIDGE_TABLE_CAPACITY = 4096
DEFAULT_WIDTH = 64
DEFAULT_MAX_ATTEMPTS = 10 ** 6
# proposals a chain window may spend before it is halved; width-2 windows get the full budget
WINDOW_ATTEMPTS = 20_000


@dataclass(frozen=True)
class StepDistribution:
    """Increment law on {-2, ..., 2}, stored exactly as fractions."""

    pmf: tuple

    def __post_init__(self):
        if len(self.pmf) != 5:
            raise DomainError("step pmf needs five entries for -2..2")
        p = tuple(Fraction(v) for v in self.pmf)
        if any(v <= 0 for v in p):
            raise DomainError("step pmf must give positive mass to every point of {0, +-1, +-2}")
        if sum(p) != 1:
            raise DomainError("step pmf must sum to 1")
        if sum(s * v for s, v in zip(range(-2, 3), p)) != 0:
            raise DomainError("step pmf must have mean 0")
        if sum(s * s * v for s, v in zip(range(-2, 3), p)) != 1:
            raise DomainError("step pmf must have variance 1")
        object.__setattr__(self, "pmf", p)

    @property
    def probs(self):
        return np.array([float(v) for v in self.pmf])

    @property
    def log_probs(self):
        return np.log(self.probs)

    def mean(self):
        return sum(s * v for s, v in zip(range(-2, 3), self.pmf))

    def variance(self):
        return sum(s * s * v for s, v in zip(range(-2, 3), self.pmf)) - self.mean() ** 2

    def as_dict(self):
        return {str(s): str(v) for s, v in zip(range(-2, 3), self.pmf)}


def default_step_distribution():
    """p(0) = 3/8, p(+-1) = 1/4, p(+-2) = 1/16."""
    return StepDistribution((Fraction(1, 16), Fraction(1, 4), Fraction(3, 8), Fraction(1, 4), Fraction(1, 16)))


def walk_pmf_table(n, step=None):
    """P(S_n = z) for z = -2n..2n (index z + 2n), by repeated convolution."""
    step = step or default_step_distribution()
    if n < 0:
        raise DomainError("n must be >= 0")
    if n > PMF_CAPACITY:
        raise CapacityError(f"walk_pmf_table limited to n <= {PMF_CAPACITY}", limit=PMF_CAPACITY)
    p = step.probs
    row = np.ones(1)
    for _ in range(n):
        row = np.convolve(row, p)
    return row


class _LogBridgeTables:
    """Cached ``log q_m(z)`` tables, rows m = 0..L, columns z + 2L; grows by doubling."""

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()

    def get(self, step, length):
        if length > BRIDGE_TABLE_CAPACITY:
            raise CapacityError(
                f"bridge table limited to {BRIDGE_TABLE_CAPACITY} steps, requested {length}",
                limit=BRIDGE_TABLE_CAPACITY,
            )
        tab = self._cache.get(step.pmf)
        if tab is not None and tab.shape[0] - 1 >= length:
            return tab
        with self._lock:
            size = 64
            while size < length:
                size *= 2
            size = min(size, BRIDGE_TABLE_CAPACITY)
            tab = _build_log_table(step.log_probs, size)
            tab.setflags(write=False)
            self._cache[step.pmf] = tab
            return tab


def _build_log_table(logp, size):
    off = 2 * size
    tab = np.full((size + 1, 4 * size + 1), -np.inf)
    tab[0, off] = 0.0
    for m in range(1, size + 1):
        prev = tab[m - 1]
        acc = np.full(4 * size + 1, -np.inf)
        for s, lp in zip(range(-2, 3), logp):
            shifted = np.full(4 * size + 1, -np.inf)
            if s >= 0:
                shifted[s:] = prev[:len(prev) - s]
            else:
                shifted[:s] = prev[-s:]
            acc = np.logaddexp(acc, shifted + lp)
        tab[m] = acc
    return tab


_TABLES = _LogBridgeTables()


def log_bridge_table(step, length):
    return _TABLES.get(step, length)


# -- compiled kernels -------------------------------------------------------------


@numba.njit(cache=True)
def _bridge_into(buf, x, y, n, lq, off, logp, rng):
    buf[0] = x
    z = x
    for j in range(n - 1):
        m = n - j
        base = lq[m, y - z + off]
        u = rng.random()
        acc = 0.0
        chosen = 0
        found = False
        for k in range(5):
            s = k - 2
            t = y - z - s
            if t > 2 * (m - 1) or t < -2 * (m - 1):
                continue
            chosen = s
            acc += math.exp(logp[k] + lq[m - 1, t + off] - base)
            if u < acc:
                found = True
                break
        # rounding can leave u >= acc; 'chosen' then holds the last feasible step
        z += chosen
        buf[j + 1] = z
    buf[n] = y


@numba.njit(cache=True)
def _sample_block(state, i0, i1, c, d, f_row, g_row, lam, lq, off, logp, rng, max_attempts, buf, weight_from):
    """Rejection-sample curves i0..i1 on columns c..d in place; returns attempts (<0 on failure)."""
    n = d - c
    m = i1 - i0 + 1
    K = state.shape[0]
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        ok = True
        for r in range(m):
            i = i0 + r
            _bridge_into(buf[r], state[i, c], state[i, d], n, lq, off, logp, rng)
            for j in range(1, n):
                if r > 0:
                    top = buf[r - 1, j]
                elif i > 0:
                    top = state[i - 1, c + j]
                else:
                    top = f_row[c + j]
                if buf[r, j] >= top:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        for j in range(1, n):
            bot = state[i1 + 1, c + j] if i1 + 1 < K else g_row[c + j]
            if buf[m - 1, j] <= bot:
                ok = False
                break
        if not ok:
            continue
        if lam > 0.0:
            # area above the lowest height each curve can reach; a constant given the boundary,
            # so it cancels in the normalized law and keeps the weight in (0, 1]
            area = 0.0
            for j in range(weight_from, n):
                bot = state[i1 + 1, c + j] if i1 + 1 < K else g_row[c + j]
                for r in range(m):
                    lb = max(bot + (m - r), state[i0 + r, c] - 2 * j, state[i0 + r, d] - 2 * (n - j))
                    area += buf[r, j] - lb
            if rng.random() >= math.exp(-lam * area):
                continue
        for r in range(m):
            for j in range(1, n):
                state[i0 + r, c + j] = buf[r, j]
        return attempts
    return -attempts


@numba.njit(cache=True)
def _heat_bath(state, i0, i1, c, d, f_row, g_row, lam, lq, off, logp, rng, max_attempts, buf, stats):
    """Window move with halving on budget failure; returns False if a width-2 window fails."""
    stack = np.empty((64, 2), dtype=np.int64)
    top = 0
    stack[0, 0] = c
    stack[0, 1] = d
    top = 1
    while top > 0:
        top -= 1
        lo = stack[top, 0]
        hi = stack[top, 1]
        if hi - lo < 2:
            continue
        # halving depends only on values outside [lo, hi], so the mixture of moves keeps the target law
        budget = max_attempts if hi - lo == 2 else min(max_attempts, WINDOW_ATTEMPTS)
        got = _sample_block(state, i0, i1, lo, hi, f_row, g_row, lam, lq, off, logp, rng, budget, buf, 1)
        if got > 0:
            stats[0] += got
            stats[1] += 1
            continue
        stats[0] -= got
        if hi - lo == 2:
            stats[3] += 1
            return False
        stats[2] += 1
        mid = (lo + hi) // 2
        stack[top, 0] = mid
        stack[top, 1] = hi
        stack[top + 1, 0] = lo
        stack[top + 1, 1] = mid
        top += 2
    return True


@numba.njit(cache=True)
def _sweep(state, f_row, g_row, lam, lq, off, logp, rng, width, max_attempts, buf, stats):
    K = state.shape[0]
    T = state.shape[1]
    shift = rng.integers(0, width)
    parity = rng.integers(0, 2) if K > 1 else 0
    c = shift - width
    while c < T - 1:
        lo = max(c, 0)
        hi = min(c + width, T - 1)
        if hi - lo >= 2:
            i = 0
            while i < K:
                # blocks of two curves, offset by the random parity
                i1 = i if (parity == 1 and i == 0) else min(i + 1, K - 1)
                if not _heat_bath(state, i, i1, lo, hi, f_row, g_row, lam, lq, off, logp, rng, max_attempts, buf, stats):
                    return False
                i = i1 + 1
        c += width
    return True


@numba.njit(cache=True)
def _run_chain(state, f_row, g_row, lam, lq, off, logp, rng, width, max_attempts, n_sweeps, thin, cols, out, stats):
    """Run sweeps; after every ``thin``-th sweep store state[:, cols] into out. Returns sweeps done."""
    buf = np.empty((2, width + 1), dtype=np.int64)
    rec = 0
    for s in range(n_sweeps):
        if not _sweep(state, f_row, g_row, lam, lq, off, logp, rng, width, max_attempts, buf, stats):
            return -(s + 1)
        if thin > 0 and (s + 1) % thin == 0 and rec < out.shape[0]:
            for i in range(state.shape[0]):
                for j in range(cols.shape[0]):
                    out[rec, i, j] = state[i, cols[j]]
            rec += 1
    return n_sweeps


# -- public sampling API ------------------------------------------------------------


def _as_row(spec, length, default):
    if spec is None:
        return np.full(length, default, dtype=np.int64)
    arr = np.asarray(spec)
    if arr.ndim == 0:
        v = float(arr)
        if math.isinf(v):
            return np.full(length, INF_HEIGHT if v > 0 else -INF_HEIGHT, dtype=np.int64)
        return np.full(length, int(v), dtype=np.int64)
    if arr.shape != (length,):
        raise DomainError(f"boundary row has shape {arr.shape}, expected ({length},)")
    return np.where(np.isinf(arr.astype(float)), np.sign(arr.astype(float)) * INF_HEIGHT, arr).astype(np.int64)


def sample_walk_bridge(a, b, x, y, step=None, rng=None):
    """Exact walk bridge from (a, x) to (b, y); returns heights at a..b."""
    step = step or default_step_distribution()
    a, b, x, y = int(a), int(b), int(x), int(y)
    if not a < b:
        raise DomainError("need a < b")
    n = b - a
    if abs(y - x) > 2 * n:
        raise InfeasibleError(f"endpoint {y} unreachable from {x} in {n} steps")
    lq = log_bridge_table(step, n)
    buf = np.empty(n + 1, dtype=np.int64)
    _bridge_into(buf, x, y, n, lq, (lq.shape[1] - 1) // 2, step.log_probs, as_rng(rng))
    return buf


@dataclass(frozen=True)
class WalkBoundary:
    """Integer interval [a, b], entrance/exit heights, ceiling f and floor g (>= 0)."""

    a: int
    b: int
    x: tuple
    y: tuple
    f: object = math.inf
    g: object = 0

    def __post_init__(self):
        x = tuple(int(v) for v in np.atleast_1d(self.x))
        y = tuple(int(v) for v in np.atleast_1d(self.y))
        if not self.a < self.b:
            raise DomainError("need a < b")
        if len(x) != len(y):
            raise DomainError("x and y must have equal length")
        if any(p <= q for p, q in zip(x, x[1:])) or any(p <= q for p, q in zip(y, y[1:])):
            raise DomainError("x and y must be strictly decreasing")
        if any(abs(p - q) > 2 * (self.b - self.a) for p, q in zip(x, y)):
            raise InfeasibleError("|x_i - y_i| exceeds 2 (b - a)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def k(self):
        return len(self.x)

    @property
    def length(self):
        return self.b - self.a

    def rows(self):
        n = self.length + 1
        f = _as_row(self.f, n, math.inf)
        g = _as_row(self.g, n, 0)
        if np.any(g < 0):
            raise DomainError("walk floor must be >= 0")
        if np.any(f <= g):
            raise DomainError("ceiling must exceed floor")
        if not (f[0] > self.x[0] and f[-1] > self.y[0] and g[0] < self.x[-1] and g[-1] < self.y[-1]):
            raise InfeasibleError("entrance/exit heights violate ceiling or floor")
        return f, g


@dataclass
class WalkEnsemble:
    a: int
    heights: np.ndarray
    first_index: int = 1
    info: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.arange(self.a, self.a + self.heights.shape[1])

    def is_conditioned(self, f=None, g=None):
        h = self.heights
        ok = bool(np.all(np.abs(np.diff(h, axis=1)) <= 2))
        ok &= bool(np.all(h[:-1] > h[1:]))
        if g is not None:
            ok &= bool(np.all(h[-1] > g))
        if f is not None:
            ok &= bool(np.all(h[0] < f))
        return ok

    def to_line_ensemble(self):
        return LineEnsemble(self.times.astype(float), self.heights.astype(float), self.first_index, True)


def sample_tilted_avoiding_walks(bd, lam, step=None, rng=None, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """Exact draw of the avoiding, area-tilted walk law by rejection.

    Acceptance weight ``exp(-lam * sum_i sum_{j=a}^{b-1} (X_i(j) - g(j)))``.
    """
    step = step or default_step_distribution()
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    rng = as_rng(rng)
    f, g = bd.rows()
    n = bd.length
    lq = log_bridge_table(step, n)
    state = np.zeros((bd.k, n + 1), dtype=np.int64)
    state[:, 0] = bd.x
    state[:, -1] = bd.y
    buf = np.empty((bd.k, n + 1), dtype=np.int64)
    got = _sample_block(state, 0, bd.k - 1, 0, n, f, g, float(lam), lq, (lq.shape[1] - 1) // 2,
                        step.log_probs, rng, int(max_attempts), buf, 0)
    if got < 0:
        raise RejectionBudgetError(f"no acceptance in {-got} proposals", attempts=-got, accepted=0)
    state[:, 1:-1] = buf[:, 1:-1] if n > 1 else state[:, 1:-1]
    return WalkEnsemble(bd.a, state, info={"attempts": got})


def sample_tilted_avoiding_walks_many(bd, lam, n_samples, step=None, rng=None, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """Array of shape (n_samples, k, b - a + 1) of independent exact draws."""
    rng = as_rng(rng)
    out = np.empty((n_samples, bd.k, bd.length + 1), dtype=np.int64)
    attempts = 0
    for s in range(n_samples):
        w = sample_tilted_avoiding_walks(bd, lam, step, rng, max_attempts)
        out[s] = w.heights
        attempts += w.info["attempts"]
    return out, attempts


# -- the Gibbs chain ----------------------------------------------------------------


def pinning_heights(n_curves, m_param):
    """round(i M^{1/3}) for i = 1..N with upward bumps on collisions, returned top curve first."""
    cube = m_param ** (1.0 / 3.0)
    z = []
    for i in range(1, n_curves + 1):
        v = max(int(round(i * cube)), 1)
        if z and v <= z[-1]:
            v = z[-1] + 1
        z.append(v)
    return np.array(z[::-1], dtype=np.int64)


@dataclass
class McmcState:
    """Chain on curves 1..N over lattice times -M..M (column j is time j - M)."""

    heights: np.ndarray
    lam: float
    m_param: int
    pins: np.ndarray
    step: StepDistribution
    rng: np.random.Generator
    width: int = DEFAULT_WIDTH
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    sweeps: int = 0
    stats: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))

    @classmethod
    def dfs(cls, n_curves, m_param, rng, lam=None, start="pinned", width=DEFAULT_WIDTH,
            step=None, max_attempts=DEFAULT_MAX_ATTEMPTS):
        if n_curves < 1 or m_param < 1:
            raise DomainError("n_curves and m_param must be positive")
        pins = pinning_heights(n_curves, m_param)
        T = 2 * m_param + 1
        heights = np.repeat(pins[:, None], T, axis=1)
        if start == "high":
            # tent raised by up to M^{1/3} * N in the middle, still a valid walk path
            j = np.arange(T)
            bump = np.minimum(j, T - 1 - j) * 2
            bump = np.minimum(bump, int(round(n_curves * m_param ** (1.0 / 3.0))) * 2)
            heights = heights + bump[None, :]
        elif start != "pinned":
            raise DomainError("start must be 'pinned' or 'high'")
        lam = 1.0 / m_param if lam is None else float(lam)
        return cls(heights.astype(np.int64), lam, m_param, pins, step or default_step_distribution(),
                   as_rng(rng), int(width), int(max_attempts))

    @property
    def n_curves(self):
        return self.heights.shape[0]

    def rows(self):
        T = self.heights.shape[1]
        return np.full(T, INF_HEIGHT, dtype=np.int64), np.zeros(T, dtype=np.int64)

    def table(self, length=None):
        lq = log_bridge_table(self.step, length or self.width)
        return lq, (lq.shape[1] - 1) // 2

    def check(self):
        h = self.heights
        return (bool(np.all(h[:-1] > h[1:])) and bool(np.all(h[-1] > 0))
                and bool(np.all(np.abs(np.diff(h, axis=1)) <= 2))
                and bool(np.all(h[:, 0] == self.pins)) and bool(np.all(h[:, -1] == self.pins)))


def _raise_sweep_failure(state):
    raise RejectionBudgetError(
        f"window move failed at width 2 after {state.stats[0]} proposals "
        f"({state.stats[2]} halvings)",
        attempts=int(state.stats[0]), accepted=int(state.stats[1]),
    )


def gibbs_sweep(state, window, rng=None, lam=None):
    """Heat-bath move: redraw curves ``window[0] = (k1', k2')`` (1-based) on lattice
    columns ``window[1] = (c, d)`` from their conditional law.  ``lam`` overrides
    the chain's tilt for this move only (used by negative controls)."""
    (k1, k2), (c, d) = window
    K, T = state.heights.shape
    if not (1 <= k1 <= k2 <= K and 0 <= c < d <= T - 1):
        raise DomainError("window outside the chain's domain")
    rng = as_rng(rng) if rng is not None else state.rng
    lq, off = state.table(d - c)
    f_row, g_row = state.rows()
    buf = np.empty((k2 - k1 + 1, d - c + 1), dtype=np.int64)
    move_lam = state.lam if lam is None else float(lam)
    ok = _heat_bath(state.heights, k1 - 1, k2 - 1, c, d, f_row, g_row, move_lam, lq, off,
                    state.step.log_probs, rng, state.max_attempts, buf, state.stats)
    if not ok:
        _raise_sweep_failure(state)
    return state


def full_sweep(state, n=1):
    """``n`` systematic-scan sweeps of window moves over the whole chain."""
    lq, off = state.table()
    f_row, g_row = state.rows()
    empty = np.empty((0, state.n_curves, 0), dtype=np.int64)
    done = _run_chain(state.heights, f_row, g_row, state.lam, lq, off, state.step.log_probs, state.rng,
                      state.width, state.max_attempts, n, 0, np.empty(0, dtype=np.int64), empty, state.stats)
    state.sweeps += abs(done) if done > 0 else -done - 1
    if done < 0:
        _raise_sweep_failure(state)
    return state


def record_chain(state, n_samples, thin, cols):
    """Run ``n_samples * thin`` sweeps, storing heights at columns ``cols`` after every ``thin``."""
    lq, off = state.table()
    f_row, g_row = state.rows()
    cols = np.asarray(cols, dtype=np.int64)
    out = np.empty((n_samples, state.n_curves, len(cols)), dtype=np.int64)
    done = _run_chain(state.heights, f_row, g_row, state.lam, lq, off, state.step.log_probs, state.rng,
                      state.width, state.max_attempts, n_samples * thin, thin, cols, out, state.stats)
    if done < 0:
        state.sweeps += -done - 1
        _raise_sweep_failure(state)
    state.sweeps += done
    return out


def default_burn_in(n_curves, m_param):
    """200 sweeps per 10^3 lattice sites."""
    return int(math.ceil(200 * n_curves * (2 * m_param + 1) / 1000))


def to_rescaled(heights, m_param, first_column_time):
    """LineEnsemble of Y(t) = M^{-1/3} Y^M(t M^{2/3}) from lattice heights."""
    T = heights.shape[-1]
    lattice = np.arange(first_column_time, first_column_time + T, dtype=float)
    return LineEnsemble(lattice / m_param ** (2.0 / 3.0), heights / m_param ** (1.0 / 3.0),
                        non_intersecting=True)


def simulate_dfs(n_curves, m_param, burn_in=None, n_sweeps=1000, thin=10, rng=None, span=None,
                 width=DEFAULT_WIDTH, start="pinned"):
    """Run the chain and return thinned snapshots in rescaled coordinates.

    ``span`` restricts each snapshot to lattice times within ``[-span, span]``
    (all of ``[-M, M]`` by default).  Also returns the final McmcState.
    """
    state = McmcState.dfs(n_curves, m_param, rng, start=start, width=width)
    burn = default_burn_in(n_curves, m_param) if burn_in is None else int(burn_in)
    if burn:
        full_sweep(state, burn)
    span = m_param if span is None else int(span)
    cols = np.arange(m_param - span, m_param + span + 1)
    n_out = n_sweeps // thin if thin else 0
    raw = record_chain(state, n_out, thin, cols) if n_out else np.empty((0, n_curves, len(cols)))
    snaps = [to_rescaled(r, m_param, -span) for r in raw]
    return snaps, state


def y_to_x(e):
    """X(s) = 2^{1/3} Y(2^{-2/3} s)."""
    return affine_transform(e, 2.0 ** (-1.0 / 3.0))


def rescale_to_xtilde(e, n_curves, times=None):
    """Xtilde_i(t) = X_i(2t) - c1 N^{2/3}, read off by exact node lookup."""
    times = e.times / 2.0 if times is None else np.asarray(times, dtype=float)
    idx = np.searchsorted(e.times, 2.0 * times)
    idx = np.clip(idx, 0, len(e.times) - 1)
    if not np.array_equal(e.times[idx], 2.0 * times):
        raise AlignmentError("requested times do not land on grid nodes after t -> 2t")
    return LineEnsemble(times, e.values[:, idx] - edge_shift(n_curves), e.first_index, e.non_intersecting)


def xtilde_to_x(e, n_curves):
    return LineEnsemble(2.0 * e.times, e.values + edge_shift(n_curves), e.first_index, e.non_intersecting)
