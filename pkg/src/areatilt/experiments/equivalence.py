"""Statistical equivalence tests for the parabolic shift, the affine scaling and
window resampling, each paired with a negative control that must fail."""

import math
import time
from dataclasses import replace

import numpy as np

from .. import walks
from ..bridges import (
    BoundaryData,
    TiltVector,
    affine_boundary,
    parabola,
    resample_window,
    sample_avoiding_tilted_many,
    shift_boundary,
    uniform_grid,
)
from ..errors import RejectionBudgetError
from ..rng import make_rng
from .config import ExperimentConfig
from .parallel import chunks, run_tasks
from .report import Report, ks_panel, software_versions

RNG_NOTE = "numpy Philox; replica streams keyed by (seed, stream, chunk)"


def build_manifest(cfg, **extra):
    out = {"config": cfg.as_dict(), "software": software_versions(), "rng": RNG_NOTE}
    out.update(extra)
    return out


def _run(kind, cfg, body, header=""):
    if not isinstance(cfg, ExperimentConfig) or cfg.kind != kind:
        raise TypeError(f"expected an ExperimentConfig of kind {kind!r}")
    t0 = time.perf_counter()
    rep = Report(kind, header=header, manifest=build_manifest(cfg))
    try:
        body(cfg, rep)
    except RejectionBudgetError as exc:
        rep.inconclusive = True
        rep.notes.append(str(exc))
        rep.telemetry["rejection_failure"] = {"attempts": exc.attempts, "accepted": exc.accepted,
                                              "acceptance_rate": exc.acceptance_rate}
    rep.wall_clock = time.perf_counter() - t0
    if cfg.output_dir:
        rep.write(cfg.output_dir)
    return rep


# -- replicated samplers -----------------------------------------------------------


def _materialize(bd, grid):
    """Boundary data with ceiling/floor evaluated on the grid (picklable, no closures)."""
    return BoundaryData(bd.a, bd.b, bd.x, bd.y, f=bd.ceiling(grid), g=bd.floor(grid))


def _bridge_chunk(bd, tilts, grid, count, seed, stream, index, max_attempts):
    return sample_avoiding_tilted_many(bd, TiltVector(tilts), grid, make_rng(seed, stream, index), count, max_attempts)


def sample_replicated(bd, tilts, grid, n, seed, stream, max_attempts=10 ** 7):
    """``n`` exact samples in fixed chunks; identical for any worker count."""
    bd = _materialize(bd, grid)
    tasks = [(bd, tuple(tilts), grid, cnt, seed, stream, i, max_attempts) for i, _, cnt in chunks(n)]
    res = run_tasks(_bridge_chunk, tasks)
    vals = np.concatenate([r[0] for r in res])
    attempts = sum(r[1].attempts for r in res)
    accepted = sum(r[1].accepted for r in res)
    ties = sum(r[1].ties for r in res)
    return vals, {"attempts": attempts, "accepted": accepted, "ties": ties,
                  "acceptance_rate": accepted / attempts if attempts else 0.0}


def _window_chunk(values, grid, curves, nodes, tilts, floor, seed, stream, index, max_attempts):
    return resample_window(values, grid, curves, nodes, tilts, math.inf, floor, make_rng(seed, stream, index),
                           max_attempts)


def resample_replicated(values, grid, curves, nodes, tilts, floor, seed, stream, max_attempts=10 ** 7):
    tasks = [(values[s:s + cnt], grid, curves, nodes, tuple(tilts), floor, seed, stream, i, max_attempts)
             for i, s, cnt in chunks(len(values))]
    return np.concatenate(run_tasks(_window_chunk, tasks))


def spread_nodes(intervals, count):
    """``count`` interior node indices spread evenly (the midpoint is included for odd counts)."""
    idx = np.round(np.linspace(0, intervals, count + 2)[1:-1]).astype(int)
    return np.unique(np.clip(idx, 1, intervals - 1))


def _marginals(values, curves, nodes):
    """Columns (curve, node) of a (S, k, n) sample array plus their labels (1-based curves)."""
    cols, labels = [], []
    for i in curves:
        for j in nodes:
            cols.append(values[:, i, j])
            labels.append((i + 1, int(j), None))
    return np.column_stack(cols), labels


def _with_times(labels, grid):
    return [(c, j, float(grid[j])) for c, j, _ in labels]


def _record_panel(rep, test, part, a, b, labels, level):
    rows, ok = ks_panel(test, part, a, b, labels, level)
    rep.rows.extend(rows)
    worst = min(r["p_corrected"] for r in rows)
    return ok, worst


# -- parabolic shift ----------------------------------------------------------------------


def run_girsanov_test(cfg):
    """Untilted avoiding bridges plus the parabola versus tilted bridges with shifted data."""
    return _run("girsanov", cfg, _girsanov_body)


def _girsanov_body(cfg, rep):
    p = cfg.section("girsanov")
    grid = uniform_grid(p.a, p.b, p.intervals)
    k = p.k
    base = BoundaryData(p.a, p.b, p.x, p.y, g=p.floor)
    shifted = shift_boundary(base, p.tilt, p.c, p.d)
    free, st_free = sample_replicated(base, (0.0,) * k, grid, cfg.samples, cfg.seed, 1, p.max_attempts)
    tilted, st_tilt = sample_replicated(shifted, p.tilts, grid, cfg.samples, cfg.seed, 2, p.max_attempts)
    h = parabola(p.tilt, p.c, p.d)(grid)
    nodes = spread_nodes(p.intervals, p.test_nodes)
    b_cols, labels = _marginals(tilted, range(k), nodes)
    labels = _with_times(labels, grid)
    a_cols, _ = _marginals(free + h, range(k), nodes)
    ok, worst = _record_panel(rep, "girsanov", "main", a_cols, b_cols, labels, cfg.level)
    rep.add("shifted untilted law equals tilted law with shifted data", ok, f"min corrected p = {worst:.3g}")
    c_cols, _ = _marginals(free - h, range(k), nodes)
    ok_c, worst_c = _record_panel(rep, "girsanov", "control", c_cols, b_cols, labels, cfg.level)
    rep.add("negative control (parabola subtracted) is rejected", not ok_c, f"min corrected p = {worst_c:.3g}")
    rep.telemetry.update({"untilted": st_free, "tilted": st_tilt, "nodes": nodes.tolist()})


# -- affine scaling ----------------------------------------------------------------------------


def run_scaling_test(cfg):
    """Sample then transform versus transform the data (tilts times lambda^3) then sample."""
    return _run("scaling", cfg, _scaling_body)


def _scaling_body(cfg, rep):
    p = cfg.section("scaling")
    lam, r, u = p.lam, p.r, p.u
    grid = uniform_grid(p.a, p.b, p.intervals)
    new_grid = grid / lam ** 2 + u
    k = p.k
    base = BoundaryData(p.a, p.b, p.x, p.y, g=p.floor)
    target = affine_boundary(base, lam, r, u)
    src, st_src = sample_replicated(base, p.tilts, grid, cfg.samples, cfg.seed, 1, p.max_attempts)
    moved = src / lam + r
    scaled_tilts = tuple(t * lam ** 3 for t in p.tilts)
    tgt, st_tgt = sample_replicated(target, scaled_tilts, new_grid, cfg.samples, cfg.seed, 2, p.max_attempts)
    nodes = spread_nodes(p.intervals, p.test_nodes)
    a_cols, labels = _marginals(moved, range(k), nodes)
    labels = _with_times(labels, new_grid)
    b_cols, _ = _marginals(tgt, range(k), nodes)
    ok, worst = _record_panel(rep, "scaling", "main", a_cols, b_cols, labels, cfg.level)
    rep.add("transformed sample matches sample with lambda^3-scaled tilts", ok, f"min corrected p = {worst:.3g}")
    ctl, st_ctl = sample_replicated(target, p.tilts, new_grid, cfg.samples, cfg.seed, 3, p.max_attempts)
    c_cols, _ = _marginals(ctl, range(k), nodes)
    ok_c, worst_c = _record_panel(rep, "scaling", "control", a_cols, c_cols, labels, cfg.level)
    degenerate = lam == 1.0 or not any(p.tilts)
    if degenerate:
        rep.notes.append("lambda = 1 or zero tilts: the control coincides with the main test and is not required to fail")
    else:
        rep.add("negative control (tilts not rescaled) is rejected", not ok_c, f"min corrected p = {worst_c:.3g}")
    rep.telemetry.update({"source": st_src, "target": st_tgt, "control": st_ctl, "nodes": nodes.tolist()})


# -- window resampling -----------------------------------------------------------------------


def run_gibbs_invariance_test(cfg):
    """Window resampling keeps the law: continuous bridges and the discrete chain."""
    return _run("gibbs-invariance", cfg, _gibbs_body)


def _gibbs_body(cfg, rep):
    _gibbs_continuous(cfg, rep)
    if cfg.section("discrete").enabled:
        _gibbs_discrete(cfg, rep)


def _gibbs_continuous(cfg, rep):
    p = cfg.section("continuous")
    grid = uniform_grid(p.a, p.b, p.intervals)
    dt = (p.b - p.a) / p.intervals
    c = int(round((p.window[0] - p.a) / dt))
    d = int(round((p.window[1] - p.a) / dt))
    if d - c < 2:
        d = min(c + 2, p.intervals)
        c = d - 2
    curves = (p.window_curves[0] - 1, p.window_curves[1] - 1)
    bd = BoundaryData(p.a, p.b, p.x, p.y, g=p.floor)
    fresh, st_fresh = sample_replicated(bd, p.tilts, grid, cfg.samples, cfg.seed, 1, p.max_attempts)
    start, _ = sample_replicated(bd, p.tilts, grid, cfg.samples, cfg.seed, 2, p.max_attempts)
    moved = resample_replicated(start, grid, curves, (c, d), p.tilts, p.floor, cfg.seed, 3, p.max_attempts)
    nodes = [j for j in spread_nodes(p.intervals, p.test_nodes) if c < j < d] or [(c + d) // 2]
    idx = range(curves[0], curves[1] + 1)
    a_cols, labels = _marginals(fresh, idx, nodes)
    labels = _with_times(labels, grid)
    b_cols, _ = _marginals(moved, idx, nodes)
    ok, worst = _record_panel(rep, "gibbs", "continuous", a_cols, b_cols, labels, cfg.level)
    rep.add("continuous: window resampling preserves node marginals", ok, f"min corrected p = {worst:.3g}")
    rep.telemetry["continuous"] = {"fresh": st_fresh, "window_nodes": [c, d], "test_nodes": [int(j) for j in nodes]}
    if any(p.tilts):
        untilted = resample_replicated(start, grid, curves, (c, d), (0.0,) * p.k, p.floor, cfg.seed, 4, p.max_attempts)
        c_cols, _ = _marginals(untilted, idx, nodes)
        ok_c, worst_c = _record_panel(rep, "gibbs", "continuous-control", a_cols, c_cols, labels, cfg.level)
        rep.add("continuous control (tilt dropped inside the window) is rejected", not ok_c,
                f"min corrected p = {worst_c:.3g}")


def _blocks(n):
    return [(i, min(i + 1, n)) for i in range(1, n + 1, 2)]


def _gibbs_discrete(cfg, rep):
    p = cfg.section("discrete")
    N, M = p.n_curves, p.m_param
    state = walks.McmcState.dfs(N, M, make_rng(cfg.seed, 5), width=walks.DEFAULT_WIDTH)
    burn = walks.default_burn_in(N, M) if p.burn_in < 0 else p.burn_in
    walks.full_sweep(state, burn)
    half = p.window_width // 2
    c, d = max(M - half, 0), min(M + half, 2 * M)
    blocks = _blocks(N)
    n = cfg.samples
    side_a = np.empty((n, N))
    side_b = np.empty((n, N))
    side_c = np.empty((n, N))
    for i in range(n):
        walks.full_sweep(state, p.thin)
        side_a[i] = state.heights[:, M]
        for out, stream, lam in ((side_b, 6, None), (side_c, 7, p.control_lam)):
            copy = replace(state, heights=state.heights.copy(), stats=np.zeros(4, dtype=np.int64))
            rng = make_rng(cfg.seed, stream, i)
            for blk in blocks:
                walks.gibbs_sweep(copy, (blk, (c, d)), rng=rng, lam=lam)
            out[i] = copy.heights[:, M]
    scale = M ** (1.0 / 3.0)
    labels = [(i + 1, M, 0.0) for i in range(N)]
    ok, worst = _record_panel(rep, "gibbs", "discrete", side_a / scale, side_b / scale, labels, cfg.level)
    rep.add("discrete: extra window moves keep the t = 0 marginals", ok, f"min corrected p = {worst:.3g}")
    ok_c, worst_c = _record_panel(rep, "gibbs", "discrete-control", side_a / scale, side_c / scale, labels, cfg.level)
    rep.add(f"discrete control (window moves with lambda = {p.control_lam:g}) is rejected", not ok_c,
            f"min corrected p = {worst_c:.3g}")
    rep.telemetry["discrete"] = {"burn_in": burn, "sweeps": state.sweeps, "window_columns": [c, d],
                                 "chain_stats": dict(zip(("attempts", "moves", "halvings", "failures"),
                                                         state.stats.tolist()))}
    rep.manifest["step_pmf"] = state.step.as_dict()


# -- discrete to continuum ----------------------------------------------------------------------


def _walk_chunk(bd, lam, count, seed, stream, index):
    return walks.sample_tilted_avoiding_walks_many(bd, lam, count, rng=make_rng(seed, stream, index))[0]


def run_walk_scaling_test(cfg):
    """Rescaled tilted walk bridges approach the continuum tilted bridges as M grows."""
    return _run("walk-scaling", cfg, _walk_scaling_body)


def _walk_scaling_body(cfg, rep):
    p = cfg.section("walk_scaling")
    k = len(p.x)
    grid = uniform_grid(p.a, p.b, p.intervals)
    bd = BoundaryData(p.a, p.b, p.x, p.y, g=0.0)
    cont, st_cont = sample_replicated(bd, (p.tilt,) * k, grid, cfg.samples, cfg.seed, 20)
    mid_c = cont[:, :, p.intervals // 2]
    dist = {}
    table = []
    for j, M in enumerate(p.m_values):
        L = 2 * max(1, int(round(M ** (2.0 / 3.0) * (p.b - p.a) / 2)))
        scale = M ** (1.0 / 3.0)
        xs = tuple(max(1, int(round(v * scale))) for v in p.x)
        ys = tuple(max(1, int(round(v * scale))) for v in p.y)
        wb = walks.WalkBoundary(0, L, xs, ys)
        lam = p.tilt / M
        tasks = [(wb, lam, cnt, cfg.seed, 30 + j, i) for i, _, cnt in chunks(cfg.samples)]
        heights = np.concatenate(run_tasks(_walk_chunk, tasks))
        mid = heights[:, :, L // 2] / scale
        labels = [(i + 1, L // 2, 0.5 * (p.a + p.b)) for i in range(k)]
        rows, _ = ks_panel("walk-scaling", f"M={M}", mid, mid_c, labels, cfg.level)
        rep.rows.extend(rows)
        dist[M] = [r["statistic"] for r in rows]
        for i in range(k):
            table.append({"m_param": M, "steps": L, "curve": i + 1, "ks_distance": dist[M][i]})
    ok = all(all(a > b for a, b in zip(dist[m0], dist[m1])) for m0, m1 in zip(p.m_values, p.m_values[1:]))
    detail = "; ".join(f"M={m}: " + ", ".join(f"{v:.4f}" for v in dist[m]) for m in p.m_values)
    rep.add("midpoint KS distance to the continuum decreases in M for every curve", ok, detail)
    rep.tables["walk_scaling"] = (("m_param", "steps", "curve", "ks_distance"), table)
    rep.telemetry["continuum"] = st_cont
