"""Finite-N kernels, top-curve distributions and tails against their edge limits."""

import math
import time

import numpy as np

from ..dpp import FixedTimeConfig, intensity, sample_many, top_point_fraction_below
from ..errors import RejectionBudgetError
from ..fredholm import top_curve_cdf_finite, tracy_widom_cdf
from ..kernels import KernelSpec, kernel_shifted_matrix, kernel_sup_distance
from ..quadrature import integrate
from .config import ExperimentConfig
from .equivalence import build_manifest
from .parallel import chunks, run_tasks
from .report import Report

HEADER = ("Convergence is checked for finite-dimensional distributions only "
          "(kernels, one-time CDFs and tails); tightness in the path topology is not tested.")


def run_convergence_report(cfg):
    """Kernel distances, CDFs and tail bounds; ``kernel-convergence`` skips DPP sampling."""
    if not isinstance(cfg, ExperimentConfig) or cfg.kind not in ("convergence", "kernel-convergence"):
        raise TypeError("expected a convergence or kernel-convergence ExperimentConfig")
    t0 = time.perf_counter()
    rep = Report(cfg.kind, header=HEADER, manifest=build_manifest(cfg))
    p = cfg.section("convergence")
    try:
        _kernel_distances(p, rep)
        _cdf_comparison(p, rep)
        if cfg.kind == "convergence" and p.dpp_samples > 0:
            _dpp_comparison(p, cfg.seed, rep)
        _tail_bounds(p, rep)
    except RejectionBudgetError as exc:
        rep.inconclusive = True
        rep.notes.append(str(exc))
    rep.wall_clock = time.perf_counter() - t0
    if cfg.output_dir:
        rep.write(cfg.output_dir)
    return rep


def _kernel_distances(p, rep):
    rows = []
    dist = []
    for n in p.n_values:
        d = kernel_sup_distance(KernelSpec(n), 0.0, 0.0, p.box, p.grid_pts)
        dist.append(d)
        rows.append({"n_curves": n, "box": p.box, "sup_distance": d})
    rep.tables["kernel_distance"] = (("n_curves", "box", "sup_distance"), rows)
    ok = all(a > b for a, b in zip(dist, dist[1:]))
    rep.add("equal-time kernel sup distance decreases in N", ok,
            ", ".join(f"N={n}: {d:.4g}" for n, d in zip(p.n_values, dist)))


def _cdf_comparison(p, rep):
    spec = KernelSpec(p.n_report)
    rows = []
    for s in p.s_values:
        fin = top_curve_cdf_finite(spec, 0.0, s, order=p.order, detail=True)
        lim = tracy_widom_cdf(s, order=p.order, detail=True)
        gap = abs(fin.value - lim.value)
        rows.append({"n_curves": p.n_report, "s": s, "finite_n": fin.value, "limit": lim.value,
                     "abs_diff": gap, "within_tol": gap <= p.cdf_tol})
        rep.add(f"top-curve CDF at s = {s:g}, N = {p.n_report} within {p.cdf_tol:g} of the limit",
                gap <= p.cdf_tol, f"finite {fin.value:.6f}, limit {lim.value:.6f}, diff {gap:.3g}")
    rep.tables["cdf_comparison"] = (("n_curves", "s", "finite_n", "limit", "abs_diff", "within_tol"), rows)


def _dpp_chunk(n, count, seed, start):
    return sample_many(FixedTimeConfig(n), count, seed, start)


def _dpp_comparison(p, seed, rep):
    cfg = FixedTimeConfig(p.n_report)
    tasks = [(p.n_report, cnt, seed, start) for _, start, cnt in chunks(p.dpp_samples)]
    samples = np.concatenate(run_tasks(_dpp_chunk, tasks))
    rows = []
    for s in p.dpp_s_values:
        emp, se = top_point_fraction_below(samples, s, cfg.shift)
        lim = tracy_widom_cdf(s, order=p.order)
        gap = abs(emp - lim)
        rows.append({"n_curves": p.n_report, "s": s, "empirical": emp, "std_error": se, "limit": lim,
                     "abs_diff": gap, "within_tol": gap <= p.dpp_tol})
        rep.add(f"sampled top point at s = {s:g} within {p.dpp_tol:g} of the limit", gap <= p.dpp_tol,
                f"empirical {emp:.4f} +- {se:.4f}, limit {lim:.6f}")
    rep.tables["dpp_comparison"] = (("n_curves", "s", "empirical", "std_error", "limit", "abs_diff", "within_tol"), rows)


def _tail_bounds(p, rep):
    """Envelope constant C = max |K(x, y)| e^(x + y) on a box, then tail mass against C e^(-2M) / 2."""
    spec = KernelSpec(p.tail_n)
    g = np.linspace(p.envelope_lo, p.envelope_hi, p.envelope_pts)
    k = kernel_shifted_matrix(spec, g, 0.0, g, 0.0)
    env = float(np.max(np.abs(k) * np.exp(g[:, None] + g[None, :])))
    rep.add(f"kernel envelope constant on [{p.envelope_lo:g}, {p.envelope_hi:g}]^2 at most {p.envelope_max:g}",
            env <= p.envelope_max, f"C = {env:.4g}")
    cfg = FixedTimeConfig(p.tail_n)
    rows = []
    for m in p.tail_m_values:
        lo = cfg.shift + m
        mass = integrate(lambda x: intensity(cfg, x), lo, lo + 30.0, panels=60)
        bound = env * math.exp(-2.0 * m) / 2.0
        rows.append({"n_curves": p.tail_n, "m": m, "tail_mass": mass, "bound": bound, "within": mass <= bound})
        rep.add(f"tail mass beyond the edge + {m:g} below the envelope bound", mass <= bound,
                f"mass {mass:.3e}, bound {bound:.3e}")
    rep.tables["tail_bounds"] = (("n_curves", "m", "tail_mass", "bound", "within"), rows)
    rep.telemetry["envelope_constant"] = env
