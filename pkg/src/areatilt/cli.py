"""Command line entry point.  Exit codes: 0 success or pass, 1 test failure or
inconclusive run, 2 usage or configuration error, 3 numerical certification failure."""

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import airy, walks
from .bridges import BoundaryData, TiltVector, sample_avoiding_tilted_many, uniform_grid
from .dpp import FixedTimeConfig, sample_many
from .errors import AreaTiltError, CertificationError, ConfigError, DomainError, RejectionBudgetError
from .experiments import config as xcfg
from .experiments import run_experiment
from .experiments.report import fmt, software_versions, write_csv, write_json
from .fredholm import GapDomain, airy_rule, gap_probability, shifted_rule, tracy_widom_cdf
from .kernels import KernelSpec, airy_ext_matrix, kernel_finite_matrix, kernel_shifted_matrix
from .rng import make_rng

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CERT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so ``main`` can return the code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _emit(columns, rows, out):
    if out:
        write_csv(out, columns, rows)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# -- numerical tables ------------------------------------------------------------------


def cmd_airy_table(args):
    _emit(("k", "omega_k", "ai_prime_at_zero"), airy.table_rows(args.kmax), args.out)
    return EXIT_OK


def cmd_kernel_table(args):
    spec = KernelSpec(args.n_curves)
    g = np.linspace(-args.box, args.box, args.grid_pts)
    k_tilde = kernel_shifted_matrix(spec, g, args.s, g, args.t)
    k_raw = kernel_finite_matrix(spec, g + spec.shift, 2 * args.s, g + spec.shift, 2 * args.t)
    k_air = airy_ext_matrix(g, args.s, g, args.t)
    rows = [(g[i], g[j], args.s, args.t, k_raw[i, j], k_tilde[i, j], k_air[i, j], abs(k_tilde[i, j] - k_air[i, j]))
            for i in range(len(g)) for j in range(len(g))]
    _emit(("x", "y", "s", "t", "K_N", "K_tilde_N", "A_ext", "abs_diff"), rows, args.out)
    return EXIT_OK


def _gap_line(label, res):
    m1, m2 = res.orders
    return (f"{label} = {res.value:.6f} ± {res.delta:.1e}  "
            f"(m={m1}: {res.value_low!r}, m={m2}: {res.value_high!r})")


def cmd_tw_cdf(args):
    rows = []
    for s in args.s:
        res = tracy_widom_cdf(s, order=args.order, tol=args.tol, detail=True)
        print(_gap_line(f"F2({s:g})", res))
        rows.append((s, res.value, res.value_low, res.value_high, res.delta))
    if args.out:
        write_csv(args.out, ("s", "value", "value_m", "value_2m", "delta"), rows)
    return EXIT_OK


def _load_toml(path):
    try:
        with open(path, "rb") as fh:
            return xcfg.tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except xcfg.tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _strict(table, allowed, where):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def gap_from_config(data):
    """Kernel rule and GapDomain from a [[interval]] list; kernel "airy" or "finite"."""
    _strict(data, ("kernel", "n_curves", "order", "tol", "interval"), "gap config")
    kernel = data.get("kernel", "airy")
    if kernel == "airy":
        rule = airy_rule()
    elif kernel == "finite":
        rule = shifted_rule(KernelSpec(xcfg._coerce(data.get("n_curves", 100), "int", "n_curves")))
    else:
        raise ConfigError("kernel must be 'airy' or 'finite'")
    pieces = []
    for i, iv in enumerate(data.get("interval", [])):
        where = f"interval[{i}]"
        _strict(iv, ("time", "lo", "hi"), where)
        if "lo" not in iv:
            raise ConfigError(f"{where}: 'lo' is required")
        pieces.append((xcfg._coerce(iv.get("time", 0.0), "float", f"{where}.time"),
                       xcfg._coerce(iv["lo"], "float", f"{where}.lo"),
                       xcfg._coerce(iv.get("hi", "inf"), "bound", f"{where}.hi")))
    try:
        domain = GapDomain(tuple(pieces))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    order = xcfg._coerce(data.get("order", 40), "int", "order")
    tol = xcfg._coerce(data.get("tol", 1e-6), "float", "tol")
    return rule, domain, order, tol


def cmd_gap(args):
    rule, domain, order, tol = gap_from_config(_load_toml(args.config))
    res = gap_probability(rule, domain, order, tol)
    print(_gap_line("gap probability", res))
    for note in res.notes:
        print(f"note: {note}")
    return EXIT_OK


# -- samplers ------------------------------------------------------------------------------


def cmd_sample_dpp(args):
    cfg = FixedTimeConfig(args.n_curves)
    pts = sample_many(cfg, args.samples, args.seed)
    rows = [(i, r + 1, pts[i, r], pts[i, r] - cfg.shift) for i in range(len(pts)) for r in range(cfg.n_curves)]
    _emit(("sample_id", "rank", "position", "shifted_position"), rows, args.out)
    return EXIT_OK


BRIDGE_KEYS = ("a", "b", "x", "y", "f", "g", "values", "intervals", "samples", "seed", "max_attempts", "out")


def bridges_from_config(data):
    """BoundaryData, TiltVector and run settings; tilt coefficients live under ``values``."""
    _strict(data, BRIDGE_KEYS, "sample-bridges config")
    for key in ("a", "b", "x", "y", "out"):
        if key not in data:
            raise ConfigError(f"sample-bridges config needs '{key}'")
    x = xcfg._coerce(data["x"], "floats", "x")
    try:
        bd = BoundaryData(xcfg._coerce(data["a"], "float", "a"), xcfg._coerce(data["b"], "float", "b"), x,
                          xcfg._coerce(data["y"], "floats", "y"),
                          f=xcfg._coerce(data.get("f", "inf"), "bound", "f"),
                          g=xcfg._coerce(data.get("g", "-inf"), "bound", "g"))
        tilts = TiltVector(xcfg._coerce(data.get("values", [0.0] * len(x)), "floats", "values"))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    if len(tilts.values) != bd.k:
        raise ConfigError("'values' needs one tilt per curve")
    if any(tilts.values) and not math.isfinite(bd.g):
        raise ConfigError("nonzero tilts need a finite floor g")
    run = {"intervals": xcfg._coerce(data.get("intervals", 256), "int", "intervals"),
           "samples": xcfg._coerce(data.get("samples", 1), "int", "samples"),
           "seed": xcfg._coerce(data.get("seed", 0), "int", "seed"),
           "max_attempts": xcfg._coerce(data.get("max_attempts", 10 ** 7), "int", "max_attempts"),
           "out": xcfg._coerce(data["out"], "str", "out")}
    if run["intervals"] < 2 or run["samples"] < 1 or not 0 <= run["seed"] < xcfg.SEED_LIMIT:
        raise ConfigError("need intervals >= 2, samples >= 1 and a seed in [0, 2^64)")
    return bd, tilts, run


def cmd_sample_bridges(args):
    data = _load_toml(args.config)
    bd, tilts, run = bridges_from_config(data)
    grid = uniform_grid(bd.a, bd.b, run["intervals"])
    vals, st = sample_avoiding_tilted_many(bd, tilts, grid, make_rng(run["seed"], 1), run["samples"],
                                           run["max_attempts"])
    out = run["out"]
    os.makedirs(out, exist_ok=True)
    width = max(4, len(str(run["samples"] - 1)))
    for n, v in enumerate(vals):
        rows = [(i + 1, grid[j], v[i, j]) for i in range(bd.k) for j in range(len(grid))]
        write_csv(os.path.join(out, f"sample_{n:0{width}d}.csv"), ("curve_index", "time", "value"), rows)
    write_json(os.path.join(out, "manifest.json"), {"config": data, "rejection": st.as_dict(),
                                                   "software": software_versions()})
    print(f"wrote {len(vals)} samples to {out} (acceptance rate {st.acceptance_rate:.3g})")
    return EXIT_OK


def cmd_simulate_mcmc(args):
    burn = None if args.burn_in < 0 else args.burn_in
    snaps, state = walks.simulate_dfs(args.n_curves, args.m_param, burn, args.sweeps, args.thin,
                                      make_rng(args.seed, 1), span=args.span, width=args.width)
    os.makedirs(args.out, exist_ok=True)
    width = max(4, len(str(max(len(snaps) - 1, 0))))
    for n, e in enumerate(snaps):
        rows = [(i + e.first_index, e.times[j], e.values[i, j])
                for i in range(e.values.shape[0]) for j in range(len(e.times))]
        write_csv(os.path.join(args.out, f"snapshot_{n:0{width}d}.csv"), ("curve_index", "time", "value"), rows)
    manifest = {"n_curves": args.n_curves, "m_param": args.m_param, "sweeps": args.sweeps,
                "burn_in": walks.default_burn_in(args.n_curves, args.m_param) if burn is None else burn,
                "thin": args.thin, "seed": args.seed, "span": args.span, "width": args.width,
                "lam": state.lam, "step_pmf": state.step.as_dict(), "snapshots": len(snaps),
                "coordinates": "Y(t) = M^(-1/3) Y^M(t M^(2/3))",
                "chain_stats": dict(zip(("attempts", "moves", "halvings", "failures"), state.stats.tolist())),
                "software": software_versions()}
    write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"wrote {len(snaps)} snapshots to {args.out}")
    return EXIT_OK


# -- experiments ---------------------------------------------------------------------------------

EXPERIMENTS = {
    "test-girsanov": ("girsanov",),
    "test-scaling": ("scaling",),
    "test-gibbs": ("gibbs-invariance",),
    "test-walk-scaling": ("walk-scaling",),
    "convergence-report": ("convergence", "kernel-convergence"),
}


def cmd_experiment(args):
    kinds = EXPERIMENTS[args.command]
    cfg = xcfg.load_config(args.config) if args.config else xcfg.default_config(kinds[0])
    if cfg.kind not in kinds:
        raise ConfigError(f"{args.command} expects kind {' or '.join(kinds)}, config has {cfg.kind!r}")
    if args.out:
        cfg = xcfg.ExperimentConfig(cfg.kind, cfg.seed, cfg.samples, cfg.level, args.out, cfg.params)
    rep = run_experiment(cfg)
    print("\n".join(rep.lines()))
    if cfg.output_dir:
        print(f"results in {cfg.output_dir}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser():
    p = _Parser(prog="areatilt", description="Area-tilted line ensembles: numerical tables, samplers and statistical experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("airy-table", help="Airy zeros and derivatives as CSV")
    s.add_argument("--kmax", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_airy_table)

    s = sub.add_parser("kernel-table", help="finite-N and limiting kernels on a grid")
    s.add_argument("--n-curves", type=int, default=100)
    s.add_argument("--box", type=float, default=2.0)
    s.add_argument("--grid-pts", type=int, default=21)
    s.add_argument("--s", type=float, default=0.0)
    s.add_argument("--t", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_kernel_table)

    s = sub.add_parser("tw-cdf", help="Tracy-Widom CDF with two-order diagnostics")
    s.add_argument("--s", type=float, nargs="+", required=True)
    s.add_argument("--order", type=int, default=40)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--out", help="optional CSV table")
    s.set_defaults(fn=cmd_tw_cdf)

    s = sub.add_parser("gap", help="gap probability from a TOML config")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_gap)

    s = sub.add_parser("sample-dpp", help="exact fixed-time samples of the N-curve ensemble")
    s.add_argument("--n-curves", type=int, required=True)
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sample_dpp)

    s = sub.add_parser("sample-bridges", help="tilted avoiding bridges from a TOML config")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_sample_bridges)

    s = sub.add_parser("simulate-mcmc", help="window Gibbs chain for tilted avoiding walks")
    s.add_argument("--n-curves", type=int, required=True)
    s.add_argument("--m-param", type=int, required=True)
    s.add_argument("--sweeps", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=-1, help="negative: the default schedule")
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--span", type=int, default=None, help="keep lattice times in [-span, span]")
    s.add_argument("--width", type=int, default=walks.DEFAULT_WIDTH)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate_mcmc)

    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="TOML experiment config (defaults if omitted)")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except RejectionBudgetError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except AreaTiltError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
