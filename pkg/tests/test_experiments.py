import json
import os

import numpy as np
import pytest

from areatilt import cli
from areatilt.errors import ConfigError
from areatilt.experiments import config as xcfg
from areatilt.experiments import default_config, load_config, run_experiment
from areatilt.experiments.config import (
    ContinuousGibbsParams,
    DiscreteGibbsParams,
    GirsanovParams,
    config_from_dict,
)
from areatilt.experiments.equivalence import spread_nodes as node_indices
from areatilt.experiments.parallel import WORKERS_ENV, chunks, worker_count
from areatilt.experiments.report import fmt, ks_panel


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- config ----------------------------------------------------------------------


def test_config_defaults_and_roundtrip():
    cfg = config_from_dict({"kind": "scaling", "seed": 5, "scaling": {"lam": 1.5, "x": [3, 1], "y": [3, 1],
                                                                       "tilts": [1, 2]}})
    p = cfg.section("scaling")
    assert p.lam == 1.5 and p.x == (3.0, 1.0) and p.tilts == (1.0, 2.0)
    assert cfg.as_dict()["seed"] == 5 and cfg.samples == 10_000


@pytest.mark.parametrize("data, msg", [
    ({"kind": "scaling", "scaling": {"lam": -1.0}}, "lam"),
    ({"kind": "scaling", "scaling": {"lamda": 2.0}}, "unknown key"),
    ({"kind": "scaling", "extra": 1}, "unknown key"),
    ({"kind": "nope"}, "kind"),
    ({"kind": "scaling", "samples": 10}, "samples"),
    ({"kind": "scaling", "level": 0.5}, "level"),
    ({"kind": "scaling", "seed": -1}, "seed"),
    ({"kind": "scaling", "seed": 2 ** 64}, "seed"),
    ({"kind": "girsanov", "girsanov": {"x": [1.0, 2.0], "y": [2.0, 1.0], "tilts": [1.0, 1.0]}}, "decreasing"),
    ({"kind": "girsanov", "scaling": {}}, "unknown key"),
    ({"kind": "gibbs-invariance", "continuous": {"window": [0.5, 0.2]}}, "window"),
    ({"kind": "gibbs-invariance", "discrete": {"thin": 1.5}}, "integer"),
    ({"kind": "walk-scaling", "walk_scaling": {"m_values": [800, 200]}}, "increasing"),
])
def test_config_errors(data, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(_write(tmp_path, "bad.toml", "kind = \n"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.toml"))
    cfg = load_config(_write(tmp_path, "ok.toml", 'kind = "girsanov"\nseed = 3\n[girsanov]\ntilt = 2.0\nc = 0.5\n'))
    assert cfg.section("girsanov").tilts == (2.0, 2.0)


def test_girsanov_tilts_fill_from_tilt():
    p = GirsanovParams(x=(3.0, 2.0, 1.0), y=(3.0, 2.0, 1.0), tilt=0.5)
    assert p.tilts == (0.5, 0.5, 0.5)


# -- helpers -------------------------------------------------------------------------------


def test_fmt_round_trips_doubles():
    for v in (0.1, 1 / 3, 2.0 ** 0.5, -1e-300, 12345.678):
        assert float(fmt(v)) == v
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3" and fmt(None) == ""


def test_ks_panel_bonferroni():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(500, 3))
    b = rng.normal(size=(500, 3))
    b[:, 2] += 1.0
    rows, ok = ks_panel("t", "p", a, b, [(1, j, 0.0) for j in range(3)], 0.01)
    assert not ok
    assert [r["passed"] for r in rows] == [True, True, False]
    for r in rows:
        assert r["p_corrected"] == pytest.approx(min(1.0, 3 * r["p_value"]))


def test_spread_nodes_include_midpoint():
    idx = node_indices(256, 15)
    assert len(idx) == 15 and 128 in idx and idx.min() >= 1 and idx.max() <= 255


def test_chunks_cover_total():
    parts = chunks(2500, 1000)
    assert parts == [(0, 0, 1000), (1, 1000, 1000), (2, 2000, 500)]


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ConfigError):
        worker_count()


# -- trivial cases ----------------------------------------------------------------------------


def _small(kind, section, samples=600, **params):
    cls = xcfg.SECTIONS[kind][section]
    return default_config(kind, samples=samples, seed=11, params={section: cls(**params)})


def test_girsanov_zero_tilt_is_trivial():
    # with A = 0 the shift is linear and both sides are the same law
    rep = run_experiment(_small("girsanov", "girsanov", tilt=0.0, c=0.7, d=0.2, test_nodes=5))
    assert rep.checks[0].passed
    # the control (subtracting a nonzero linear shift) still differs
    assert rep.checks[1].passed


def test_scaling_lambda_one_is_identity():
    rep = run_experiment(_small("scaling", "scaling", lam=1.0, test_nodes=5))
    assert rep.passed
    assert len(rep.checks) == 1 and rep.notes


def test_gibbs_full_window_is_fresh_sample():
    cfg = default_config("gibbs-invariance", samples=600, seed=2,
                         params={"continuous": ContinuousGibbsParams(window=(0.0, 1.0), test_nodes=5),
                                 "discrete": DiscreteGibbsParams(enabled=False)})
    rep = run_experiment(cfg)
    assert rep.checks[0].passed


def test_girsanov_small_passes_and_control_fails():
    rep = run_experiment(_small("girsanov", "girsanov", samples=2000, test_nodes=5))
    assert rep.passed, rep.lines()


def test_rejection_budget_marks_inconclusive(tmp_path):
    params = GirsanovParams(x=(1.0, 0.5, 0.2), y=(1.0, 0.5, 0.2), floor=0.0, tilt=5.0, max_attempts=1,
                            intervals=64, test_nodes=3)
    cfg = default_config("girsanov", samples=100, params={"girsanov": params}, output_dir=str(tmp_path / "out"))
    rep = run_experiment(cfg)
    assert rep.inconclusive and not rep.passed
    assert "rejection_failure" in rep.telemetry
    saved = json.loads((tmp_path / "out" / "report.json").read_text())
    assert saved["inconclusive"] is True


def test_discrete_gibbs_small_chain():
    cfg = default_config("gibbs-invariance", samples=200, seed=4,
                         params={"continuous": ContinuousGibbsParams(test_nodes=3, intervals=64),
                                 "discrete": DiscreteGibbsParams(n_curves=2, m_param=125, burn_in=50,
                                                                 window_width=32, thin=1)})
    rep = run_experiment(cfg)
    names = [c.name for c in rep.checks]
    assert any(n.startswith("discrete:") for n in names)
    assert rep.checks[names.index(next(n for n in names if n.startswith("discrete:")))].passed
    assert rep.telemetry["discrete"]["window_columns"] == [125 - 16, 125 + 16]


# -- determinism ----------------------------------------------------------------------------------


def _csv_bytes(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


def test_rerun_is_bit_identical(tmp_path, monkeypatch):
    base = _small("scaling", "scaling", samples=1500, test_nodes=5)
    outs = []
    for i, workers in enumerate(("1", "1", "2")):
        monkeypatch.setenv(WORKERS_ENV, workers)
        cfg = xcfg.ExperimentConfig(base.kind, base.seed, base.samples, base.level, str(tmp_path / f"r{i}"),
                                    base.params)
        run_experiment(cfg)
        outs.append(_csv_bytes(tmp_path / f"r{i}"))
    assert outs[0] == outs[1] == outs[2]
    assert "statistics.csv" in outs[0]
    manifest = json.loads((tmp_path / "r0" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == base.seed


def test_seed_changes_output(tmp_path):
    a = run_experiment(_small("girsanov", "girsanov", samples=300, test_nodes=3))
    b = run_experiment(default_config("girsanov", samples=300, seed=12,
                                      params={"girsanov": GirsanovParams(test_nodes=3)}))
    assert [r["statistic"] for r in a.rows] != [r["statistic"] for r in b.rows]


# -- CLI ----------------------------------------------------------------------------------------------


def test_cli_no_arguments(capsys):
    assert cli.main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_unknown_flag(capsys):
    assert cli.main(["airy-table", "--kmax", "3", "--bogus"]) == 2
    assert cli.main(["no-such-command"]) == 2


def test_cli_tw_cdf(capsys):
    assert cli.main(["tw-cdf", "--s", "0"]) == 0
    out = capsys.readouterr().out
    assert "0.969373 ±" in out


def test_cli_tw_cdf_table(tmp_path):
    out = tmp_path / "tw.csv"
    assert cli.main(["tw-cdf", "--s", "-1", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s,value,value_m,value_2m,delta" and len(lines) == 3


def test_cli_airy_table(capsys):
    assert cli.main(["airy-table", "--kmax", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "k,omega_k,ai_prime_at_zero"
    assert abs(float(lines[1].split(",")[1]) - 2.338107410459767) < 1e-12


def test_cli_kernel_table(tmp_path):
    out = tmp_path / "k.csv"
    assert cli.main(["kernel-table", "--n-curves", "10", "--grid-pts", "3", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "x,y,s,t,K_N,K_tilde_N,A_ext,abs_diff" and len(rows) == 10
    vals = [list(map(float, r.split(","))) for r in rows[1:]]
    for v in vals:
        # equal times: the shift factor is 1, so K_N and K_tilde_N agree
        assert v[4] == pytest.approx(v[5], abs=1e-12)
        assert v[7] == pytest.approx(abs(v[5] - v[6]), abs=1e-15)


def test_cli_scaling_negative_lambda(tmp_path, capsys):
    path = _write(tmp_path, "bad.toml", 'kind = "scaling"\n[scaling]\nlam = -1.0\n')
    assert cli.main(["test-scaling", "--config", path]) == 2
    assert "lam" in capsys.readouterr().err


def test_cli_kind_mismatch(tmp_path):
    path = _write(tmp_path, "g.toml", 'kind = "girsanov"\n')
    assert cli.main(["test-scaling", "--config", path]) == 2


def test_cli_experiment_exit_codes(tmp_path):
    ok = _write(tmp_path, "ok.toml", 'kind = "girsanov"\nsamples = 1000\n[girsanov]\ntest_nodes = 3\n')
    assert cli.main(["test-girsanov", "--config", ok, "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "statistics.csv").exists()
    # a budget of one proposal cannot produce tightly packed curves: inconclusive, exit 1
    hard = _write(tmp_path, "hard.toml", 'kind = "girsanov"\nsamples = 100\n[girsanov]\n'
                  'x = [1.0, 0.5, 0.2]\ny = [1.0, 0.5, 0.2]\ntilt = 5.0\nmax_attempts = 1\n')
    assert cli.main(["test-girsanov", "--config", hard]) == 1


def test_cli_gap(tmp_path, capsys):
    path = _write(tmp_path, "gap.toml", 'kernel = "airy"\n[[interval]]\ntime = 0.0\nlo = 0.0\n')
    assert cli.main(["gap", "--config", path]) == 0
    assert "0.969373" in capsys.readouterr().out
    bad = _write(tmp_path, "bad.toml", '[[interval]]\nlo = 1.0\nhi = 0.5\n')
    assert cli.main(["gap", "--config", bad]) == 2


def test_cli_certification_failure(tmp_path):
    path = _write(tmp_path, "gap.toml", 'kernel = "finite"\nn_curves = 30\norder = 4\ntol = 1e-9\n'
                  '[[interval]]\nlo = 1.0\nhi = 3.0\n')
    assert cli.main(["gap", "--config", path]) == 3


def test_cli_sample_dpp(tmp_path):
    out = tmp_path / "dpp.csv"
    assert cli.main(["sample-dpp", "--n-curves", "3", "--samples", "4", "--seed", "1", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "sample_id,rank,position,shifted_position" and len(rows) == 13
    first = [list(map(float, r.split(","))) for r in rows[1:4]]
    assert first[0][2] > first[1][2] > first[2][2] > 0


def test_cli_sample_bridges(tmp_path):
    out = tmp_path / "br"
    cfg = _write(tmp_path, "b.toml", f'a = 0.0\nb = 1.0\nx = [2.0, 1.0]\ny = [2.0, 1.0]\ng = 0.0\n'
                 f'values = [1.0, 1.0]\nintervals = 16\nsamples = 3\nseed = 2\nout = "{out}"\n')
    assert cli.main(["sample-bridges", "--config", cfg]) == 0
    files = sorted(f for f in os.listdir(out) if f.endswith(".csv"))
    assert len(files) == 3
    lines = (out / files[0]).read_text().splitlines()
    assert lines[0] == "curve_index,time,value" and len(lines) == 1 + 2 * 17
    first = (out / files[0]).read_bytes()
    assert cli.main(["sample-bridges", "--config", cfg]) == 0
    assert (out / files[0]).read_bytes() == first
    bad = _write(tmp_path, "bad.toml", 'a = 0.0\nb = 1.0\nx = [2.0]\ny = [2.0]\nvalues = [1.0]\nout = "o"\n')
    assert cli.main(["sample-bridges", "--config", bad]) == 2


def test_cli_simulate_mcmc(tmp_path):
    out = tmp_path / "mc"
    args = ["simulate-mcmc", "--n-curves", "2", "--m-param", "27", "--sweeps", "20", "--burn-in", "10",
            "--thin", "10", "--seed", "3", "--out", str(out)]
    assert cli.main(args) == 0
    snaps = sorted(f for f in os.listdir(out) if f.startswith("snapshot_"))
    assert len(snaps) == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["m_param"] == 27 and "step_pmf" in man
    first = (out / snaps[1]).read_bytes()
    assert cli.main(args) == 0
    assert (out / snaps[1]).read_bytes() == first
