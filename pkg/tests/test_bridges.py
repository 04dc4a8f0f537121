import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from areatilt import bridges
from areatilt.bridges import BoundaryData, LineEnsemble, TiltVector
from areatilt.errors import DomainError, RejectionBudgetError
from areatilt.experiments.equivalence import sample_replicated


def test_grid_validation():
    g = bridges.uniform_grid(0.0, 2.0, 8)
    assert len(g) == 9 and g[0] == 0.0 and g[-1] == 2.0
    with pytest.raises(DomainError):
        bridges.uniform_grid(1.0, 1.0)
    with pytest.raises(DomainError):
        bridges.uniform_grid(0.0, 1.0, 0)


def test_tilt_vector_validation():
    with pytest.raises(DomainError):
        TiltVector([1.0, -0.1])
    with pytest.raises(DomainError):
        TiltVector([math.nan])
    assert not TiltVector.zeros(3).active
    assert TiltVector.constant(2, 0.5).scaled(8).values.tolist() == [4.0, 4.0]


def test_ensemble_and_boundary_validation():
    t = np.linspace(0, 1, 5)
    with pytest.raises(DomainError):
        LineEnsemble(t, np.zeros((2, 5)), non_intersecting=True)
    with pytest.raises(DomainError):
        LineEnsemble(t[::-1], np.zeros((1, 5)))
    with pytest.raises(DomainError):
        BoundaryData(0, 1, [1.0, 2.0], [2.0, 1.0])
    bd = BoundaryData(0, 1, [2.0, 1.0], [2.0, 1.0], f=1.5, g=0.0)
    with pytest.raises(DomainError):
        bd.validate(bridges.uniform_grid(0, 1, 4))


def test_bridge_endpoints_and_moments():
    grid = bridges.uniform_grid(0.0, 2.0, 8)
    paths = bridges.brownian_bridges(grid, 1.0, -1.0, 0, size=100_000)
    assert np.all(paths[:, 0] == 1.0) and np.all(paths[:, -1] == -1.0)
    n = len(paths)
    mean = 1.0 - grid
    var = grid * (2.0 - grid) / 2.0
    inner = slice(1, -1)
    m_err = np.abs(paths.mean(0)[inner] - mean[inner]) / np.sqrt(var[inner] / n)
    v_err = np.abs(paths.var(0)[inner] - var[inner]) / (var[inner] * math.sqrt(2 / n))
    assert np.max(m_err) <= 4 and np.max(v_err) <= 4
    # covariance of a standard bridge on [0, 2]: s (2 - t) / 2 for s <= t
    c = np.cov(paths[:, 2], paths[:, 6])[0, 1]
    assert c == pytest.approx(grid[2] * (2 - grid[6]) / 2, abs=4 * 0.5 / math.sqrt(n) * 1.5)


def test_single_bridge_helper():
    grid = bridges.uniform_grid(0, 1, 4)
    p = bridges.sample_brownian_bridge(0, 1, 0.5, 0.2, grid, 3)
    assert p.shape == (5,) and p[0] == 0.5 and p[-1] == 0.2
    with pytest.raises(DomainError):
        bridges.sample_brownian_bridge(0, 2, 0.0, 0.0, grid, 3)


def _gauss_bridge_logdensity(vals, grid):
    """Log density of the interior values of a unit bridge (consecutive Gaussian increments)."""
    dt = np.diff(grid)
    out = 0.0
    for i in range(len(dt)):
        out = out - (vals[i + 1] - vals[i]) ** 2 / (2 * dt[i])
    return out


def test_one_curve_five_nodes_exact_law():
    # interior values (u1, u2, u3) > 0 with density prop. to bridge density * exp(-A * trapezoid area)
    A, x, y = 1.5, 1.0, 0.5
    grid = bridges.uniform_grid(0.0, 1.0, 4)
    dv = 5.0 / 160
    h = (np.arange(160) + 0.5) * dv
    u1, u2, u3 = np.meshgrid(h, h, h, indexing="ij", sparse=True)
    vals = [x, u1, u2, u3, y]
    area = 0.25 * (0.5 * x + u1 + u2 + u3 + 0.5 * y)
    dens = np.exp(_gauss_bridge_logdensity(vals, grid) - A * area)
    z = dens.sum()
    e_mid = float((dens * u2).sum() / z)
    p_low = float((dens * (u2 < 0.6)).sum() / z)
    assert dv < 0.04

    bd = BoundaryData(0.0, 1.0, [x], [y], g=0.0)
    s, stats = bridges.sample_avoiding_tilted_many(bd, [A], grid, 42, 100_000)
    mid = s[:, 0, 2]
    se = mid.std() / math.sqrt(len(mid))
    # midpoint-rule quadrature error is O(dv^2); allow it on top of 4 SE
    assert abs(mid.mean() - e_mid) <= 4 * se + 2e-3
    assert abs(np.mean(mid < 0.6) - p_low) <= 4 * math.sqrt(p_low * (1 - p_low) / len(mid)) + 2e-3
    assert stats.accepted == 100_000 and stats.attempts >= stats.accepted


def test_two_curves_three_nodes_exact_law():
    A = np.array([0.7, 2.0])
    x = np.array([1.5, 0.6])
    y = np.array([1.2, 0.3])
    grid = np.array([0.0, 0.5, 1.0])
    h = (np.arange(1200) + 0.5) * 0.005
    u, v = np.meshgrid(h, h, indexing="ij")
    logd = 0.0
    for k, w in enumerate((u, v)):
        logd = logd + _gauss_bridge_logdensity([x[k], w, y[k]], grid)
        logd = logd - A[k] * 0.25 * (x[k] + 2 * w + y[k])
    dens = np.exp(logd) * (u > v)
    z = dens.sum()
    e_top, e_bot = float((dens * u).sum() / z), float((dens * v).sum() / z)
    bd = BoundaryData(0.0, 1.0, x, y, g=0.0)
    s, _ = bridges.sample_avoiding_tilted_many(bd, A, grid, 7, 100_000)
    for got, ref in ((s[:, 0, 1], e_top), (s[:, 1, 1], e_bot)):
        assert abs(got.mean() - ref) <= 4 * got.std() / math.sqrt(len(got)) + 1e-3


def test_ordering_and_floor_respected():
    grid = bridges.uniform_grid(0, 1, 64)
    bd = BoundaryData(0.0, 1.0, [2.0, 1.0], [2.0, 1.0], g=0.0)
    s, stats = bridges.sample_avoiding_tilted_many(bd, [1.0, 1.0], grid, 1, 200)
    assert np.all(s[:, 0, 1:-1] > s[:, 1, 1:-1]) and np.all(s[:, 1, 1:-1] > 0)
    assert 0 < stats.acceptance_rate <= 1


def test_infinite_floor_with_tilt_rejected():
    grid = bridges.uniform_grid(0, 1, 8)
    bd = BoundaryData(0.0, 1.0, [1.0], [1.0])
    with pytest.raises(DomainError):
        bridges.sample_avoiding_tilted(bd, [1.0], grid, 0)
    e = bridges.sample_avoiding_tilted(bd, [0.0], grid, 0)
    with pytest.raises(DomainError):
        bridges.tilt_weight(e, -math.inf, [1.0])


def test_rejection_budget():
    grid = bridges.uniform_grid(0, 1, 64)
    bd = BoundaryData(0.0, 1.0, [0.3, 0.2, 0.1], [0.3, 0.2, 0.1], f=0.35, g=0.0)
    with pytest.raises(RejectionBudgetError) as err:
        bridges.sample_avoiding_tilted(bd, [0, 0, 0], grid, 0, max_attempts=500)
    assert err.value.accepted == 0 and err.value.attempts >= 500


def test_determinism_and_telemetry():
    grid = bridges.uniform_grid(0, 1, 32)
    bd = BoundaryData(0.0, 1.0, [2.0, 1.0], [2.0, 1.0], g=0.0)
    a = bridges.sample_avoiding_tilted(bd, [1.0, 1.0], grid, 5)
    b = bridges.sample_avoiding_tilted(bd, [1.0, 1.0], grid, 5)
    assert np.array_equal(a.values, b.values)
    assert set(a.info) >= {"attempts", "accepted", "acceptance_rate"}


def test_parabolic_shift_round_trip_and_boundary():
    grid = bridges.uniform_grid(-1, 2, 30)
    e = LineEnsemble(grid, bridges.brownian_bridges(grid, [1.0, 0.0], [0.5, -0.5], 3))
    back = bridges.parabolic_shift(bridges.parabolic_shift(e, 2.0, -1.0, 0.3), 2.0, -1.0, 0.3, "subtract")
    assert np.allclose(back.values, e.values, atol=1e-14)
    bd = BoundaryData(-1.0, 2.0, [1.0, 0.0], [0.5, -0.5], f=3.0, g=lambda s: -1 - s ** 2)
    sb = bridges.shift_boundary(bd, 2.0, -1.0, 0.3)
    h = bridges.parabola(2.0, -1.0, 0.3)
    assert np.allclose(sb.x, bd.x + h(-1.0)) and np.allclose(sb.y, bd.y + h(2.0))
    assert np.allclose(sb.floor(grid), bd.floor(grid) + h(grid))
    assert np.allclose(sb.ceiling(grid), 3.0 + h(grid))


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.3, 3.0), r=st.floats(-2, 2), u=st.floats(-2, 2), seed=st.integers(0, 10 ** 6))
def test_affine_transform_preserves_tilt_weight(lam, r, u, seed):
    grid = bridges.uniform_grid(0, 1, 16)
    vals = bridges.brownian_bridges(grid, [3.0, 2.0], [3.0, 2.0], seed)
    e = LineEnsemble(grid, np.abs(vals) + 0.1, tilts=TiltVector([0.4, 1.3]))
    t = bridges.affine_transform(e, lam, r, u)
    assert t.times[0] == pytest.approx(u) and t.times[-1] == pytest.approx(1 / lam ** 2 + u)
    assert np.allclose(t.tilts.values, e.tilts.values * lam ** 3)
    w0 = bridges.tilt_weight(e, 0.0, e.tilts)
    w1 = bridges.tilt_weight(t, r, t.tilts)
    assert w1 == pytest.approx(w0, rel=1e-12)
    inv = bridges.affine_transform(t, 1 / lam, -r * lam, -u * lam ** 2)
    assert np.allclose(inv.times, e.times) and np.allclose(inv.values, e.values)


def test_affine_boundary_matches_transform():
    bd = BoundaryData(0.0, 1.0, [2.0, 1.0], [1.5, 0.5], f=lambda s: 4 + s, g=0.0)
    lam, r, u = 2 ** (-1 / 3), 0.5, -1.0
    t = bridges.affine_boundary(bd, lam, r, u)
    assert t.a == pytest.approx(u) and t.b == pytest.approx(1 / lam ** 2 + u)
    assert np.allclose(t.x, bd.x / lam + r)
    s = np.linspace(t.a, t.b, 7)
    assert np.allclose(t.ceiling(s), (4 + lam ** 2 * (s - u)) / lam + r)
    assert np.allclose(t.floor(s), r)


def test_bridge_scaling_law():
    # F maps a bridge on [0,1] to a bridge on [0, 1/lam^2]: the variance at s is s (1 - lam^2 s)
    lam = 0.8
    grid = bridges.uniform_grid(0, 1, 16)
    e = LineEnsemble(grid, bridges.brownian_bridges(grid, 0.0, 0.0, 9, size=100_000))
    t = bridges.affine_transform(e, lam)
    s = t.times[8]
    v = t.values[:, 8].var()
    ref = s * (1 - lam ** 2 * s)
    assert abs(v - ref) <= 4 * ref * math.sqrt(2 / 100_000)


def test_resample_window_touches_only_window():
    grid = bridges.uniform_grid(0, 1, 32)
    bd = BoundaryData(0.0, 1.0, [3.0, 2.0, 1.0], [3.0, 2.0, 1.0], g=0.0)
    s, _ = bridges.sample_avoiding_tilted_many(bd, [1, 1, 1], grid, 2, 50)
    new = bridges.resample_window(s, grid, (1, 2), (8, 20), [1, 1, 1], math.inf, 0.0, 3)
    mask = np.zeros(s.shape, bool)
    mask[:, 1:3, 9:20] = True
    assert np.array_equal(new[~mask], s[~mask])
    assert not np.array_equal(new[mask], s[mask])
    assert np.all(np.diff(new[:, :, 1:-1], axis=1) < 0) and np.all(new[:, 2, 1:-1] > 0)
    again = bridges.resample_window(s, grid, (1, 2), (8, 20), [1, 1, 1], math.inf, 0.0, 3)
    assert np.array_equal(new, again)
    with pytest.raises(DomainError):
        bridges.resample_window(s, grid, (2, 3), (8, 20), [1, 1, 1], math.inf, 0.0, 3)


def test_resample_window_preserves_exact_law():
    # a heat-bath move started from the exact law stays in it (means at a window node)
    grid = bridges.uniform_grid(0, 1, 16)
    bd = BoundaryData(0.0, 1.0, [2.0, 1.0], [2.0, 1.0], g=0.0)
    s, _ = bridges.sample_avoiding_tilted_many(bd, [1, 1], grid, 21, 20_000)
    moved = bridges.resample_window(s, grid, (0, 1), (4, 12), [1, 1], math.inf, 0.0, 22)
    fresh, _ = bridges.sample_avoiding_tilted_many(bd, [1, 1], grid, 23, 20_000)
    for k in range(2):
        a, b = moved[:, k, 8], fresh[:, k, 8]
        assert abs(a.mean() - b.mean()) <= 4 * math.sqrt(a.var() / len(a) + b.var() / len(b))


def test_grid_refinement_moves_midpoint_by_less_than_one_se():
    # default spacing 1/256 against 1/512: midpoint means agree within one standard error of the difference
    bd = BoundaryData(0, 1, (2.0, 1.0), (2.0, 1.0), g=0.0)
    means, ses = [], []
    for n in (256, 512):
        v, _ = sample_replicated(bd, (1.0, 1.0), bridges.uniform_grid(0, 1, n), 20_000, 3, n)
        mid = v[:, :, n // 2]
        means.append(mid.mean(axis=0))
        ses.append(mid.std(axis=0) / np.sqrt(len(mid)))
    se = np.hypot(ses[0], ses[1])
    assert np.all(np.abs(means[0] - means[1]) < se)
