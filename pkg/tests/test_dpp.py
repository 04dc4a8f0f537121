import math

import numpy as np
import pytest

from areatilt import airy, dpp, fredholm
from areatilt.errors import DegeneracyError, DomainError
from areatilt.kernels import KernelSpec
from areatilt.quadrature import QuadratureRule, integrate

# int_0^inf x phi_1(x)^2 dx, frozen from mpmath quad with 30 digits
MEAN_PHI1 = 1.5587382736398447


def test_first_moment_oracle():
    import mpmath

    mpmath.mp.dps = 30
    w = mpmath.mpf(airy.airy_zero(1))
    w = mpmath.findroot(lambda t: mpmath.airyai(-t), w)
    norm = mpmath.airyai(-w, derivative=1) ** 2
    ref = mpmath.quad(lambda x: x * mpmath.airyai(x - w) ** 2, [0, 5, 15, 40]) / norm
    assert float(ref) == pytest.approx(MEAN_PHI1, abs=1e-14)
    # virial identity: the mean position is two thirds of the first zero
    assert float(2 * w / 3) == pytest.approx(MEAN_PHI1, abs=1e-14)
    assert dpp.first_moment_phi1() == pytest.approx(MEAN_PHI1, abs=1e-10)


def test_config_validation():
    with pytest.raises(DomainError):
        dpp.FixedTimeConfig(0)
    with pytest.raises(DomainError):
        dpp.FixedTimeConfig(3, x_max=-1.0)
    with pytest.raises(DomainError):
        dpp.FixedTimeConfig(3, resolution=16)
    assert dpp.FixedTimeConfig(4).x_max == pytest.approx(dpp.FixedTimeConfig(4).shift + 12)


def test_delta_det_small_cases():
    w1, w2 = airy.airy_zero(1), airy.airy_zero(2)
    assert dpp.delta_det(1, [0.7]) == pytest.approx(airy.ai(0.7 - w1), abs=1e-15)
    a, b = 2.0, 0.5
    # columns run over x_N, ..., x_1
    hand = airy.ai(b - w1) * airy.ai(a - w2) - airy.ai(a - w1) * airy.ai(b - w2)
    assert dpp.delta_det(2, [a, b]) == pytest.approx(hand, abs=1e-15)
    assert abs(dpp.delta_det(2, [1.1, 1.1])) <= 1e-15
    with pytest.raises(DomainError):
        dpp.delta_det(2, [1.0])


def test_intensity_mass_and_sign():
    for n in (1, 3, 10):
        cfg = dpp.FixedTimeConfig(n)
        grid = dpp.intensity_grid(cfg)
        assert grid.mass == pytest.approx(n, abs=1e-6)
        assert np.all(grid.dens >= 0)
        assert np.all(np.diff(grid.cdf) >= 0)
    assert dpp.intensity(dpp.FixedTimeConfig(2), np.array([-1.0, 0.0]))[0] == 0.0


def test_grid_inverse_cdf_round_trip():
    grid = dpp.intensity_grid(dpp.FixedTimeConfig(3))
    u = np.linspace(0.001, 0.999, 57)
    x = grid.sample(u)
    assert np.all(np.diff(x) > 0)
    assert np.allclose(np.interp(x, grid.x, grid.cdf), u, atol=1e-6)


def test_householder_drop_is_orthonormal_complement():
    rng = np.random.default_rng(3)
    frame = np.linalg.qr(rng.normal(size=(6, 4)))[0]
    v = rng.normal(size=4)
    rest = dpp._householder_drop(frame, v)
    assert rest.shape == (6, 3)
    assert np.allclose(rest.T @ rest, np.eye(3), atol=1e-13)
    assert np.allclose(rest.T @ (frame @ v), 0, atol=1e-13)


@pytest.mark.parametrize("n", [1, 4, 30])
def test_sample_shape_and_order(n):
    cfg = dpp.FixedTimeConfig(n)
    for r in range(5):
        x = dpp.sample_fixed_time(cfg, r)
        assert x.shape == (n,)
        assert np.all(x > 0) and np.all(x < cfg.x_max)
        assert np.all(np.diff(x) < 0)


def test_determinism():
    cfg = dpp.FixedTimeConfig(6)
    a = dpp.sample_many(cfg, 20, seed=11)
    b = dpp.sample_many(cfg, 20, seed=11)
    assert np.array_equal(a, b)
    c = dpp.sample_many(cfg, 10, seed=11, start=10)
    assert np.array_equal(a[10:], c)
    assert not np.array_equal(a, dpp.sample_many(cfg, 20, seed=12))


def test_degeneracy_guard(monkeypatch):
    monkeypatch.setattr(dpp, "FRAME_TOL", 1e9)
    with pytest.raises(DegeneracyError):
        dpp.sample_fixed_time(dpp.FixedTimeConfig(3), 0)


def test_single_curve_mean():
    x = dpp.sample_many(dpp.FixedTimeConfig(1), 100_000, seed=2024)[:, 0]
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - MEAN_PHI1) <= 3 * se


def test_five_curve_histogram():
    n, reps = 5, 20_000
    cfg = dpp.FixedTimeConfig(n)
    pts = dpp.sample_many(cfg, reps, seed=7).ravel()
    edges = np.linspace(0.0, np.quantile(pts, 0.999), 21)
    counts, _ = np.histogram(pts, edges)
    expected = np.array([integrate(lambda x: dpp.intensity(cfg, x), a, b, panels=4) for a, b in zip(edges[:-1], edges[1:])])
    expected *= reps
    se = np.sqrt(expected)
    assert np.max(np.abs(counts - expected) / se) <= 4


def test_two_curve_pair_correlation():
    reps = 100_000
    cfg = dpp.FixedTimeConfig(2)
    x = dpp.sample_many(cfg, reps, seed=99)
    edges = np.linspace(0.5, 5.5, 6)
    counts = np.histogram2d(np.r_[x[:, 0], x[:, 1]], np.r_[x[:, 1], x[:, 0]], [edges, edges])[0]

    def rho2(a, b):
        pa = airy.eigenfunctions(2, a)
        pb = airy.eigenfunctions(2, b)
        kab = np.sum(pa * pb, axis=-1)
        return np.sum(pa * pa, axis=-1) * np.sum(pb * pb, axis=-1) - kab ** 2

    expected = np.empty((5, 5))
    for i in range(5):
        ri = QuadratureRule.gauss_legendre(12, edges[i], edges[i + 1])
        for j in range(5):
            rj = QuadratureRule.gauss_legendre(12, edges[j], edges[j + 1])
            vals = rho2(ri.nodes[:, None], rj.nodes[None, :])
            expected[i, j] = reps * ri.weights @ vals @ rj.weights
    # both orderings of a pair fall in the same diagonal cell, doubling the variance there
    mult = np.where(np.eye(5, dtype=bool), 2.0, 1.0)
    se = np.sqrt(mult * expected)
    assert np.max(np.abs(counts - expected) / se) <= 4


def test_top_point_agrees_with_fredholm():
    n = 100
    cfg = dpp.FixedTimeConfig(n)
    samples = dpp.sample_many(cfg, 4000, seed=5)
    p, se = dpp.top_point_fraction_below(samples, 0.0, cfg.shift)
    ref = fredholm.top_curve_cdf_finite(KernelSpec(n), 0.0, 0.0)
    assert abs(p - ref) <= 3 * se
