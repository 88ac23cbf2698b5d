import math
import warnings

import numpy as np
import pytest
from scipy import stats

from geodephase.stochastic import (
    Diffusion2D,
    ExponentialAngle,
    FixedAngle,
    GaussianAngle,
    OuAngularVelocity3D,
    StrongCollision3D,
    derive_seed,
    omega_sq_mean_from_tau_p,
    refine_grid,
    sample_collisions,
    sample_diffusion_2d,
    sample_ou_omega,
    tau_p_from_omega,
    trajectory_rng,
)

GRID = np.linspace(0.0, 2.0, 5)


# -- RNG discipline ----------------------------------------------------------


def test_streams_are_reproducible_and_distinct():
    a = trajectory_rng(5, 3).standard_normal(4)
    np.testing.assert_array_equal(a, trajectory_rng(5, 3).standard_normal(4))
    assert not np.array_equal(a, trajectory_rng(5, 4).standard_normal(4))
    assert not np.array_equal(a, trajectory_rng(6, 3).standard_normal(4))


def test_derive_seed_is_stable_and_64_bit():
    s = derive_seed(123, 2)
    assert s == derive_seed(123, 2)
    assert 0 <= s < 2**64
    assert len({derive_seed(123, j) for j in range(50)}) == 50


@pytest.mark.parametrize("bad", [-1, 2**64])
def test_seed_range(bad):
    with pytest.raises(ValueError):
        trajectory_rng(bad)


def test_independent_streams_uncorrelated():
    t = np.linspace(0, 1, 2001)
    a = np.diff(sample_diffusion_2d(1.0, t, 9, 0).theta)
    b = np.diff(sample_diffusion_2d(1.0, t, 9, 1).theta)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3 / math.sqrt(a.size)


# -- diffusion ------------------------------------------------------------------


def test_diffusion_zero_d1():
    tr = sample_diffusion_2d(0.0, GRID, 1)
    np.testing.assert_array_equal(tr.theta, np.zeros(5))


def test_diffusion_starts_at_zero_when_grid_does():
    assert sample_diffusion_2d(1.0, GRID, 1).theta[0] == 0.0


def test_diffusion_determinism():
    a = sample_diffusion_2d(0.7, GRID, 77, 12).theta
    np.testing.assert_array_equal(a, sample_diffusion_2d(0.7, GRID, 77, 12).theta)


def test_diffusion_variance_chi_square_band():
    n = 100_000
    x = np.array([sample_diffusion_2d(1.0, [0.0, 1.0], 2024, i).theta[-1] for i in range(n)])
    var = x.var(ddof=1)
    # var * (n-1) / 2 ~ chi2(n-1); 3-sigma band of the sample variance
    band = 3 * 2.0 * math.sqrt(2.0 / (n - 1))
    assert abs(var - 2.0) < band


def test_diffusion_marginal_ks():
    d1, t = 0.4, 2.5
    x = np.array([sample_diffusion_2d(d1, [0.0, 1.0, t], 31, i).theta[-1] for i in range(10_000)])
    p = stats.kstest(x, "norm", args=(0.0, math.sqrt(2 * d1 * t))).pvalue
    assert p > 0.01


def test_diffusion_rejects_bad_grid():
    with pytest.raises(ValueError):
        sample_diffusion_2d(1.0, [0.0, 1.0, 1.0], 1)
    with pytest.raises(ValueError):
        sample_diffusion_2d(-1.0, GRID, 1)


# -- angle laws ------------------------------------------------------------------


def test_angle_laws_respect_support():
    rng = np.random.default_rng(0)
    for law in (GaussianAngle(2.0), ExponentialAngle(2.0), FixedAngle(math.pi)):
        x = law.sample(rng, 20_000)
        assert x.size == 20_000
        assert np.all(x > -math.pi) and np.all(x <= math.pi)
    assert np.all(ExponentialAngle(1.0).sample(rng, 1000) >= 0)


def test_gaussian_rejection_not_wrapping():
    # Rejection keeps the truncated-normal second moment; wrapping would not.
    law = GaussianAngle(1.5)
    x = law.sample(np.random.default_rng(1), 200_000)
    a, b = -math.pi / 1.5, math.pi / 1.5
    want = stats.truncnorm(a, b, scale=1.5).var()
    assert law.mean_square() == pytest.approx(want, rel=1e-6)
    assert (x**2).mean() == pytest.approx(want, rel=0.02)


def test_angle_law_moments():
    trunc = stats.truncnorm(-2 * math.pi, 2 * math.pi, scale=0.5).var()
    assert GaussianAngle(0.5).mean_square() == pytest.approx(trunc, rel=1e-9)
    assert GaussianAngle(0.5).mean_square() == pytest.approx(0.25, rel=1e-7)
    assert FixedAngle(0.3).mean_cos(2.0) == pytest.approx(math.cos(0.6))
    assert GaussianAngle(0.5).mean_cos(0.1) == pytest.approx(math.exp(-0.5 * 0.0025), rel=1e-9)
    e = ExponentialAngle(0.2)
    x = e.sample(np.random.default_rng(2), 100_000)
    assert np.cos(0.7 * x).mean() == pytest.approx(e.mean_cos(0.7), abs=3e-3)


@pytest.mark.parametrize("bad", [lambda: FixedAngle(-math.pi), lambda: GaussianAngle(0), lambda: ExponentialAngle(-1)])
def test_angle_law_validation(bad):
    with pytest.raises(ValueError):
        bad()


# -- collisions ---------------------------------------------------------------------


def test_poisson_event_count():
    law = GaussianAngle(0.5)
    counts = np.array([len(sample_collisions(1.0, law, 0.01, 10.0, 3, i).collisions) for i in range(10_000)])
    assert abs(counts.mean() - 10.0) < 3 * math.sqrt(10.0 / counts.size)
    assert counts.var() == pytest.approx(10.0, rel=0.06)


def test_waiting_times_exponential():
    train = sample_collisions(2.0, GaussianAngle(0.5), 0.01, 40_000.0, 8).collisions
    waits = np.diff(np.concatenate([[0.0], train.times]))
    assert stats.kstest(waits, "expon", args=(0, 2.0)).pvalue > 0.01


def test_axes_perpendicular_to_current_k_and_uniform():
    train = sample_collisions(1.0, GaussianAngle(0.8), 0.01, 5000.0, 21).collisions
    dots = np.einsum("ij,ij->i", train.axes, train.k[:-1])
    assert np.abs(dots).max() < 1e-12
    np.testing.assert_allclose(np.linalg.norm(train.axes, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(train.k[0], [0, 0, 1])
    # after many collisions k covers the sphere: mean of k_z near zero
    assert abs(train.k[len(train.k) // 10 :, 2].mean()) < 0.1
    # k evolves by rotation of theta about the axis
    c = np.einsum("ij,ij->i", train.k[:-1], train.k[1:])
    np.testing.assert_allclose(c, np.cos(train.thetas), atol=1e-12)


def test_fixed_zero_angle_gives_identity_events():
    train = sample_collisions(1.0, FixedAngle(0.0), 0.01, 20.0, 1).collisions
    assert len(train) > 0
    assert np.all(train.thetas == 0.0)
    np.testing.assert_allclose(train.k, np.tile([0, 0, 1.0], (len(train) + 1, 1)))


def test_infinite_tau_p_has_no_events():
    assert len(sample_collisions(math.inf, GaussianAngle(0.5), 0.01, 100.0, 1).collisions) == 0


def test_collision_duration_warning():
    with pytest.warns(UserWarning):
        sample_collisions(1.0, GaussianAngle(0.5), 0.5, 10.0, 1)


def test_collision_determinism():
    a = sample_collisions(1.0, GaussianAngle(0.5), 0.01, 50.0, 99, 7).collisions
    b = sample_collisions(1.0, GaussianAngle(0.5), 0.01, 50.0, 99, 7).collisions
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.axes, b.axes)
    np.testing.assert_array_equal(a.thetas, b.thetas)


def test_local_event():
    train = sample_collisions(1.0, GaussianAngle(0.5), 0.01, 10.0, 2).collisions
    e = train.local_event(0)
    assert e.theta == train.thetas[0] and e.duration == 0.01


# -- OU ---------------------------------------------------------------------------


def test_ou_zero_strength():
    tr = sample_ou_omega(0.0, 1.0, np.linspace(0, 5, 11), 1)
    assert np.all(tr.omega == 0.0)


def test_ou_refines_coarse_grid():
    tr = sample_ou_omega(1.0, 0.5, [0.0, 1.0, 2.0], 1)
    assert np.diff(tr.t).max() <= 0.05 + 1e-15
    assert tr.t[0] == 0.0 and tr.t[-1] == 2.0


def test_ou_stationary_variance_per_component():
    # stationary start: the first sample of every path has the stationary law
    w2, tau_c = 2.5, 0.3
    x = np.array([sample_ou_omega(w2, tau_c, [0.0, 0.01], 44, i).omega[0] for i in range(100_000)])
    n = x.shape[0]
    band = 3 * w2 * math.sqrt(2.0 / (n - 1))
    for c in range(3):
        assert abs(x[:, c].var(ddof=1) - w2) < band


def test_ou_long_path_variance_and_components_independent():
    tr = sample_ou_omega(1.0, 1.0, np.linspace(0, 20_000, 200_001), 5)
    w = tr.omega
    np.testing.assert_allclose(w.var(axis=0), 1.0, rtol=0.05)
    c = np.corrcoef(w.T)
    assert np.abs(c[np.triu_indices(3, 1)]).max() < 0.03


def test_ou_lag_one_autocorrelation():
    tau_c, dt = 50.0, 0.5
    tr = sample_ou_omega(1.0, tau_c, np.arange(0, 200_000 * dt, dt), 6)
    w = tr.omega[:, 0]
    r1 = np.corrcoef(w[:-1], w[1:])[0, 1]
    assert r1 == pytest.approx(math.exp(-dt / tau_c), abs=2e-3)


def test_ou_exact_discretization_no_euler_bias():
    # Large steps relative to tau_c/10 are refined, but coefficients are exact per step.
    tau_c = 1.0
    x = np.array([sample_ou_omega(1.0, tau_c, [0.0, 3.0], 8, i).omega[-1, 0] for i in range(20_000)])
    assert x.var() == pytest.approx(1.0, rel=0.05)


# -- model types -------------------------------------------------------------------


def test_tau_p_conversion_helpers():
    assert omega_sq_mean_from_tau_p(2.0, 0.1) == pytest.approx(5.0)
    assert tau_p_from_omega(5.0, 0.1) == pytest.approx(2.0)
    assert tau_p_from_omega(0.0, 0.1) == math.inf
    m = OuAngularVelocity3D.from_tau_p(4.0, 0.5)
    assert m.tau_p == pytest.approx(4.0)
    assert m.omega_rms_tau_c() == pytest.approx(math.sqrt(0.5) * 0.5)


def test_model_validation():
    with pytest.raises(ValueError):
        Diffusion2D(-1.0)
    with pytest.raises(ValueError):
        StrongCollision3D(0.0, GaussianAngle(0.5), 0.01)
    with pytest.raises(ValueError):
        OuAngularVelocity3D(1.0, 0.0)
    assert StrongCollision3D(math.inf, FixedAngle(0.3), 0.01).omega_rms_tau_c() == pytest.approx(0.3)


def test_refine_grid_keeps_original_points():
    t = np.array([0.0, 0.33, 1.0, 1.05])
    fine, idx = refine_grid(t, 0.1)
    np.testing.assert_array_equal(fine[idx], t)
    assert np.diff(fine).max() <= 0.1 + 1e-15
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fine2, idx2 = refine_grid(t, 10.0)
    np.testing.assert_array_equal(fine2, t)
