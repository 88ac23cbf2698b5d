import math
from dataclasses import replace

import numpy as np
import pytest

from geodephase.analysis import fit_rate
from geodephase.ensemble import (
    BLOCK_SIZE,
    EnsembleSpec,
    GridTooCoarse,
    ou_max_step,
    run,
    run_2d,
    run_3d_collisions,
    run_3d_ou,
    uniform_grid,
)
from geodephase.gamma import GammaTensor, from_delta_g, jones_pines
from geodephase.propagator import EffectiveHamiltonianSample, integrate_lab_frame
from geodephase.stochastic import (
    Diffusion2D,
    FixedAngle,
    GaussianAngle,
    OuAngularVelocity3D,
    StrongCollision3D,
    sample_collisions,
    sample_diffusion_2d,
    sample_ou_omega,
)
from geodephase.su2 import IDENTITY, Polarization, Rotor, apply, compose


def spec(model, gamma, n=200, t_max=2.0, points=21, seed=1, **kw):
    return EnsembleSpec(model=model, gamma=gamma, n_traj=n, t_grid=uniform_grid(t_max, points), root_seed=seed, **kw)


# -- EnsembleSpec validation ----------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        spec(Diffusion2D(1.0), GammaTensor(), n=0)
    with pytest.raises(ValueError):
        EnsembleSpec(Diffusion2D(1.0), GammaTensor(), 10, np.array([0.0, 1.0, 3.0]), 1)
    with pytest.raises(ValueError):
        spec(Diffusion2D(1.0), GammaTensor(), initial_u=np.array([0, 0, 1.1]))


# -- 2D ------------------------------------------------------------------------


def test_2d_no_lag_is_exactly_one():
    c = run_2d(spec(Diffusion2D(1.0), GammaTensor(), n=3000))
    assert np.all(c.mean_uz == 1.0)
    assert np.all(c.stderr_uz == 0.0)


def test_2d_value_at_half():
    s = spec(Diffusion2D(1.0), GammaTensor(1.0, 2.0), n=100_000, t_max=0.5, points=2)
    c = run_2d(s)
    assert abs(c.mean_uz[-1] - math.exp(-0.5)) < 3 * c.stderr_uz[-1]


def test_2d_jones_pines():
    s = spec(Diffusion2D(0.2), jones_pines(1.5), n=100_000, t_max=2.0, points=3, seed=5)
    c = run_2d(s)
    assert abs(c.mean_uz[-1] - math.exp(-0.4)) < 3 * c.stderr_uz[-1]


def test_2d_single_trajectory_reduction():
    s = spec(Diffusion2D(0.8), from_delta_g(0.7), n=1, seed=17)
    c = run_2d(s)
    theta = sample_diffusion_2d(0.8, s.t_grid, 17, 0).theta
    np.testing.assert_array_equal(c.mean_uz, np.cos(0.7 * theta))
    assert np.all(c.stderr_uz == 0.0)
    ref = [apply(Rotor.from_axis_angle([1, 0, 0], 0.7 * th), Polarization.z()).u for th in theta]
    np.testing.assert_allclose(c.mean_u, ref, atol=1e-14)


# -- collisions --------------------------------------------------------------------


def test_collisions_zero_angle_is_exactly_one():
    c = run_3d_collisions(spec(StrongCollision3D(0.5, FixedAngle(0.0), 0.01), from_delta_g(0.3), n=500, t_max=20))
    assert np.all(c.mean_uz == 1.0)


def test_collisions_single_trajectory_matches_rotor_composition():
    model = StrongCollision3D(1.0, GaussianAngle(0.7), 0.05)
    g = jones_pines(2.5)
    s = spec(model, g, n=1, t_max=30.0, points=301, seed=3)
    c = run_3d_collisions(s)
    train = sample_collisions(1.0, model.angle_law, 0.05, 30.0, 3, 0).collisions
    assert len(train) > 10
    r = IDENTITY
    for k, t in enumerate(s.t_grid):
        r_done = IDENTITY
        partial = None
        for i in range(len(train)):
            lab = Rotor.from_axis_angle(train.axes[i], train.thetas[i] * g.delta_gamma_perp())
            if train.times[i] + 0.05 <= t:
                r_done = compose(lab, r_done)
            elif train.times[i] <= t:
                frac = (t - train.times[i]) / 0.05
                partial = Rotor.from_axis_angle(train.axes[i], frac * train.thetas[i] * g.delta_gamma_perp())
                break
            else:
                break
        r = r_done if partial is None else compose(partial, r_done)
        np.testing.assert_allclose(c.mean_u[k], apply(r, Polarization.z()).u, atol=1e-12)


def test_collisions_lab_rotor_equals_local_event_transform():
    # Lab rotor per event equals the local-frame closed form conjugated to the event axis.
    from geodephase.propagator import collision_rotor_lab_frame

    g = from_delta_g(0.4)
    train = sample_collisions(1.0, GaussianAngle(1.0), 0.01, 20.0, 9).collisions
    for i in range(len(train)):
        local = collision_rotor_lab_frame(train.local_event(i), g)
        axis, angle = local.axis_angle()
        lab = Rotor.from_axis_angle(train.axes[i], train.thetas[i] * g.delta_gamma_perp())
        assert lab.axis_angle()[1] == pytest.approx(angle, abs=1e-12)


# -- OU ----------------------------------------------------------------------------


def test_ou_zero_strength_is_exactly_one():
    c = run_3d_ou(spec(OuAngularVelocity3D(0.0, 0.5), from_delta_g(0.3), n=50, t_max=2.0))
    assert np.all(c.mean_uz == 1.0)


def test_ou_single_trajectory_matches_propagator():
    model = OuAngularVelocity3D(4.0, 0.2)
    g = GammaTensor(1.1, 1.3)
    s = spec(model, g, n=1, t_max=2.0, points=11, seed=12)
    assert ou_max_step(model, g) == pytest.approx(0.02)
    c = run_3d_ou(s)
    tr = sample_ou_omega(4.0, 0.2, s.t_grid, 12, 0)
    dt = tr.t[1] - tr.t[0]
    per = (tr.t.size - 1) // (s.t_grid.size - 1)
    samples = [EffectiveHamiltonianSample(w, g) for w in tr.omega[:-1]]
    for k in range(1, s.t_grid.size):
        lab = integrate_lab_frame(samples[: k * per], dt)
        np.testing.assert_allclose(c.mean_u[k], apply(lab, Polarization.z()).u, atol=1e-11)
    np.testing.assert_array_equal(c.mean_u[0], [0, 0, 1])


def test_ou_rejects_coarse_dt():
    model = OuAngularVelocity3D(1.0, 1.0)
    with pytest.raises(GridTooCoarse):
        run_3d_ou(spec(model, from_delta_g(0.05), n=2, dt=0.5))
    # an explicit finer step is accepted
    run_3d_ou(spec(model, from_delta_g(0.05), n=2, dt=0.05))


def test_ou_max_step_lag_limit():
    model = OuAngularVelocity3D(100.0, 1.0)
    assert ou_max_step(model, from_delta_g(0.5)) == pytest.approx(0.1 / (0.5 * 10.0))


def test_ou_halving_dt_changes_rate_below_one_percent():
    # ratio 0.1: rate about (4/3) * 0.01 / tau_c
    model = OuAngularVelocity3D(0.04, 1.0)
    g = from_delta_g(0.5)
    rate0 = 4 / 3 * 0.25 * 0.04
    base = spec(model, g, n=20_000, t_max=1.5 / rate0, points=60, seed=21)
    r1 = fit_rate(run_3d_ou(replace(base, dt=0.1))).rate
    r2 = fit_rate(run_3d_ou(replace(base, dt=0.05))).rate
    assert abs(r2 / r1 - 1) < 0.01


# -- reduction contract ----------------------------------------------------------


def test_initial_point_exact_for_every_model():
    u0 = np.array([0.3, -0.4, 0.5])
    for model in (Diffusion2D(1.0), StrongCollision3D(0.1, GaussianAngle(1.0), 0.01), OuAngularVelocity3D(2.0, 0.3)):
        c = run(spec(model, from_delta_g(0.6), n=BLOCK_SIZE + 37, initial_u=u0))
        assert c.mean_uz[0] == 0.5
        np.testing.assert_array_equal(c.mean_u[0], u0)
        assert np.all(np.abs(c.mean_uz) <= 1 + 3 * c.stderr_uz + 1e-15)


@pytest.mark.parametrize(
    "model",
    [Diffusion2D(1.0), StrongCollision3D(0.2, GaussianAngle(1.0), 0.01), OuAngularVelocity3D(2.0, 0.3)],
    ids=["2d", "collisions", "ou"],
)
def test_worker_count_invariance(model):
    s = spec(model, from_delta_g(0.6), n=3 * BLOCK_SIZE + 5, seed=99)
    a = run(s, workers=1)
    b = run(s, workers=4)
    c = run(s, workers=3)
    for other in (b, c):
        assert a.mean_uz.tobytes() == other.mean_uz.tobytes()
        assert a.stderr_uz.tobytes() == other.stderr_uz.tobytes()


def test_stderr_scales_as_inverse_sqrt_n():
    errs = []
    for n in (100, 1000, 10_000):
        c = run_2d(spec(Diffusion2D(1.0), GammaTensor(1.0, 2.0), n=n, t_max=1.0, points=11, seed=2))
        errs.append(c.stderr_uz[1:].mean())
    for lo, hi in zip(errs[1:], errs[:-1]):
        assert hi / lo == pytest.approx(math.sqrt(10), rel=0.15)


def test_reduction_matches_plain_numpy_statistics():
    s = spec(Diffusion2D(1.0), from_delta_g(0.9), n=2 * BLOCK_SIZE + 300, t_max=1.0, points=5, seed=4)
    c = run_2d(s)
    samples = np.array([np.cos(0.9 * sample_diffusion_2d(1.0, s.t_grid, 4, i).theta) for i in range(s.n_traj)])
    np.testing.assert_allclose(c.mean_uz, samples.mean(axis=0), rtol=0, atol=1e-14)
    np.testing.assert_allclose(c.stderr_uz, samples.std(axis=0, ddof=1) / math.sqrt(s.n_traj), rtol=1e-10)


def test_run_dispatch_rejects_unknown_model():
    with pytest.raises(TypeError):
        run(replace(spec(Diffusion2D(1.0), GammaTensor()), model=object()))
