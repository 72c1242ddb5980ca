"""Lorenz integration, training pairs, recursive rollouts, attractor metrics."""

import numpy as np
import pytest

from randfeat import rfr, tuning
from randfeat.dynamics import (BlowUpError, Trajectory, emulator_rollout,
                               euler_integrate, forecast_valid_time,
                               lorenz_vector_field, make_training_pairs,
                               marginal_cdf_distance, rf_rollout,
                               whitened_step_predictor)
from randfeat.features import sample_features
from test_features import isotropic_dist


def test_vector_field_hand_values():
    f = lorenz_vector_field(np.array([1.0, 1.0, 1.0]))
    assert np.allclose(f, [0.0, 26.0, 1.0 - 8.0 / 3.0])
    assert np.allclose(lorenz_vector_field(np.zeros(3)), 0.0)


def test_vector_field_affine_in_y():
    x, z = 0.7, 1.3
    ys = np.array([0.0, 1.0, 2.0])
    vals = np.array([lorenz_vector_field(np.array([x, y, z]))[0] for y in ys])
    assert np.allclose(np.diff(vals), 10.0)


def test_euler_single_step_hand_value():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 1)
    assert np.allclose(traj.states[1], [1.0, 1.26, 1.0 + 0.01 * (1 - 8 / 3)])


def test_euler_zero_steps():
    traj = euler_integrate(np.array([1.0, 2.0, 3.0]), 0.01, 0)
    assert traj.states.shape == (1, 3)


def test_euler_first_order_convergence():
    s0 = np.array([1.0, 1.0, 1.0])
    ref = euler_integrate(s0, 1e-5, 1000).states[-1]  # t = 0.01 reference
    err = []
    for dt in (0.01, 0.005):
        val = euler_integrate(s0, dt, int(round(0.01 / dt))).states[-1]
        err.append(np.linalg.norm(val - ref))
    ratio = err[0] / err[1]
    assert 1.6 < ratio < 2.4  # halving dt halves the error


def test_euler_long_run_bounded():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 2_000_000)
    assert np.abs(traj.states).max() <= 100.0


def test_euler_blow_up_reports_step():
    with pytest.raises(BlowUpError) as err:
        euler_integrate(np.array([1.0, 1.0, 1.0]), 1.0, 100)
    assert err.value.step < 100


def test_training_pairs_noise_free_shift():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 50)
    X, Y = make_training_pairs(traj, 10, np.zeros((3, 3)),
                               np.random.default_rng(0), sampling="sequential")
    assert np.array_equal(X, traj.states[:10])
    assert np.array_equal(Y, traj.states[1:11])


def test_training_pairs_noise_level():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 11_000)
    X, Y = make_training_pairs(traj, 10_000, 1e-4 * np.eye(3),
                               np.random.default_rng(1))
    # replay the index draw to locate the true successors
    rng = np.random.default_rng(1)
    idx = rng.choice(len(traj) - 1, size=10_000, replace=False)
    resid = Y - traj.states[idx + 1]
    std = resid.std(axis=0)
    assert np.all(np.abs(std - 1e-2) < 1e-3)


def test_training_pairs_are_measure_preserving():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 20_000)
    X, _ = make_training_pairs(traj, 2000, np.zeros((3, 3)),
                               np.random.default_rng(2))
    ks = marginal_cdf_distance(X, traj.states)
    assert np.all(ks <= 0.05)


def test_training_pairs_validation():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 10)
    with pytest.raises(ValueError):
        make_training_pairs(traj, 11, np.zeros((3, 3)), np.random.default_rng(0))


def test_rollout_identity_map_constant():
    traj = emulator_rollout(lambda s: s, np.array([1.0, 2.0, 3.0]), 10)
    assert np.allclose(traj.states, [1.0, 2.0, 3.0])


def test_rollout_true_map_matches_euler_bitwise():
    dt = 0.01
    s0 = np.array([1.0, 1.0, 1.0])
    reference = euler_integrate(s0, dt, 500)

    def step(s):
        # same arithmetic as the integrator kernel
        x, y, z = s
        return np.array([x + dt * 10.0 * (y - x),
                         y + dt * (x * (28.0 - z) - y),
                         z + dt * (x * y - 8.0 / 3.0 * z)])

    rolled = emulator_rollout(step, s0, 500, dt=dt)
    assert np.array_equal(rolled.states, reference.states)


def test_rollout_blow_up_aborts_with_diagnostics():
    with pytest.raises(BlowUpError) as err:
        emulator_rollout(lambda s: 10.0 * s, np.ones(3), 400)
    assert err.value.step < 400
    assert err.value.states is not None


def test_rf_rollout_matches_generic_rollout():
    rng = np.random.default_rng(3)
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 800)
    X_raw, Y_raw = make_training_pairs(traj, 300, 1e-4 * np.eye(3), rng)
    X, Y, sigma, tf = tuning.whiten_data(X_raw, Y_raw, 1e-4 * np.eye(3))
    fs = sample_features(isotropic_dist(3, 3), 80, rng)
    fitted = rfr.fit(fs, X, Y, rfr.NoiseModel(sigma))
    fast = rf_rollout(fitted, tf, traj.states[0], 200, dt=0.01)
    slow = emulator_rollout(whitened_step_predictor(fitted, tf), traj.states[0],
                            200, dt=0.01)
    assert np.abs(fast.states - slow.states).max() < 1e-8


def test_rf_rollout_without_transforms():
    rng = np.random.default_rng(4)
    fs = sample_features(isotropic_dist(3, 3, scale=0.1), 40, rng)
    X = rng.standard_normal((50, 3))
    Y = 0.5 * X + 0.01 * rng.standard_normal((50, 3))
    fitted = rfr.fit(fs, X, Y, rfr.NoiseModel(0.01 * np.eye(3)))
    fast = rf_rollout(fitted, None, np.zeros(3), 50)
    slow = emulator_rollout(lambda s: rfr.predict_mean(fitted, s[None, :])[0],
                            np.zeros(3), 50)
    assert np.abs(fast.states - slow.states).max() < 1e-10


def test_marginal_cdf_distance_limits():
    a = Trajectory(states=np.tile([1.0, 2.0, 3.0], (50, 1)), dt=0.1)
    assert np.allclose(marginal_cdf_distance(a, a), 0.0)
    b = Trajectory(states=np.tile([9.0, 9.0, 9.0], (50, 1)), dt=0.1)
    assert np.allclose(marginal_cdf_distance(a, b), 1.0)


def test_independent_true_trajectories_share_marginals():
    a = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 104_000)
    b = euler_integrate(np.array([-3.0, 2.0, 25.0]), 0.01, 104_000)
    ks = marginal_cdf_distance(a.states[4000:], b.states[4000:])
    assert np.all(ks <= 0.05)


def test_forecast_valid_time():
    traj = euler_integrate(np.array([1.0, 1.0, 1.0]), 0.01, 2000)
    same = forecast_valid_time(traj, traj)
    assert same == pytest.approx(len(traj) * 0.01, abs=0.011)
    shifted = Trajectory(states=traj.states + 11.0, dt=0.01)
    assert forecast_valid_time(traj, shifted) == 0.0
