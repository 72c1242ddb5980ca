"""Lorenz 63 data generation and emulator-as-integrator evaluation.

The classical chaotic regime (sigma, rho, beta) = (10, 28, 8/3) integrated
with forward Euler supplies next-step training pairs; a fitted emulator is
then applied recursively and judged by long-run attractor statistics rather
than pointwise trajectory error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from . import backend
from .rfr import RFFit, predict_mean

__all__ = [
    "BlowUpError",
    "LORENZ_PARAMS",
    "Trajectory",
    "lorenz_vector_field",
    "euler_integrate",
    "make_training_pairs",
    "emulator_rollout",
    "rf_rollout",
    "marginal_cdf_distance",
    "forecast_valid_time",
]

LORENZ_PARAMS = (10.0, 28.0, 8.0 / 3.0)


class BlowUpError(RuntimeError):
    """Integration left the finite range; carries the failing step index."""

    def __init__(self, step: int, states: np.ndarray | None = None):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step
        self.states = states


@dataclass(frozen=True)
class Trajectory:
    """States on a uniform time grid."""

    states: np.ndarray  # (n+1, 3)
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


def lorenz_vector_field(state, sigma=LORENZ_PARAMS[0], rho=LORENZ_PARAMS[1],
                        beta=LORENZ_PARAMS[2]) -> np.ndarray:
    """Right-hand side (sigma(y-x), x(rho-z) - y, xy - beta z)."""
    s = np.asarray(state, dtype=float)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)


def euler_integrate(initial, dt: float, n_steps: int,
                    params=LORENZ_PARAMS) -> Trajectory:
    """March s_{k+1} = s_k + dt * field(s_k); aborts on blow-up."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    states, completed = backend.euler_lorenz(np.asarray(initial, dtype=float),
                                             float(dt), int(n_steps), *params)
    if completed < n_steps:
        raise BlowUpError(completed, states[:completed + 1])
    return Trajectory(states=states, dt=dt)


def make_training_pairs(trajectory: Trajectory, n_pairs: int, noise_cov,
                        rng: np.random.Generator, sampling: str = "random"):
    """Extract (state, noisy next state) pairs from a trajectory.

    Random sampling draws step indices without replacement; sequential takes
    the leading consecutive pairs.
    """
    n_avail = len(trajectory) - 1
    if not 1 <= n_pairs <= n_avail:
        raise ValueError(f"cannot draw {n_pairs} pairs from {n_avail} steps")
    if sampling == "random":
        idx = rng.choice(n_avail, size=n_pairs, replace=False)
    elif sampling == "sequential":
        idx = np.arange(n_pairs)
    else:
        raise ValueError(f"unknown sampling mode {sampling!r}")
    X = trajectory.states[idx]
    Y = trajectory.states[idx + 1].copy()
    cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    if np.any(cov != 0.0):
        Y += rng.multivariate_normal(np.zeros(3), cov, size=n_pairs)
    return X, Y


def emulator_rollout(predict, initial, n_steps: int, dt: float = 1.0,
                     t0: float = 0.0) -> Trajectory:
    """Recursively apply a next-step map; raises BlowUpError on divergence."""
    initial = np.asarray(initial, dtype=float)
    states = np.zeros((n_steps + 1, initial.size))
    states[0] = initial
    x = initial
    for k in range(n_steps):
        x = np.asarray(predict(x), dtype=float).ravel()
        if not np.all(np.abs(x) < backend.BLOWUP_LIMIT):
            raise BlowUpError(k, states[:k + 1])
        states[k + 1] = x
    return Trajectory(states=states, dt=dt, t0=t0)


def rf_rollout(rffit: RFFit, transforms, initial, n_steps: int, dt: float = 1.0,
               t0: float = 0.0) -> Trajectory:
    """Fast recursive rollout of a random-feature emulator in raw coordinates.

    ``transforms`` (or None for an emulator trained on raw data) supplies the
    whitening applied at training time; it is folded into the feature
    frequencies and output map so the hot loop is a single fused kernel.
    """
    fs = rffit.features
    M, p, d = fs.Xi.shape
    if p != d:
        raise ValueError("rollout needs a state-to-state emulator")
    weights = rffit.beta * np.sqrt(fs.scale) / M
    if transforms is None:
        xi = fs.Xi
        b = fs.B
        out_mat = np.eye(p)
        out_shift = rffit.prior_mean.copy()
    else:
        # fold x -> (x - mu) / s into the frequencies and phases
        xi = fs.Xi / transforms.input_std[None, None, :]
        b = fs.B - fs.Xi @ (transforms.input_mean / transforms.input_std)
        out_mat = transforms.output_color
        out_shift = transforms.output_color @ rffit.prior_mean + transforms.output_mean
    states, completed = backend.rff_rollout(
        np.ascontiguousarray(xi.reshape(M * p, d)),
        np.ascontiguousarray(b.ravel()),
        np.ascontiguousarray(weights),
        np.ascontiguousarray(out_mat),
        np.ascontiguousarray(out_shift),
        np.asarray(initial, dtype=float),
        int(n_steps),
    )
    if completed < n_steps:
        raise BlowUpError(completed, states[:completed + 1])
    return Trajectory(states=states, dt=dt, t0=t0)


def whitened_step_predictor(rffit: RFFit, transforms):
    """Raw-coordinate next-step map of an emulator trained on whitened data."""

    def step(x):
        z = transforms.whiten_inputs(np.asarray(x, dtype=float)[None, :])
        return transforms.unwhiten_outputs(predict_mean(rffit, z))[0]

    return step


def marginal_cdf_distance(traj_a, traj_b) -> np.ndarray:
    """Per-coordinate Kolmogorov-Smirnov distance between state marginals."""
    a = traj_a.states if isinstance(traj_a, Trajectory) else np.asarray(traj_a)
    b = traj_b.states if isinstance(traj_b, Trajectory) else np.asarray(traj_b)
    if a.size == 0 or b.size == 0:
        raise ValueError("both trajectories must be nonempty")
    return np.array([ks_2samp(a[:, i], b[:, i], method="asymp").statistic
                     for i in range(a.shape[1])])


def forecast_valid_time(reference: Trajectory, emulated: Trajectory,
                        threshold: float = 10.0) -> float:
    """Time until any coordinate deviates from the reference by > threshold."""
    n = min(len(reference), len(emulated))
    dev = np.abs(reference.states[:n] - emulated.states[:n]).max(axis=1)
    bad = np.nonzero(dev > threshold)[0]
    horizon = bad[0] if bad.size else n
    return float(horizon * reference.dt)
