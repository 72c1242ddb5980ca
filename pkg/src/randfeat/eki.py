"""Ensemble Kalman inversion.

Particles are updated with perturbed observations,

    u_j <- u_j + C_uG (C_GG + Gamma/dt)^-1 (z* + xi_j - G(u_j)),
    xi_j ~ N(0, Gamma/dt),

where C_uG and C_GG are the (1/J)-normalized empirical covariances between
particles and their forward evaluations.  Time advances until the terminal
time (default 1) or the iteration budget is exhausted; steps are either
constant or chosen adaptively from misfit statistics.  Every member owns a
deterministic random substream derived from (seed, stage, iteration, member),
so results do not depend on how evaluations are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .rfr import FactorizationError

__all__ = [
    "ForwardMapError",
    "Ensemble",
    "EKISettings",
    "ObservationSpec",
    "GaussianEnsemblePrior",
    "member_rng",
    "init_ensemble",
    "empirical_covariances",
    "update_step",
    "adaptive_timestep",
    "run",
    "EKITrace",
]

MIN_TIMESTEP = 1e-6
_MAX_RESAMPLE_TRIES = 5


class ForwardMapError(RuntimeError):
    """A member's forward evaluation failed and could not be recovered."""


@dataclass(frozen=True)
class Ensemble:
    """Particle collection: columns of ``members`` are the J particles."""

    members: np.ndarray  # (q, J)
    t: float = 0.0
    iteration: int = 0
    evals: np.ndarray | None = None  # (z_dim, J) forward evaluations cache

    def __post_init__(self):
        if self.members.ndim != 2 or self.members.shape[1] < 2:
            raise ValueError("an ensemble needs at least two members")
        if not np.all(np.isfinite(self.members)):
            raise ValueError("ensemble members must be finite")

    @property
    def size(self) -> int:
        return self.members.shape[1]

    @property
    def dim(self) -> int:
        return self.members.shape[0]

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)


@dataclass(frozen=True)
class EKISettings:
    """Inversion controls.

    ``inflation_std`` is the additive noise applied to members after every
    update; a scalar applies isotropically, a length-q vector sets one std
    per coordinate (e.g. a fraction of the prior spread).
    """

    ensemble_size: int
    n_iter: int
    terminal_time: float = 1.0
    scheduler: str = "adaptive"  # or "constant"
    dt: float | None = None
    inflation_std: float | np.ndarray = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ValueError("ensemble size must be at least 2")
        if self.n_iter < 0:
            raise ValueError("iteration budget must be nonnegative")
        if self.scheduler not in ("adaptive", "constant"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.scheduler == "constant" and (self.dt is None or self.dt <= 0):
            raise ValueError("constant scheduler needs dt > 0")
        if np.any(np.asarray(self.inflation_std) < 0):
            raise ValueError("inflation std must be nonnegative")


class ObservationSpec:
    """Target observable and the covariance weighting the misfit."""

    def __init__(self, z: np.ndarray, gamma: np.ndarray):
        self.z = np.asarray(z, dtype=float).ravel()
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.z.size, self.z.size):
            raise ValueError("observable and covariance dimensions disagree")
        try:
            self._chol = linalg.cholesky(gamma, lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationError("observation covariance failed to factorize") from exc
        self.gamma = gamma

    @property
    def dim(self) -> int:
        return self.z.size

    def whiten(self, v: np.ndarray) -> np.ndarray:
        """Apply Gamma^{-1/2} to a vector or to columns of a matrix."""
        return linalg.solve_triangular(self._chol, v, lower=True)

    def sample_noise(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        return scale * (self._chol @ rng.standard_normal(self.dim))


class GaussianEnsemblePrior:
    """Independent Gaussian prior used to seed generic inversions."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=float).ravel()
        self.std = np.broadcast_to(np.asarray(std, dtype=float), self.mean.shape)
        if np.any(self.std <= 0):
            raise ValueError("prior standard deviations must be positive")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal(self.mean.size)


def member_rng(seed: int, stage: int, iteration: int, member: int) -> np.random.Generator:
    """Deterministic substream for one member at one stage of one iteration."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stage, iteration, member))
    return np.random.default_rng(ss)


def init_ensemble(prior, J: int, rng: np.random.Generator) -> Ensemble:
    """Draw J i.i.d. members from the prior at time zero."""
    if J < 2:
        raise ValueError("ensemble size must be at least 2")
    members = np.column_stack([prior.sample(rng) for _ in range(J)])
    return Ensemble(members=members, t=0.0, iteration=0)


def empirical_covariances(ensemble: Ensemble, evals: np.ndarray | None = None):
    """Cross- and output-covariances of the particles, normalized by 1/J."""
    G = ensemble.evals if evals is None else evals
    if G is None:
        raise ValueError("forward evaluations are required")
    U = ensemble.members
    J = U.shape[1]
    dU = U - U.mean(axis=1, keepdims=True)
    dG = G - G.mean(axis=1, keepdims=True)
    return dU @ dG.T / J, dG @ dG.T / J


def _noise_columns(obs, rngs, J, scale):
    if isinstance(rngs, np.random.Generator):
        return scale * (obs._chol @ rngs.standard_normal((obs.dim, J)))
    return np.column_stack([obs.sample_noise(r, scale) for r in rngs])


def _inflation_columns(rngs, q, J, std):
    std = np.asarray(std, dtype=float)
    if std.ndim == 1:
        std = std[:, None]
    if isinstance(rngs, np.random.Generator):
        return std * rngs.standard_normal((q, J))
    return std * np.column_stack([r.standard_normal(q) for r in rngs])


def update_step(ensemble: Ensemble, obs: ObservationSpec, dt: float, rngs,
                inflation_std: float = 0.0) -> Ensemble:
    """One Kalman move with perturbed observations, then additive inflation.

    ``rngs`` is a single generator or one generator per member; per-member
    generators keep the update equivariant under member permutations.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if ensemble.evals is None:
        raise ValueError("forward evaluations are required before updating")
    C_ug, C_gg = empirical_covariances(ensemble)
    A = C_gg + obs.gamma / dt
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("Kalman update system failed to factorize") from exc
    J = ensemble.size
    xi = _noise_columns(obs, rngs, J, 1.0 / np.sqrt(dt))
    innovations = obs.z[:, None] + xi - ensemble.evals
    members = ensemble.members + C_ug @ linalg.cho_solve(factor, innovations)
    if np.any(np.asarray(inflation_std) > 0):
        members = members + _inflation_columns(rngs, ensemble.dim, J, inflation_std)
    return Ensemble(members=members, t=ensemble.t + dt,
                    iteration=ensemble.iteration + 1, evals=None)


def member_misfits(ensemble: Ensemble, obs: ObservationSpec,
                   evals: np.ndarray | None = None) -> np.ndarray:
    """Phi_j = 0.5 ||Gamma^{-1/2}(z* - G(u_j))||^2 for every member."""
    G = ensemble.evals if evals is None else evals
    if G is None:
        raise ValueError("forward evaluations are required")
    white = obs.whiten(obs.z[:, None] - G)
    return 0.5 * np.sum(white * white, axis=0)


def adaptive_timestep(ensemble: Ensemble, obs: ObservationSpec,
                      evals: np.ndarray | None = None,
                      terminal_time: float = 1.0) -> float:
    """Misfit-statistics step size, never overshooting the terminal time.

    dt = min(max(D / (2 mean Phi_j), sqrt(D / (2 var Phi_j))), T - t) with D
    the observation dimension, clipped below at 1e-6; a perfectly fit
    ensemble returns the remaining time.  Scaling by D keeps early steps
    proportional to the per-coordinate misfit, so high-dimensional
    observables do not stall the inversion.
    """
    remaining = terminal_time - ensemble.t
    if remaining <= 0:
        raise ValueError("ensemble already reached the terminal time")
    phis = member_misfits(ensemble, obs, evals)
    if phis.sum() <= 0.0:
        return remaining
    D = obs.dim
    candidate = D / (2.0 * phis.mean())
    spread = phis.var()
    if spread > 0.0:
        candidate = max(candidate, np.sqrt(D / (2.0 * spread)))
    else:
        candidate = remaining
    return float(min(max(candidate, min(MIN_TIMESTEP, remaining)), remaining))


@dataclass
class EKITrace:
    """Per-iteration diagnostics, exportable as CSV."""

    iterations: list = field(default_factory=list)
    times: list = field(default_factory=list)
    timesteps: list = field(default_factory=list)
    misfits: list = field(default_factory=list)  # ensemble-mean normalized misfit
    min_norms: list = field(default_factory=list)
    max_norms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)  # optional (members, evals) pairs

    COLUMNS = ("iteration", "time", "dt", "normalized_misfit",
               "min_member_norm", "max_member_norm")

    def record(self, iteration, t, dt, misfit, members):
        norms = np.linalg.norm(members, axis=0)
        self.iterations.append(int(iteration))
        self.times.append(float(t))
        self.timesteps.append(float(dt))
        self.misfits.append(float(misfit))
        self.min_norms.append(float(norms.min()))
        self.max_norms.append(float(norms.max()))

    def rows(self):
        return list(zip(self.iterations, self.times, self.timesteps,
                        self.misfits, self.min_norms, self.max_norms))

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            writer.writerows(self.rows())


def _evaluate_member(forward_map, ensemble, j, seed, iteration):
    """Evaluate one member, resampling it from the ensemble spread on failure."""
    rng = member_rng(seed, 1, iteration, j)
    u = ensemble.members[:, j]
    U = ensemble.members
    for attempt in range(_MAX_RESAMPLE_TRIES):
        try:
            g = np.asarray(forward_map(u, rng), dtype=float).ravel()
            if np.all(np.isfinite(g)):
                return u, g
        except (FactorizationError, FloatingPointError, linalg.LinAlgError):
            pass
        # resample from the ensemble's empirical Gaussian and retry
        mean = U.mean(axis=1)
        dU = U - mean[:, None]
        cov = dU @ dU.T / U.shape[1] + 1e-12 * np.eye(U.shape[0])
        u = mean + np.linalg.cholesky(cov) @ rng.standard_normal(U.shape[0])
    raise ForwardMapError(f"member {j} failed after {_MAX_RESAMPLE_TRIES} resampling attempts")


def run(forward_map, prior, obs: ObservationSpec, settings: EKISettings,
        workers: int = 1, store_iterates: bool = False):
    """Drive the inversion loop until the terminal time or iteration budget.

    ``forward_map(u, rng)`` must accept a parameter vector and a dedicated
    random substream.  Evaluations across members may run concurrently; the
    result is independent of ``workers``.
    """
    seed = settings.seed
    ens = init_ensemble(prior, settings.ensemble_size, member_rng(seed, 0, 0, 0))
    trace = EKITrace()
    for n in range(settings.n_iter):
        if ens.t >= settings.terminal_time - 1e-12:
            break
        members = ens.members.copy()
        evals = np.empty((obs.dim, ens.size))

        def evaluate(j):
            return _evaluate_member(forward_map, ens, j, seed, n)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(evaluate, range(ens.size)))
        else:
            results = [evaluate(j) for j in range(ens.size)]
        for j, (u_j, g_j) in enumerate(results):
            members[:, j] = u_j
            evals[:, j] = g_j
        ens = replace(ens, members=members, evals=evals)

        if store_iterates:
            trace.iterates.append((members.copy(), evals.copy()))
        misfit = float(np.mean(2.0 * member_misfits(ens, obs)))
        if settings.scheduler == "adaptive":
            dt = adaptive_timestep(ens, obs, terminal_time=settings.terminal_time)
        else:
            dt = min(settings.dt, settings.terminal_time - ens.t)
        trace.record(n, ens.t, dt, misfit, members)
        rngs = [member_rng(seed, 2, n, j) for j in range(ens.size)]
        ens = update_step(ens, obs, dt, rngs, settings.inflation_std)
    return ens, trace
