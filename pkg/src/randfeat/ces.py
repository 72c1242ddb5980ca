"""Emulator-accelerated Bayesian inversion (calibrate, emulate, sample).

Random walk Metropolis targets the negative log-posterior

    0.5 ||Gamma(theta)^{-1/2} (y - G(theta))||^2 + 0.5 log det Gamma(theta)
        - log P(theta),

where G is either the exact forward map with the physical noise covariance or
an emulator mean with (optionally) its pointwise predictive covariance added
to the physical noise.  Step sizes are tuned to a target acceptance rate via
pilot chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

__all__ = [
    "StepSizeError",
    "GaussianPrior",
    "BoundedLogitPrior",
    "SyntheticForwardMap",
    "EmulatedPosterior",
    "emulated_neg_log_posterior",
    "MCMCChain",
    "rwm_step",
    "tune_step_size",
    "run_chain",
]

_LOG_2PI = np.log(2.0 * np.pi)


class StepSizeError(RuntimeError):
    """The acceptance-rate search did not converge."""


class GaussianPrior:
    """Independent Gaussian prior over physical parameters."""

    def __init__(self, mean, std):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.std = np.broadcast_to(np.asarray(std, dtype=float), self.mean.shape).copy()
        if np.any(self.std <= 0):
            raise ValueError("standard deviations must be positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    def in_support(self, theta) -> bool:
        return bool(np.all(np.isfinite(theta)))

    def logpdf(self, theta) -> float:
        z = (np.asarray(theta, dtype=float) - self.mean) / self.std
        return float(-0.5 * np.sum(z * z) - np.sum(np.log(self.std))
                     - 0.5 * self.dim * _LOG_2PI)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal(self.dim)


class BoundedLogitPrior:
    """Unit-variance normals pushed through a shifted, scaled logistic map.

    Each coordinate lives in (lo, hi); the latent normal is centered so the
    prior median equals the requested center value.
    """

    def __init__(self, bounds, centers):
        self.bounds = np.asarray(bounds, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        if self.bounds.shape != (self.centers.size, 2):
            raise ValueError("one (lo, hi) pair per center is required")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(hi <= lo) or np.any(self.centers <= lo) or np.any(self.centers >= hi):
            raise ValueError("centers must lie strictly inside their bounds")
        self.latent_mean = logit((self.centers - lo) / (hi - lo))

    @property
    def dim(self) -> int:
        return self.centers.size

    def in_support(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta > self.bounds[:, 0]) and np.all(theta < self.bounds[:, 1]))

    def to_latent(self, theta) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return logit((np.asarray(theta, dtype=float) - lo) / (hi - lo))

    def from_latent(self, z) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + (hi - lo) * expit(np.asarray(z, dtype=float))

    def logpdf(self, theta) -> float:
        if not self.in_support(theta):
            return -np.inf
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        z = self.to_latent(theta)
        latent = -0.5 * np.sum((z - self.latent_mean) ** 2) - 0.5 * self.dim * _LOG_2PI
        jacobian = np.sum(np.log(hi - lo) - np.log(theta - lo) - np.log(hi - theta))
        return float(latent + jacobian)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.from_latent(self.latent_mean + rng.standard_normal(self.dim))

    def moments(self, rng: np.random.Generator, n: int = 200_000):
        """Monte Carlo prior mean and standard deviation per coordinate."""
        draws = np.array([self.sample(rng) for _ in range(n)])
        return draws.mean(axis=0), draws.std(axis=0)


@dataclass(frozen=True)
class SyntheticForwardMap:
    """Smooth nonlinear stand-in map theta -> A tanh(B theta) + c."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    @classmethod
    def seeded(cls, dim_in: int = 5, dim_out: int = 50, hidden: int | None = None,
               seed: int = 0) -> "SyntheticForwardMap":
        hidden = dim_in if hidden is None else hidden
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((dim_out, hidden)) / np.sqrt(hidden)
        B = rng.standard_normal((hidden, dim_in)) * (2.0 / np.sqrt(dim_in))
        c = 0.1 * rng.standard_normal(dim_out)
        return cls(A=A, B=B, c=c)

    @property
    def dim_in(self) -> int:
        return self.B.shape[1]

    @property
    def dim_out(self) -> int:
        return self.A.shape[0]

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        return self.A @ np.tanh(self.B @ np.asarray(theta, dtype=float)) + self.c


class EmulatedPosterior:
    """Negative log-posterior built from a (surrogate) forward map.

    ``mean_fn`` maps parameters to predicted observables.  With
    ``cov_fn=None`` the constant physical noise covariance weighs the misfit
    (the exact-map variant); otherwise the pointwise emulator covariance is
    added to it.
    """

    def __init__(self, mean_fn, prior, y, gamma_phys, cov_fn=None):
        self.mean_fn = mean_fn
        self.cov_fn = cov_fn
        self.prior = prior
        self.y = np.asarray(y, dtype=float).ravel()
        gamma_phys = np.atleast_2d(np.asarray(gamma_phys, dtype=float))
        if gamma_phys.shape != (self.y.size, self.y.size):
            raise ValueError("physical noise covariance must match the observation")
        self.gamma_phys = gamma_phys
        self._chol_phys = linalg.cholesky(gamma_phys, lower=True)
        self._logdet_phys = 2.0 * float(np.sum(np.log(np.diag(self._chol_phys))))

    @property
    def dim(self) -> int:
        return self.prior.dim

    def neg_log(self, theta: np.ndarray) -> float:
        if not self.prior.in_support(theta):
            return np.inf
        resid = self.y - np.asarray(self.mean_fn(theta), dtype=float).ravel()
        if self.cov_fn is None:
            white = linalg.solve_triangular(self._chol_phys, resid, lower=True)
            logdet = self._logdet_phys
        else:
            gamma = self.gamma_phys + np.atleast_2d(self.cov_fn(theta))
            try:
                c = linalg.cholesky(gamma, lower=True)
            except linalg.LinAlgError:
                return np.inf
            white = linalg.solve_triangular(c, resid, lower=True)
            logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
        return float(0.5 * white @ white + 0.5 * logdet - self.prior.logpdf(theta))


def emulated_neg_log_posterior(theta: np.ndarray, posterior: EmulatedPosterior) -> float:
    """Functional form of :meth:`EmulatedPosterior.neg_log`."""
    return posterior.neg_log(theta)


@dataclass
class MCMCChain:
    """Growing random-walk chain state."""

    samples: list = field(default_factory=list)
    neg_logs: list = field(default_factory=list)
    n_accept: int = 0
    n_transitions: int = 0
    step_size: float = 0.0

    @classmethod
    def start(cls, theta0, posterior: EmulatedPosterior, step_size: float) -> "MCMCChain":
        theta0 = np.asarray(theta0, dtype=float)
        return cls(samples=[theta0], neg_logs=[posterior.neg_log(theta0)],
                   step_size=step_size)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def current(self) -> np.ndarray:
        return self.samples[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accept / max(self.n_transitions, 1)


def rwm_step(chain: MCMCChain, posterior: EmulatedPosterior, step_size: float,
             rng: np.random.Generator) -> MCMCChain:
    """One Metropolis transition with an isotropic Gaussian proposal."""
    theta = chain.current
    current = chain.neg_logs[-1]
    proposal = theta + step_size * rng.standard_normal(theta.size)
    candidate = posterior.neg_log(proposal)
    # accept with probability min(1, exp(current - candidate))
    if candidate <= current or np.log(rng.uniform()) < current - candidate:
        chain.samples.append(proposal)
        chain.neg_logs.append(candidate)
        chain.n_accept += 1
    else:
        chain.samples.append(theta)
        chain.neg_logs.append(current)
    chain.n_transitions += 1
    return chain


def _pilot_acceptance(posterior, theta0, step_size, n_steps, rng) -> float:
    chain = MCMCChain.start(theta0, posterior, step_size)
    for _ in range(n_steps):
        rwm_step(chain, posterior, step_size, rng)
    return chain.acceptance_rate


def tune_step_size(posterior: EmulatedPosterior, theta0, rng: np.random.Generator,
                   target: float = 0.25, tol: float = 0.05, initial_step: float = 1.0,
                   pilot_steps: int = 2000, max_rounds: int = 30) -> float:
    """Double/halve (then bisect in log space) until acceptance hits the target."""
    if not 0.05 < target < 0.95:
        raise ValueError("target acceptance must lie in (0.05, 0.95)")
    step = float(initial_step)
    lo, hi = 0.0, np.inf
    for _ in range(max_rounds):
        rate = _pilot_acceptance(posterior, theta0, step, pilot_steps, rng)
        if abs(rate - target) <= tol:
            return step
        if rate > target:  # too timid, grow the step
            lo = step
            step = step * 2.0 if not np.isfinite(hi) else np.sqrt(lo * hi)
        else:
            hi = step
            step = step / 2.0 if lo == 0.0 else np.sqrt(lo * hi)
    raise StepSizeError(f"acceptance did not reach {target}+-{tol} "
                        f"in {max_rounds} pilot rounds")


def run_chain(posterior: EmulatedPosterior, theta0, n_steps: int, burn_in: int,
              step_size: float, rng: np.random.Generator) -> MCMCChain:
    """Run a random-walk chain and retain the post-burn-in samples."""
    if not 0 <= burn_in < n_steps:
        raise ValueError("burn-in must be shorter than the chain")
    theta = np.asarray(theta0, dtype=float)
    current = posterior.neg_log(theta)
    k = theta.size
    kept = np.empty((n_steps - burn_in, k))
    kept_logs = np.empty(n_steps - burn_in)
    n_accept = 0
    for i in range(n_steps):
        proposal = theta + step_size * rng.standard_normal(k)
        candidate = posterior.neg_log(proposal)
        if candidate <= current or np.log(rng.uniform()) < current - candidate:
            theta, current = proposal, candidate
            n_accept += 1
        if i >= burn_in:
            kept[i - burn_in] = theta
            kept_logs[i - burn_in] = current
    return MCMCChain(samples=list(kept), neg_logs=list(kept_logs),
                     n_accept=n_accept, n_transitions=n_steps, step_size=step_size)
