"""Reference Gaussian process regression.

This module is the exact-but-cubic comparator: it solves the dense
``(N*p) x (N*p)`` systems that random feature regression avoids, and it is
used as the oracle for the projection identity between the two methods.
Supported kernels are an RBF with per-dimension lengthscales (scalar outputs,
or vector outputs via independent per-dimension fits) and the finite-rank
kernel induced by a concrete feature set (native vector outputs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .features import FeatureSet, evaluate_features
from .rfr import FactorizationError, NoiseModel

__all__ = [
    "CapExceededError",
    "Kernel",
    "GPFit",
    "gp_fit",
    "gp_predict",
    "neg_log_marginal_likelihood",
    "gp_tune_grid",
]

DEFAULT_CAP = 2000


class CapExceededError(RuntimeError):
    """The dense GP path refuses problems larger than its configured cap."""


@dataclass(frozen=True)
class Kernel:
    """Covariance function: 'rbf_ard' or a finite-rank feature kernel."""

    kind: str = "rbf_ard"
    lengthscales: np.ndarray | None = None
    variance: float = 1.0
    features: FeatureSet | None = None
    nugget: float = 0.0

    def __post_init__(self):
        if self.kind == "rbf_ard":
            if self.lengthscales is None:
                raise ValueError("rbf_ard kernel needs lengthscales")
            object.__setattr__(self, "lengthscales",
                               np.atleast_1d(np.asarray(self.lengthscales, dtype=float)))
            if np.any(self.lengthscales <= 0) or self.variance <= 0:
                raise ValueError("lengthscales and variance must be positive")
        elif self.kind == "finite_rank":
            if self.features is None:
                raise ValueError("finite_rank kernel needs a feature set")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.nugget < 0:
            raise ValueError("nugget must be nonnegative")


def _rbf_matrix(kernel: Kernel, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    Z = X / kernel.lengthscales[None, :]
    Z2 = X2 / kernel.lengthscales[None, :]
    sq = np.sum(Z * Z, axis=1)[:, None] + np.sum(Z2 * Z2, axis=1)[None, :] - 2.0 * Z @ Z2.T
    return kernel.variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def _finite_rank_matrix(kernel: Kernel, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    fs = kernel.features
    phi = evaluate_features(fs, X)
    phi2 = phi if X2 is X else evaluate_features(fs, X2)
    return phi @ phi2.T / fs.count


@dataclass(frozen=True)
class GPFit:
    kernel: Kernel
    X: np.ndarray
    alpha: np.ndarray  # (N*p,) for finite_rank, (N, p) for per-dimension fits
    chols: tuple = field(repr=False)
    prior_mean: np.ndarray
    noise: NoiseModel
    p: int


def _prior_mean_vector(prior_mean, p: int) -> np.ndarray:
    if prior_mean is None:
        return np.zeros(p)
    mean = np.asarray(prior_mean, dtype=float).ravel()
    if mean.shape[0] != p:
        raise ValueError("prior mean must have one entry per output dimension")
    return mean


def _chol(A: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("GP system failed to factorize") from exc


def gp_fit(kernel: Kernel, X: np.ndarray, Y: np.ndarray, noise: NoiseModel,
           prior_mean=None, cap: int = DEFAULT_CAP) -> GPFit:
    """Solve (K(X,X) + B) alpha = Y - prior_mean(X); deliberately O((N*p)^3)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N, p = Y.shape
    if N * p > cap:
        raise CapExceededError(f"N*p = {N * p} exceeds the dense GP cap {cap}")
    mean = _prior_mean_vector(prior_mean, p)
    resid = Y - mean[None, :]
    if kernel.kind == "finite_rank":
        if kernel.features.output_dim != p:
            raise ValueError("feature output dimension must match the data")
        K = _finite_rank_matrix(kernel, X, X) + kernel.nugget * np.eye(N * p)
        c = _chol(K + np.kron(np.eye(N), noise.sigma))
        alpha = linalg.cho_solve((c, True), resid.ravel())
        return GPFit(kernel, X, alpha, (c,), mean, noise, p)
    # scalar kernel: independent fits per output dimension (off-diagonal noise
    # terms are ignored; whiten outputs first if they matter)
    K = _rbf_matrix(kernel, X, X) + kernel.nugget * np.eye(N)
    chols, cols = [], []
    for j in range(p):
        c = _chol(K + noise.sigma[j, j] * np.eye(N))
        chols.append(c)
        cols.append(linalg.cho_solve((c, True), resid[:, j]))
    return GPFit(kernel, X, np.column_stack(cols), tuple(chols), mean, noise, p)


def gp_predict(gpfit: GPFit, x: np.ndarray):
    """Posterior mean (p,) and covariance (p, p) at one query point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    kernel = gpfit.kernel
    if kernel.kind == "finite_rank":
        kx = _finite_rank_matrix(kernel, x, gpfit.X)  # (p, N*p)
        mean = gpfit.prior_mean + kx @ gpfit.alpha
        kxx = _finite_rank_matrix(kernel, x, x) + kernel.nugget * np.eye(gpfit.p)
        cov = kxx - kx @ linalg.cho_solve((gpfit.chols[0], True), kx.T)
        return mean, cov
    kx = _rbf_matrix(kernel, x, gpfit.X)[0]  # (N,)
    kxx = kernel.variance + kernel.nugget
    mean = gpfit.prior_mean + kx @ gpfit.alpha
    var = np.array([kxx - kx @ linalg.cho_solve((c, True), kx) for c in gpfit.chols])
    return mean, np.diag(var)


def neg_log_marginal_likelihood(kernel: Kernel, X: np.ndarray, Y: np.ndarray,
                                noise: NoiseModel, prior_mean=None,
                                cap: int = DEFAULT_CAP) -> float:
    """Y^T (K + B)^-1 Y + log det(K + B), the empirical Bayes objective."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N, p = Y.shape
    if N * p > cap:
        raise CapExceededError(f"N*p = {N * p} exceeds the dense GP cap {cap}")
    resid = Y - _prior_mean_vector(prior_mean, p)[None, :]
    if kernel.kind == "finite_rank":
        K = _finite_rank_matrix(kernel, X, X) + kernel.nugget * np.eye(N * p)
        c = _chol(K + np.kron(np.eye(N), noise.sigma))
        r = resid.ravel()
        return float(r @ linalg.cho_solve((c, True), r)
                     + 2.0 * np.sum(np.log(np.diag(c))))
    K = _rbf_matrix(kernel, X, X) + kernel.nugget * np.eye(N)
    total = 0.0
    for j in range(p):
        c = _chol(K + noise.sigma[j, j] * np.eye(N))
        r = resid[:, j]
        total += float(r @ linalg.cho_solve((c, True), r)
                       + 2.0 * np.sum(np.log(np.diag(c))))
    return total


def gp_tune_grid(X: np.ndarray, Y: np.ndarray, noise: NoiseModel, grid) -> Kernel:
    """Pick the grid member with the lowest marginal-likelihood objective."""
    grid = list(grid)
    if not grid:
        raise ValueError("kernel grid must be nonempty")
    scores = [neg_log_marginal_likelihood(k, X, Y, noise) for k in grid]
    return grid[int(np.argmin(scores))]
