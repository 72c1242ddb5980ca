"""Random feature regression.

Fitting reduces to the M x M system

    ((1/M) Phi^T B^-1 Phi + I_M) beta = Phi^T B^-1 (Y - prior_mean(X)),

where ``B`` is the block-diagonal replication of the per-observation noise
covariance.  The left-hand matrix (Gram + identity) is Cholesky-factorized
once; posterior means cost O(M p d) per point and posterior covariances one
triangular solve against the cached factor.  Nothing quadratic in ``N*p`` is
ever assembled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .features import FeatureSet, evaluate_features, evaluate_features_point

__all__ = [
    "FactorizationError",
    "NoiseModel",
    "RFFit",
    "gram_matrix",
    "logdet_term",
    "fit",
    "predict_mean",
    "predict_cov",
    "save_fit",
    "load_fit",
]


class FactorizationError(RuntimeError):
    """A Cholesky factorization failed on a matrix that should be SPD."""


class NoiseModel:
    """Per-observation noise covariance with cached Cholesky factor."""

    def __init__(self, sigma: np.ndarray | float):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValueError("noise covariance must be square")
        scale = max(1.0, np.abs(sigma).max())
        if np.abs(sigma - sigma.T).max() > 1e-12 * scale:
            raise ValueError("noise covariance must be symmetric")
        try:
            self._chol = linalg.cholesky(sigma, lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationError("noise covariance is not positive definite") from exc
        self.sigma = sigma

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def whiten_rows(self, Y: np.ndarray) -> np.ndarray:
        """Apply Sigma^{-1/2} to each row of an (N, p) array."""
        return linalg.solve_triangular(self._chol, Y.T, lower=True).T

    def whiten_blocks(self, Phi: np.ndarray, N: int) -> np.ndarray:
        """Apply blockdiag(Sigma^{-1/2}) to an (N*p, M) feature matrix."""
        p = self.dim
        M = Phi.shape[1]
        blocks = np.ascontiguousarray(Phi.reshape(N, p, M).transpose(1, 0, 2)).reshape(p, N * M)
        white = linalg.solve_triangular(self._chol, blocks, lower=True)
        return np.ascontiguousarray(white.reshape(p, N, M).transpose(1, 0, 2)).reshape(N * p, M)


def _resolve_prior_mean(prior_mean, p: int) -> np.ndarray:
    if prior_mean is None:
        return np.zeros(p)
    mean = np.asarray(prior_mean, dtype=float).ravel()
    if mean.shape[0] != p:
        raise ValueError("prior mean must have one entry per output dimension")
    return mean


def gram_matrix(features: FeatureSet, X: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Noise-weighted feature Gram matrix, (1/M) Phi^T B^-1 Phi."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi_w = noise.whiten_blocks(evaluate_features(features, X), X.shape[0])
    return phi_w.T @ phi_w / features.count


def logdet_term(G: np.ndarray) -> float:
    """log det(G + I) via Cholesky; nonnegative for PSD G."""
    A = G + np.eye(G.shape[0])
    try:
        c = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("Gram matrix plus identity failed to factorize") from exc
    return 2.0 * float(np.sum(np.log(np.diag(c))))


@dataclass(frozen=True)
class RFFit:
    """Fitted regressor: features, coefficients and the cached system factor."""

    features: FeatureSet
    beta: np.ndarray
    system: np.ndarray  # (1/M) Phi^T B^-1 Phi + I_M
    chol: np.ndarray  # lower Cholesky factor of ``system``
    prior_mean: np.ndarray
    noise: NoiseModel
    n_train: int

    @property
    def input_dim(self) -> int:
        return self.features.input_dim

    @property
    def output_dim(self) -> int:
        return self.features.output_dim


def _factor_system(A: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        # the +I term should keep this SPD; jitter is a last resort
        jitter = 1e-10 * np.trace(A) / A.shape[0]
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationError("random feature system failed to factorize") from exc


def fit(features: FeatureSet, X: np.ndarray, Y: np.ndarray, noise: NoiseModel,
        prior_mean=None) -> RFFit:
    """Solve the coefficient system for a draw of features.

    Cost is O(M^3 + N M^2 p) time and O(N M p + M^2) memory.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = X.shape[0]
    p = features.output_dim
    if Y.shape != (N, p):
        raise ValueError(f"expected outputs of shape {(N, p)}, got {Y.shape}")
    if noise.dim != p:
        raise ValueError("noise covariance dimension must match the output dimension")
    mean = _resolve_prior_mean(prior_mean, p)

    phi_w = noise.whiten_blocks(evaluate_features(features, X), N)
    resid_w = noise.whiten_rows(Y - mean[None, :]).ravel()
    M = features.count
    A = phi_w.T @ phi_w / M + np.eye(M)
    chol = _factor_system(A)
    rhs = phi_w.T @ resid_w
    beta = linalg.cho_solve((chol, True), rhs)
    return RFFit(features=features, beta=beta, system=A, chol=chol,
                 prior_mean=mean, noise=noise, n_train=N)


def predict_mean(rffit: RFFit, X: np.ndarray) -> np.ndarray:
    """Posterior mean at query points, shape (n, p)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals = evaluate_features(rffit.features, X) @ rffit.beta / rffit.features.count
    return vals.reshape(X.shape[0], rffit.output_dim) + rffit.prior_mean[None, :]


def predict_cov(rffit: RFFit, x: np.ndarray, x2: np.ndarray | None = None) -> np.ndarray:
    """Posterior covariance K(x, x') as a (p, p) matrix.

    Solves the cached factor against the features of ``x'`` and contracts with
    the features of ``x``; at ``x == x'`` the result is symmetric PSD up to
    roundoff.
    """
    phi_x = evaluate_features_point(rffit.features, x)
    phi_x2 = phi_x if x2 is None else evaluate_features_point(rffit.features, x2)
    beta_hat = linalg.cho_solve((rffit.chol, True), phi_x2.T)
    return phi_x @ beta_hat / rffit.features.count


def save_fit(path, rffit: RFFit) -> None:
    """Serialize a fit (features, coefficients, system, noise, prior mean)."""
    np.savez(path, scale=rffit.features.scale, Xi=rffit.features.Xi,
             B=rffit.features.B, beta=rffit.beta, system=rffit.system,
             prior_mean=rffit.prior_mean, sigma=rffit.noise.sigma,
             n_train=rffit.n_train)


def load_fit(path) -> RFFit:
    with np.load(path) as data:
        features = FeatureSet(scale=float(data["scale"]), Xi=data["Xi"], B=data["B"])
        system = data["system"]
        return RFFit(features=features, beta=data["beta"], system=system,
                     chol=_factor_system(system), prior_mean=data["prior_mean"],
                     noise=NoiseModel(data["sigma"]), n_train=int(data["n_train"]))
