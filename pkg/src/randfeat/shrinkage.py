"""Ledoit-Wolf covariance shrinkage toward a scaled identity.

Guarantees a well-conditioned estimate from few samples; used when whitening
output data and when estimating the observation covariance of the tuning
inverse problem from Monte Carlo draws.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ledoit_wolf_covariance"]


def ledoit_wolf_covariance(samples: np.ndarray, assume_centered: bool = False):
    """Optimal-intensity shrinkage of the sample covariance.

    Parameters
    ----------
    samples : (n, D) array of observations.
    assume_centered : skip mean removal when the samples are already centered.

    Returns
    -------
    (Sigma, intensity) with Sigma = intensity * mu * I + (1 - intensity) * S,
    where S is the sample covariance and mu = tr(S) / D.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-d array")
    n, D = X.shape
    if n < 2:
        raise ValueError("at least two samples are required")
    if not assume_centered:
        X = X - X.mean(axis=0, keepdims=True)
    S = X.T @ X / n
    mu = np.trace(S) / D
    delta2 = np.sum((S - mu * np.eye(D)) ** 2) / D
    if delta2 <= np.finfo(float).eps * max(1.0, mu ** 2):
        return S, 0.0
    sq_norms = np.sum(X * X, axis=1)
    beta2 = (np.sum(sq_norms ** 2) / n ** 2 - np.sum(S * S) / n) / D
    beta2 = min(max(beta2, 0.0), delta2)
    intensity = beta2 / delta2
    return intensity * mu * np.eye(D) + (1.0 - intensity) * S, float(intensity)
