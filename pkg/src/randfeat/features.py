"""Random Fourier feature construction.

A feature distribution is a Gaussian law over frequency matrices combined with
uniform phases.  Its covariance is parametrized through a low-rank
perturbation of the identity,

    C = (I + U diag(S) U^T)(I + U diag(S) U^T)^T,

either over the full ``d*p``-dimensional frequency space (nonseparable) or as
a matrix-normal pair of input/output covariances built by the same recipe
(separable).  Frequency matrices are ``p x d``; the flattening convention
between a ``d*p`` vector and the matrix is row-major (C order), i.e. entry
``(i, k)`` of the matrix sits at flat index ``i*d + k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeatureDistribution",
    "FeatureSet",
    "CovarianceFactor",
    "build_covariance_factor",
    "sample_features",
    "evaluate_features",
    "evaluate_features_point",
    "approximate_kernel",
    "save_feature_set",
    "load_feature_set",
]


@dataclass(frozen=True)
class CovarianceFactor:
    """Factor A = I + U diag(S) U^T with C = A A^T, applied without forming C."""

    U: np.ndarray
    S: np.ndarray

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    def matmat(self, Z: np.ndarray) -> np.ndarray:
        """Apply A to columns of Z."""
        return Z + self.U @ (self.S[:, None] * (self.U.T @ Z))

    def dense(self) -> np.ndarray:
        """Materialize A (for small dimensions and tests)."""
        return np.eye(self.dim) + (self.U * self.S) @ self.U.T

    def covariance(self) -> np.ndarray:
        A = self.dense()
        return A @ A.T


@dataclass(frozen=True)
class FeatureDistribution:
    """Sampling law for random Fourier features.

    Nonseparable: frequencies are N(0, C) over the flattened ``d*p`` space
    with ``U`` of shape ``(d*p, r)`` and positive diagonal ``S`` of length
    ``r``.  Separable: frequencies are MatrixNormal(0, C_in, C_out) with input
    factor ``(V1, T1)`` over ``d`` and output factor ``(V2, T2)`` over ``p``.
    """

    kind: str
    input_dim: int
    output_dim: int
    scale: float
    U: np.ndarray | None = None
    S: np.ndarray | None = None
    V1: np.ndarray | None = None
    T1: np.ndarray | None = None
    V2: np.ndarray | None = None
    T2: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("nonseparable", "separable"):
            raise ValueError(f"unknown feature distribution kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        d, p = self.input_dim, self.output_dim
        if self.kind == "nonseparable":
            if self.U is None or self.S is None:
                raise ValueError("nonseparable distribution requires U and S")
            if self.U.shape[0] != d * p or self.U.ndim != 2:
                raise ValueError("U must have shape (d*p, r)")
            if self.S.shape != (self.U.shape[1],):
                raise ValueError("S must be a length-r vector of diagonals")
            if np.any(self.S <= 0):
                raise ValueError("diagonal entries of S must be positive")
        else:
            for name, V, T, n in (("input", self.V1, self.T1, d), ("output", self.V2, self.T2, p)):
                if V is None or T is None:
                    raise ValueError(f"separable distribution requires the {name} factor")
                if V.shape[0] != n or V.ndim != 2 or T.shape != (V.shape[1],):
                    raise ValueError(f"inconsistent {name} factor shapes")
                if np.any(T <= 0):
                    raise ValueError(f"{name} diagonal entries must be positive")


def build_covariance_factor(dist: FeatureDistribution):
    """Return the covariance factor(s) of a distribution.

    Nonseparable distributions yield one :class:`CovarianceFactor` over the
    flattened frequency space; separable ones yield an ``(input, output)``
    pair.  Sampling uses ``A @ z`` with standard normal ``z`` so the dense
    covariance ``C = A A^T`` is never formed.
    """
    if dist.kind == "nonseparable":
        return CovarianceFactor(dist.U, dist.S)
    return CovarianceFactor(dist.V1, dist.T1), CovarianceFactor(dist.V2, dist.T2)


@dataclass(frozen=True)
class FeatureSet:
    """A concrete draw of M random Fourier features.

    ``Xi`` has shape ``(M, p, d)``, phases ``B`` shape ``(M, p)`` with entries
    in [0, 2*pi], and ``scale`` is the common amplitude factor.
    """

    scale: float
    Xi: np.ndarray
    B: np.ndarray
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.Xi.ndim != 3 or self.B.shape != self.Xi.shape[:2]:
            raise ValueError("Xi must be (M, p, d) with matching phases (M, p)")
        if self.count < 1:
            raise ValueError("a feature set needs at least one feature")
        if np.any(self.B < 0) or np.any(self.B > 2 * np.pi):
            raise ValueError("phases must lie in [0, 2*pi]")
        # (M*p, d) view used by the evaluation matmul
        object.__setattr__(self, "_flat", np.ascontiguousarray(
            self.Xi.reshape(self.count * self.output_dim, self.input_dim)))

    @property
    def count(self) -> int:
        return self.Xi.shape[0]

    @property
    def output_dim(self) -> int:
        return self.Xi.shape[1]

    @property
    def input_dim(self) -> int:
        return self.Xi.shape[2]


def sample_features(dist: FeatureDistribution, M: int, rng: np.random.Generator) -> FeatureSet:
    """Draw M features (frequencies and phases) from the distribution."""
    if M < 1:
        raise ValueError("M must be at least 1")
    d, p = dist.input_dim, dist.output_dim
    if dist.kind == "nonseparable":
        factor = build_covariance_factor(dist)
        Z = rng.standard_normal((d * p, M))
        Xi = factor.matmat(Z).T.reshape(M, p, d)
    else:
        fin, fout = build_covariance_factor(dist)
        Z = rng.standard_normal((M, p, d))
        # Xi_m = A_out Z_m A_in^T, i.e. MatrixNormal(0, C_in, C_out)
        Xi = np.einsum("ij,mjk,lk->mil", fout.dense(), Z, fin.dense(), optimize=True)
    B = rng.uniform(0.0, 2.0 * np.pi, size=(M, p))
    return FeatureSet(scale=dist.scale, Xi=Xi, B=B)


def evaluate_features(features: FeatureSet, X: np.ndarray) -> np.ndarray:
    """Evaluate the feature matrix Phi on N input points.

    Returns an ``(N*p, M)`` array whose column ``m`` stacks
    ``sqrt(scale) * cos(Xi_m x_n + B_m)`` over the points; rows are grouped in
    blocks of ``p`` per point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M, p, d = features.Xi.shape
    if X.shape[1] != d:
        raise ValueError(f"inputs have dimension {X.shape[1]}, features expect {d}")
    N = X.shape[0]
    T = (X @ features._flat.T).reshape(N, M, p)
    T += features.B[None, :, :]
    np.cos(T, out=T)
    T *= np.sqrt(features.scale)
    return np.ascontiguousarray(T.transpose(0, 2, 1)).reshape(N * p, M)


def evaluate_features_point(features: FeatureSet, x: np.ndarray) -> np.ndarray:
    """Feature matrix at one input point, shape ``(p, M)``."""
    x = np.asarray(x, dtype=float).ravel()
    M, p, _ = features.Xi.shape
    return evaluate_features(features, x[None, :]).reshape(p, M)


def approximate_kernel(features: FeatureSet, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Monte Carlo kernel K_M(x, x') = (1/M) sum_m phi(x) phi(x')^T, shape (p, p)."""
    px = evaluate_features_point(features, x)
    px2 = px if x2 is x else evaluate_features_point(features, x2)
    return px @ px2.T / features.count


def save_feature_set(path, features: FeatureSet) -> None:
    """Serialize a feature set so a tuned emulator can be reloaded bit-exactly."""
    np.savez(path, scale=features.scale, Xi=features.Xi, B=features.B)


def load_feature_set(path) -> FeatureSet:
    with np.load(path) as data:
        return FeatureSet(scale=float(data["scale"]), Xi=data["Xi"], B=data["B"])
