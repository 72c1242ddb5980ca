"""Variance-based global sensitivity analysis.

Quasi-random designs come from a Sobol sequence; first-order indices use the
Saltelli estimator and total-order indices the Jansen estimator.  The two
classic test functions (Ishigami and Sobol G) ship with their closed-form
index values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

__all__ = [
    "ZeroVarianceError",
    "sobol_sequence",
    "SobolDesign",
    "sobol_design",
    "design_points",
    "SobolSamples",
    "evaluate_design",
    "samples_from_values",
    "first_order_indices",
    "total_order_indices",
    "ishigami",
    "sobol_g",
    "sobol_g_coefficients",
    "analytic_indices",
]

MAX_SOBOL_DIM = 21201  # direction numbers shipped with scipy


class ZeroVarianceError(ValueError):
    """The sampled model output has (numerically) no variance."""


def sobol_sequence(d: int, n: int, skip: int = 0) -> np.ndarray:
    """Points of the unscrambled Sobol sequence in [0, 1)^d.

    Convention: generation starts at sequence index 1, so with ``skip=0`` the
    first emitted point is (0.5, ..., 0.5); ``skip`` discards further initial
    points.
    """
    if not 1 <= d <= MAX_SOBOL_DIM:
        raise ValueError(f"dimension {d} outside the supported range [1, {MAX_SOBOL_DIM}]")
    if n < 1:
        raise ValueError("at least one point must be requested")
    engine = qmc.Sobol(d=d, scramble=False)
    engine.fast_forward(1 + skip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # power-of-two advice
        return engine.random(n)


@dataclass(frozen=True)
class SobolDesign:
    """Saltelli blocks: base samples A, B and the radial blocks A_B^(i)."""

    A: np.ndarray  # (n, d)
    B: np.ndarray  # (n, d)
    AB: np.ndarray  # (d, n, d); A with column i replaced from B

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_base(self) -> int:
        return self.A.shape[0]


def sobol_design(d: int, n_base: int, skip: int = 0) -> SobolDesign:
    """Build the (d+2)-block Saltelli design from a 2d-dimensional sequence."""
    joint = sobol_sequence(2 * d, n_base, skip=skip)
    A, B = joint[:, :d], joint[:, d:]
    AB = np.repeat(A[None, :, :], d, axis=0)
    for i in range(d):
        AB[i, :, i] = B[:, i]
    return SobolDesign(A=A, B=B, AB=AB)


def design_points(design: SobolDesign) -> np.ndarray:
    """All design points stacked as [A; B; A_B^(1); ...; A_B^(d)]."""
    return np.concatenate([design.A, design.B,
                           design.AB.reshape(-1, design.dim)])


@dataclass(frozen=True)
class SobolSamples:
    f_A: np.ndarray  # (n,)
    f_B: np.ndarray  # (n,)
    f_AB: np.ndarray  # (d, n)


def evaluate_design(f, design: SobolDesign) -> SobolSamples:
    """Evaluate a vectorized function f((n, d)) -> (n,) on all blocks."""
    values = np.asarray(f(design_points(design)), dtype=float).ravel()
    return samples_from_values(values, design)


def samples_from_values(values: np.ndarray, design: SobolDesign) -> SobolSamples:
    """Split stacked evaluations (ordered as :func:`design_points`) into blocks."""
    n, d = design.n_base, design.dim
    values = np.asarray(values, dtype=float).ravel()
    if values.size != n * (d + 2):
        raise ValueError(f"expected {n * (d + 2)} values, got {values.size}")
    return SobolSamples(f_A=values[:n], f_B=values[n:2 * n],
                        f_AB=values[2 * n:].reshape(d, n))


def _as_samples(f_or_samples, design) -> SobolSamples:
    if isinstance(f_or_samples, SobolSamples):
        return f_or_samples
    if design is None:
        raise ValueError("a design is required when passing a function")
    return evaluate_design(f_or_samples, design)


def _total_variance(samples: SobolSamples) -> float:
    pooled = np.concatenate([samples.f_A, samples.f_B])
    var = float(pooled.var())
    if var <= np.finfo(float).eps * max(1.0, float(np.abs(pooled).max()) ** 2):
        raise ZeroVarianceError("model output variance is numerically zero")
    return var


def first_order_indices(f_or_samples, design: SobolDesign | None = None) -> np.ndarray:
    """Saltelli estimator of V_i; values near zero may be slightly negative."""
    s = _as_samples(f_or_samples, design)
    var = _total_variance(s)
    return np.array([np.mean(s.f_B * (s.f_AB[i] - s.f_A)) / var
                     for i in range(s.f_AB.shape[0])])


def total_order_indices(f_or_samples, design: SobolDesign | None = None) -> np.ndarray:
    """Jansen estimator of TV_i."""
    s = _as_samples(f_or_samples, design)
    var = _total_variance(s)
    return np.array([0.5 * np.mean((s.f_A - s.f_AB[i]) ** 2) / var
                     for i in range(s.f_AB.shape[0])])


def ishigami(x: np.ndarray, a: float = 7.0, b: float = 0.1) -> np.ndarray:
    """Classic three-input test map (1 + b x3^4) sin(x1) + a sin(x2)^2 on [-pi, pi]^3."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return (1.0 + b * x[:, 2] ** 4) * np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2


def sobol_g_coefficients(d: int) -> np.ndarray:
    """Default interaction coefficients a_i = (i - 1) / 2, i = 1..d."""
    return (np.arange(d, dtype=float)) / 2.0


def sobol_g(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Product test function prod_i (|4 x_i - 2| + a_i) / (1 + a_i) on [0,1]^d."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("coefficients must be nonnegative")
    if x.shape[1] != a.size:
        raise ValueError("coefficient count must match the input dimension")
    return np.prod((np.abs(4.0 * x - 2.0) + a) / (1.0 + a), axis=1)


def analytic_indices(tag: str, d: int | None = None, a=None, b: float = 0.1):
    """Closed-form (V_i, TV_i) for the supported test functions."""
    if tag == "ishigami":
        a_val = 7.0 if a is None else float(a)
        direct1 = 0.5 * (1.0 + b * np.pi ** 4 / 5.0) ** 2
        direct2 = a_val ** 2 / 8.0
        interact13 = b ** 2 * np.pi ** 8 * (1.0 / 18.0 - 1.0 / 50.0)
        total = direct1 + direct2 + interact13
        V = np.array([direct1, direct2, 0.0]) / total
        TV = np.array([direct1 + interact13, direct2, interact13]) / total
        return V, TV
    if tag == "sobol_g":
        if a is None:
            if d is None:
                raise ValueError("sobol_g needs either coefficients or a dimension")
            a = sobol_g_coefficients(d)
        a = np.asarray(a, dtype=float)
        partial = (1.0 / 3.0) / (1.0 + a) ** 2
        total = np.prod(1.0 + partial) - 1.0
        if total < 1e-12:  # numerically constant function: report no sensitivity
            return np.zeros(a.size), np.zeros(a.size)
        V = partial / total
        TV = np.array([partial[i] * np.prod(np.delete(1.0 + partial, i)) / total
                       for i in range(a.size)])
        return V, TV
    raise ValueError(f"unknown test function {tag!r}")
