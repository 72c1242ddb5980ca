"""Hyperparameter search space for feature distributions.

The optimizer works on an unconstrained real vector ``u``.  Positive
parameters (the amplitude and the diagonal factors) are represented by their
logarithms; low-rank factor entries are unconstrained.  The packing order is
frozen:

    nonseparable: [log scale, U column-major (d*p*r), log diag S (r)]
    separable:    [log scale, V1 column-major (d*r_in), log diag T1 (r_in),
                   V2 column-major (p*r_out), log diag T2 (r_out)]

Priors are independent per coordinate: log-normal on the positive parameters
with 99% of the support covering (1e-3, 1e3), Gaussian on factor entries with
99% of the support covering (-300, 300).  In unconstrained coordinates every
prior marginal is therefore a centered Gaussian.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .features import FeatureDistribution

__all__ = [
    "HyperparamSpec",
    "PriorSpec",
    "parameter_count",
    "constrain",
    "unconstrain",
    "default_prior",
    "sample_prior",
    "prior_logpdf",
    "SCALE_LOG_STD",
    "FACTOR_STD",
]

# 99% central interval <-> 2.5758 standard deviations
_Q995 = norm.ppf(0.995)
SCALE_LOG_STD = math.log(1e3) / _Q995  # ~2.6817, log-normal spread for positive params
FACTOR_STD = 300.0 / _Q995  # ~116.47, Gaussian spread for factor entries


@dataclass(frozen=True)
class HyperparamSpec:
    """Shape of the search space: data dimensions plus covariance rank(s)."""

    input_dim: int
    output_dim: int
    kind: str = "nonseparable"
    rank: int | None = None
    rank_in: int | None = None
    rank_out: int | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.kind == "nonseparable":
            if self.rank is None or not 1 <= self.rank <= self.input_dim * self.output_dim:
                raise ValueError(f"invalid rank {self.rank} for nonseparable spec")
        elif self.kind == "separable":
            if self.rank_in is None or not 1 <= self.rank_in <= self.input_dim:
                raise ValueError(f"invalid input rank {self.rank_in}")
            if self.rank_out is None or not 1 <= self.rank_out <= self.output_dim:
                raise ValueError(f"invalid output rank {self.rank_out}")
        else:
            raise ValueError(f"unknown spec kind {self.kind!r}")


def parameter_count(spec: HyperparamSpec) -> int:
    """Number of unconstrained coordinates.

    With diagonal inner factors the count is ``r*(d*p + 1) + 1`` in the
    nonseparable case and ``r_in*(d + 1) + r_out*(p + 1) + 1`` in the
    separable case (amplitude + factor entries + diagonals).
    """
    d, p = spec.input_dim, spec.output_dim
    if spec.kind == "nonseparable":
        return spec.rank * (d * p + 1) + 1
    return spec.rank_in * (d + 1) + spec.rank_out * (p + 1) + 1


def _check_length(u: np.ndarray, spec: HyperparamSpec) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    q = parameter_count(spec)
    if u.shape[0] != q:
        raise ValueError(f"expected {q} coordinates for this spec, got {u.shape[0]}")
    if not np.all(np.isfinite(u)):
        raise ValueError("hyperparameter vector contains non-finite entries")
    return u


def constrain(u: np.ndarray, spec: HyperparamSpec) -> FeatureDistribution:
    """Map an unconstrained vector to the feature distribution it encodes."""
    u = _check_length(u, spec)
    d, p = spec.input_dim, spec.output_dim
    scale = math.exp(u[0])
    if spec.kind == "nonseparable":
        r = spec.rank
        U = u[1:1 + d * p * r].reshape(d * p, r, order="F")
        S = np.exp(u[1 + d * p * r:])
        return FeatureDistribution("nonseparable", d, p, scale, U=U, S=S)
    r1, r2 = spec.rank_in, spec.rank_out
    i = 1
    V1 = u[i:i + d * r1].reshape(d, r1, order="F")
    i += d * r1
    T1 = np.exp(u[i:i + r1])
    i += r1
    V2 = u[i:i + p * r2].reshape(p, r2, order="F")
    i += p * r2
    T2 = np.exp(u[i:])
    return FeatureDistribution("separable", d, p, scale, V1=V1, T1=T1, V2=V2, T2=T2)


def unconstrain(dist: FeatureDistribution, spec: HyperparamSpec) -> np.ndarray:
    """Exact inverse of :func:`constrain`."""
    if dist.kind != spec.kind or dist.input_dim != spec.input_dim \
            or dist.output_dim != spec.output_dim:
        raise ValueError("distribution does not match the spec")
    if dist.scale <= 0:
        raise ValueError("scale must be positive")
    parts = [np.array([math.log(dist.scale)])]
    if spec.kind == "nonseparable":
        if dist.U.shape != (spec.input_dim * spec.output_dim, spec.rank):
            raise ValueError("factor shape does not match the spec rank")
        if np.any(dist.S <= 0):
            raise ValueError("diagonal entries must be positive")
        parts += [dist.U.ravel(order="F"), np.log(dist.S)]
    else:
        if dist.V1.shape[1] != spec.rank_in or dist.V2.shape[1] != spec.rank_out:
            raise ValueError("factor shapes do not match the spec ranks")
        if np.any(dist.T1 <= 0) or np.any(dist.T2 <= 0):
            raise ValueError("diagonal entries must be positive")
        parts += [dist.V1.ravel(order="F"), np.log(dist.T1),
                  dist.V2.ravel(order="F"), np.log(dist.T2)]
    u = np.concatenate(parts)
    return _check_length(u, spec)


@dataclass(frozen=True)
class PriorSpec:
    """Independent per-coordinate priors, stored in packing order.

    ``tags`` marks each constrained parameter as ``"lognormal"`` (positive,
    log-transformed) or ``"gaussian"``; ``stds`` are the standard deviations
    of the corresponding unconstrained Gaussian coordinates.
    """

    tags: tuple
    stds: np.ndarray
    groups: tuple  # (name, tag, count, std) in packing order, for serialization

    def __post_init__(self):
        if len(self.tags) != self.stds.shape[0]:
            raise ValueError("one std per coordinate required")
        if any(t not in ("lognormal", "gaussian") for t in self.tags):
            raise ValueError("unknown prior tag")

    def __len__(self) -> int:
        return len(self.tags)

    def to_json(self) -> str:
        doc = {"groups": [
            {"name": name, "kind": tag, "count": count, "std": std}
            for name, tag, count, std in self.groups
        ]}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PriorSpec":
        doc = json.loads(text)
        groups = tuple((g["name"], g["kind"], int(g["count"]), float(g["std"]))
                       for g in doc["groups"])
        return cls.from_groups(groups)

    @classmethod
    def from_groups(cls, groups) -> "PriorSpec":
        tags, stds = [], []
        for _, tag, count, std in groups:
            tags += [tag] * count
            stds += [std] * count
        return cls(tuple(tags), np.array(stds), tuple(groups))


def default_prior(spec: HyperparamSpec) -> PriorSpec:
    """Priors from the stated 99% support intervals, one group per block."""
    d, p = spec.input_dim, spec.output_dim
    if spec.kind == "nonseparable":
        groups = (
            ("scale", "lognormal", 1, SCALE_LOG_STD),
            ("factor", "gaussian", d * p * spec.rank, FACTOR_STD),
            ("diagonal", "lognormal", spec.rank, SCALE_LOG_STD),
        )
    else:
        groups = (
            ("scale", "lognormal", 1, SCALE_LOG_STD),
            ("input_factor", "gaussian", d * spec.rank_in, FACTOR_STD),
            ("input_diagonal", "lognormal", spec.rank_in, SCALE_LOG_STD),
            ("output_factor", "gaussian", p * spec.rank_out, FACTOR_STD),
            ("output_diagonal", "lognormal", spec.rank_out, SCALE_LOG_STD),
        )
    prior = PriorSpec.from_groups(groups)
    if len(prior) != parameter_count(spec):
        raise AssertionError("prior layout out of sync with parameter count")
    return prior


def _check_prior(prior: PriorSpec, spec: HyperparamSpec) -> None:
    if len(prior) != parameter_count(spec):
        raise ValueError("prior does not match the spec layout")


def sample_prior(prior: PriorSpec, spec: HyperparamSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw one unconstrained vector whose constrained image follows the prior."""
    _check_prior(prior, spec)
    return rng.standard_normal(len(prior)) * prior.stds


def prior_logpdf(prior: PriorSpec, u: np.ndarray) -> float:
    """Log density of the prior in unconstrained coordinates (sum of Gaussians)."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != len(prior):
        raise ValueError("length mismatch between vector and prior")
    z = u / prior.stds
    return float(-0.5 * np.sum(z * z) - np.sum(np.log(prior.stds))
                 - 0.5 * len(prior) * math.log(2.0 * math.pi))
