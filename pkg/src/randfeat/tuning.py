"""Hyperparameter learning as a stochastic inverse problem.

The forward map draws features from the candidate distribution, fits the
regressor on a training partition and emits, for each stacked validation
partition,

    [ predictions at held-out points ; ||beta|| / sqrt(M) ; sqrt(log det(G + I)) ],

which is compared against the observable [held-out data ; 0 ; 0].  The
observation covariance combines the Monte Carlo variability of the forward
map (estimated offline at the prior mean and shrunk toward a scaled identity)
with the data-noise blocks.  Ensemble Kalman inversion then minimizes the
implied misfit; all of it operates on whitened data.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from . import eki, rfr
from .features import FeatureDistribution, sample_features
from .hyperparams import HyperparamSpec, PriorSpec, constrain, parameter_count
from .rfr import NoiseModel
from .shrinkage import ledoit_wolf_covariance

__all__ = [
    "DegenerateDataError",
    "InvalidPartitionError",
    "Transforms",
    "whiten_data",
    "PartitionScheme",
    "make_partitions",
    "TuningProblem",
    "forward_map",
    "assemble_observable",
    "GammaEstimate",
    "estimate_gamma",
    "build_problem",
    "search_prior",
    "refine_scale",
    "TuneResult",
    "tune",
    "eb_objective",
]


class DegenerateDataError(ValueError):
    """Raised when an input coordinate carries no variance."""


class InvalidPartitionError(ValueError):
    """Raised when the requested partition layout is impossible."""


@dataclass(frozen=True)
class Transforms:
    """Affine maps between raw and whitened coordinates."""

    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_whiten: np.ndarray  # W = Cov^{-1/2}
    output_color: np.ndarray  # W^{-1}

    def whiten_inputs(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(X) - self.input_mean) / self.input_std

    def unwhiten_inputs(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) * self.input_std + self.input_mean

    def whiten_outputs(self, Y: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(Y) - self.output_mean) @ self.output_whiten.T

    def unwhiten_outputs(self, Y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Y) @ self.output_color.T + self.output_mean

    def whiten_output_cov(self, sigma: np.ndarray) -> np.ndarray:
        s = self.output_whiten @ sigma @ self.output_whiten.T
        return 0.5 * (s + s.T)

    def unwhiten_output_cov(self, sigma: np.ndarray) -> np.ndarray:
        s = self.output_color @ sigma @ self.output_color.T
        return 0.5 * (s + s.T)

    def to_arrays(self) -> dict:
        return {"input_mean": self.input_mean, "input_std": self.input_std,
                "output_mean": self.output_mean, "output_whiten": self.output_whiten,
                "output_color": self.output_color}

    @classmethod
    def from_arrays(cls, arrays) -> "Transforms":
        return cls(*(np.asarray(arrays[k]) for k in
                     ("input_mean", "input_std", "output_mean",
                      "output_whiten", "output_color")))


def _symmetric_inv_sqrt(C: np.ndarray):
    vals, vecs = linalg.eigh(C)
    if np.any(vals <= 0):
        raise DegenerateDataError("output covariance is not positive definite")
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    sqrt = (vecs * np.sqrt(vals)) @ vecs.T
    return inv_sqrt, sqrt


def whiten_data(X_raw: np.ndarray, Y_raw: np.ndarray, sigma_raw: np.ndarray):
    """Standardize inputs, decorrelate outputs, and map the noise along.

    Inputs are shifted/scaled to zero mean and unit variance per coordinate.
    Outputs are centered and multiplied by the inverse square root of a
    shrinkage-regularized sample covariance, so their variability is close to
    identity; the noise covariance is mapped through the same transform.
    """
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    Y_raw = np.asarray(Y_raw, dtype=float)
    if Y_raw.ndim == 1:
        Y_raw = Y_raw[:, None]
    if X_raw.shape[0] != Y_raw.shape[0]:
        raise ValueError("input/output sample counts disagree")
    if X_raw.shape[0] < 2:
        raise ValueError("at least two samples are required for whitening")

    in_mean = X_raw.mean(axis=0)
    in_std = X_raw.std(axis=0)
    if np.any(in_std <= 0):
        raise DegenerateDataError("an input coordinate has zero variance")

    out_mean = Y_raw.mean(axis=0)
    cov, _ = ledoit_wolf_covariance(Y_raw)
    whiten, color = _symmetric_inv_sqrt(cov)
    transforms = Transforms(in_mean, in_std, out_mean, whiten, color)

    sigma_raw = np.atleast_2d(np.asarray(sigma_raw, dtype=float))
    X = transforms.whiten_inputs(X_raw)
    Y = transforms.whiten_outputs(Y_raw)
    return X, Y, transforms.whiten_output_cov(sigma_raw), transforms


@dataclass(frozen=True)
class PartitionScheme:
    """Disjoint equal-size groups; the first ``n_cv`` act as validation sets."""

    groups: np.ndarray  # (K, N/K) index array
    n_cv: int

    def __post_init__(self):
        K, size = self.groups.shape
        if not 1 <= self.n_cv <= K:
            raise InvalidPartitionError("stacked partition count out of range")
        flat = np.sort(self.groups.ravel())
        if not np.array_equal(flat, np.arange(flat.size)):
            raise InvalidPartitionError("groups must partition the index range")

    @property
    def n_groups(self) -> int:
        return self.groups.shape[0]

    @property
    def group_size(self) -> int:
        return self.groups.shape[1]

    @property
    def n_points(self) -> int:
        return self.groups.size

    def validation_indices(self, j: int) -> np.ndarray:
        return self.groups[j]

    def training_indices(self, j: int) -> np.ndarray:
        mask = np.ones(self.n_points, dtype=bool)
        mask[self.groups[j]] = False
        return np.nonzero(mask)[0]


def make_partitions(N: int, n_groups: int, n_cv: int,
                    rng: np.random.Generator) -> PartitionScheme:
    """Randomly assign [N] to ``n_groups`` disjoint groups of equal size."""
    if n_groups < 1 or N % n_groups != 0:
        raise InvalidPartitionError(f"{n_groups} groups cannot evenly split {N} points")
    if not 1 <= n_cv <= n_groups:
        raise InvalidPartitionError("n_cv must lie between 1 and the group count")
    perm = rng.permutation(N)
    return PartitionScheme(groups=perm.reshape(n_groups, N // n_groups), n_cv=n_cv)


@dataclass(frozen=True)
class TuningProblem:
    """Whitened data plus everything the stochastic forward map needs."""

    X: np.ndarray  # (N, d) whitened inputs
    Y: np.ndarray  # (N, p) whitened outputs
    noise: NoiseModel  # noise in whitened coordinates
    spec: HyperparamSpec
    M_tune: int
    partitions: PartitionScheme
    transforms: Transforms | None = None
    resample_per_partition: bool = False  # fresh feature draw per stacked partition

    def __post_init__(self):
        N = self.X.shape[0]
        if self.Y.shape[0] != N or self.partitions.n_points != N:
            raise ValueError("data and partition sizes disagree")
        if self.M_tune < 1:
            raise ValueError("M_tune must be at least 1")
        if np.abs(self.X.mean(axis=0)).max() > 1e-8 \
                or np.abs(self.X.std(axis=0) - 1.0).max() > 1e-8:
            raise ValueError("inputs must be whitened to zero mean, unit variance")

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def output_dim(self) -> int:
        return self.Y.shape[1]

    def observable_dim(self) -> int:
        return self.partitions.n_cv * (self.output_dim * self.partitions.group_size + 2)


def _partition_output(problem: TuningProblem, features, j: int) -> np.ndarray:
    train = problem.partitions.training_indices(j)
    val = problem.partitions.validation_indices(j)
    fit = rfr.fit(features, problem.X[train], problem.Y[train], problem.noise)
    preds = rfr.predict_mean(fit, problem.X[val]).ravel()
    beta_norm = np.linalg.norm(fit.beta) / np.sqrt(features.count)
    logdet = rfr.logdet_term(fit.system - np.eye(features.count))
    return np.concatenate([preds, [beta_norm, np.sqrt(max(logdet, 0.0))]])


def forward_map(u: np.ndarray, problem: TuningProblem,
                rng: np.random.Generator) -> np.ndarray:
    """Stochastic parameter-to-observable map of the tuning inverse problem.

    Features are redrawn from constrain(u) on every call, so the map is a
    random function of its own law rather than of a fixed sample.
    """
    dist = constrain(u, problem.spec)
    features = None if problem.resample_per_partition \
        else sample_features(dist, problem.M_tune, rng)
    blocks = []
    for j in range(problem.partitions.n_cv):
        fs = sample_features(dist, problem.M_tune, rng) \
            if problem.resample_per_partition else features
        blocks.append(_partition_output(problem, fs, j))
    return np.concatenate(blocks)


def assemble_observable(problem: TuningProblem) -> np.ndarray:
    """Stacked target [Y_validation ; 0 ; 0] matching the forward-map layout."""
    blocks = []
    for j in range(problem.partitions.n_cv):
        val = problem.partitions.validation_indices(j)
        blocks.append(np.concatenate([problem.Y[val].ravel(), [0.0, 0.0]]))
    return np.concatenate(blocks)


@dataclass(frozen=True)
class GammaEstimate:
    """Observation covariance: shrunk feature variability plus noise blocks."""

    gamma: np.ndarray
    block: np.ndarray  # one per-partition block (replicated on the diagonal)
    intensity: float

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


def estimate_gamma(problem: TuningProblem, u_center: np.ndarray | None = None,
                   n_samples: int = 100, rng: np.random.Generator | None = None,
                   workers: int = 1) -> GammaEstimate:
    """Monte Carlo estimate of the forward-map covariance at a fixed point.

    The map is sampled at ``u_center`` (default: the prior mean, i.e. the zero
    vector) over independent feature draws; the per-partition covariance is
    pooled across stacked partitions, shrunk with the Ledoit-Wolf intensity,
    and completed with blockdiag(noise-on-validation, I_2).
    """
    if n_samples < 2:
        raise ValueError("at least two Monte Carlo samples are required")
    if rng is None:
        rng = np.random.default_rng(0)
    if u_center is None:
        u_center = np.zeros(parameter_count(problem.spec))
    seeds = rng.spawn(n_samples)

    def draw(ss):
        return forward_map(u_center, problem, ss)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = np.array(list(pool.map(draw, seeds)))
    else:
        samples = np.array([draw(ss) for ss in seeds])

    scheme = problem.partitions
    p = problem.output_dim
    block_dim = scheme.group_size * p + 2
    # pool per-partition blocks, centered per partition so that differing
    # validation points do not masquerade as feature variability
    blocks = [samples[:, j * block_dim:(j + 1) * block_dim] for j in range(scheme.n_cv)]
    pooled = np.concatenate([b - b.mean(axis=0, keepdims=True) for b in blocks])
    # shrink the prediction block and the regularizer block separately; their
    # scales differ by orders of magnitude and a joint scaled-identity target
    # would swamp the small prediction variances
    n_pred = scheme.group_size * p
    cov_pred, intensity = ledoit_wolf_covariance(pooled[:, :n_pred], assume_centered=True)
    cov_reg, _ = ledoit_wolf_covariance(pooled[:, n_pred:], assume_centered=True)

    block = np.zeros((block_dim, block_dim))
    block[:n_pred, :n_pred] = cov_pred + np.kron(np.eye(scheme.group_size),
                                                 problem.noise.sigma)
    block[n_pred:, n_pred:] = cov_reg + np.eye(2)
    gamma = np.kron(np.eye(scheme.n_cv), block)
    return GammaEstimate(gamma=gamma, block=block, intensity=intensity)


def search_prior(spec: HyperparamSpec, factor_std: float = 2.0) -> PriorSpec:
    """Optimizer-friendly prior for whitened data.

    Keeps the wide log-normal marginals on the positive parameters but
    narrows the factor entries so that initial ensemble members produce
    frequencies on the scale of the standardized inputs; the wide default
    factor prior seeds the ensemble exclusively with unresolvably
    high-frequency kernels that give the inversion no usable signal.
    """
    from .hyperparams import SCALE_LOG_STD

    d, p = spec.input_dim, spec.output_dim
    if spec.kind == "nonseparable":
        groups = (
            ("scale", "lognormal", 1, SCALE_LOG_STD),
            ("factor", "gaussian", d * p * spec.rank, factor_std),
            ("diagonal", "lognormal", spec.rank, SCALE_LOG_STD),
        )
    else:
        groups = (
            ("scale", "lognormal", 1, SCALE_LOG_STD),
            ("input_factor", "gaussian", d * spec.rank_in, factor_std),
            ("input_diagonal", "lognormal", spec.rank_in, SCALE_LOG_STD),
            ("output_factor", "gaussian", p * spec.rank_out, factor_std),
            ("output_diagonal", "lognormal", spec.rank_out, SCALE_LOG_STD),
        )
    return PriorSpec.from_groups(groups)


def _rescale_outputs(problem: TuningProblem, scale: float) -> TuningProblem:
    """Divide whitened outputs by ``scale`` and track it in the transforms."""
    tf = problem.transforms
    if tf is not None:
        tf = Transforms(tf.input_mean, tf.input_std, tf.output_mean,
                        tf.output_whiten / scale, tf.output_color * scale)
    return replace(problem, Y=problem.Y / scale,
                   noise=NoiseModel(problem.noise.sigma / scale ** 2),
                   transforms=tf)


def build_problem(X_raw: np.ndarray, Y_raw: np.ndarray, sigma_raw: np.ndarray,
                  spec: HyperparamSpec, M_tune: int, rng: np.random.Generator,
                  holdout_fraction: float = 0.2, n_cv: int = 2,
                  gamma_samples: int = 100, normalize_variability: bool = True,
                  workers: int = 1):
    """Whiten data, fix partitions, and calibrate the observation covariance.

    Returns a ready ``(TuningProblem, GammaEstimate)`` pair.  With
    ``normalize_variability`` the whitened outputs are rescaled once so the
    forward map's per-coordinate prediction variability at the prior mean is
    about one, and the covariance is re-estimated on that scale; this keeps
    the Kalman updates well conditioned relative to the frozen covariance.
    """
    X, Y, sigma_w, transforms = whiten_data(X_raw, Y_raw, sigma_raw)
    N = X.shape[0]
    group_size = max(1, round(holdout_fraction * N))
    while N % group_size != 0:
        group_size -= 1
    partitions = make_partitions(N, N // group_size, n_cv, rng)
    problem = TuningProblem(X=X, Y=Y, noise=NoiseModel(sigma_w), spec=spec,
                            M_tune=M_tune, partitions=partitions,
                            transforms=transforms)
    gamma = estimate_gamma(problem, n_samples=gamma_samples, rng=rng,
                           workers=workers)
    if normalize_variability:
        n_pred = partitions.group_size * problem.output_dim
        scale = float(np.sqrt(np.trace(gamma.block[:n_pred, :n_pred]) / n_pred))
        problem = _rescale_outputs(problem, scale)
        gamma = estimate_gamma(problem, n_samples=gamma_samples, rng=rng,
                               workers=workers)
    return problem, gamma


def refine_scale(dist: FeatureDistribution, X: np.ndarray, Y: np.ndarray,
                 noise: NoiseModel, M: int, rng: np.random.Generator,
                 factors=(0.25, 0.5, 1.0, 2.0, 4.0),
                 bandwidth_factors=(1.0,),
                 holdout_fraction: float = 0.2):
    """Post-tuning amplitude (and optional bandwidth) selection.

    The inversion's coefficient-norm regularizer biases the amplitude low for
    near-interpolation problems; re-fitting one frozen feature draw at a few
    amplitude multiples and scoring held-out one-step RMSE corrects it using
    training data only.  ``bandwidth_factors`` optionally rescales the drawn
    frequencies as well.  Returns the refined distribution together with the
    frozen draw (already rescaled) so the caller can refit on the full data
    without fresh draw variance; note the returned distribution's factors do
    not absorb the bandwidth choice, which lives in the returned draw.
    """
    from . import rfr as _rfr

    N = X.shape[0]
    n_val = max(1, int(round(holdout_fraction * N)))
    perm = rng.permutation(N)
    train, val = perm[n_val:], perm[:n_val]
    base = sample_features(dist, M, rng)
    best, best_err = (1.0, 1.0), np.inf
    for bandwidth in bandwidth_factors:
        widened = replace(base, Xi=base.Xi * bandwidth) if bandwidth != 1.0 else base
        for factor in factors:
            scaled = replace(widened, scale=dist.scale * factor)
            fitted = _rfr.fit(scaled, X[train], Y[train], noise)
            resid = _rfr.predict_mean(fitted, X[val]) - Y[val]
            err = float(np.sqrt(np.mean(resid ** 2)))
            if err < best_err:
                best, best_err = (factor, bandwidth), err
    refined = replace(dist, scale=dist.scale * best[0])
    chosen = replace(base, Xi=base.Xi * best[1], scale=refined.scale)
    return refined, chosen


@dataclass(frozen=True)
class TuneResult:
    distribution: FeatureDistribution
    u_mean: np.ndarray
    trace: eki.EKITrace
    gamma: GammaEstimate | None
    ensemble: eki.Ensemble | None


class _HyperPrior:
    """Adapter exposing PriorSpec sampling to the inversion loop."""

    def __init__(self, prior: PriorSpec):
        self.prior = prior
        self.mean = np.zeros(len(prior))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(len(self.prior)) * self.prior.stds


def tune(problem: TuningProblem, prior: PriorSpec, settings: eki.EKISettings,
         gamma: GammaEstimate | None = None, workers: int = 1,
         gamma_samples: int = 100) -> TuneResult:
    """Run the inversion and return the constrained ensemble-mean distribution.

    With a zero iteration budget this returns the prior-mean hyperparameters,
    which is the untuned baseline.  The tuned distribution may be resampled
    with any feature count for prediction.
    """
    if len(prior) != parameter_count(problem.spec):
        raise ValueError("prior does not match the problem's hyperparameter spec")
    if settings.n_iter == 0:
        u0 = np.zeros(len(prior))
        return TuneResult(constrain(u0, problem.spec), u0, eki.EKITrace(), gamma, None)
    if gamma is None:
        gamma = estimate_gamma(problem, n_samples=gamma_samples,
                               rng=np.random.default_rng(settings.seed + 1),
                               workers=workers)
    obs = eki.ObservationSpec(assemble_observable(problem), gamma.gamma)

    def fm(u, rng):
        return forward_map(u, problem, rng)

    ensemble, trace = eki.run(fm, _HyperPrior(prior), obs, settings, workers=workers)
    u_mean = ensemble.mean()
    return TuneResult(constrain(u_mean, problem.spec), u_mean, trace, gamma, ensemble)


def eb_objective(u: np.ndarray, problem: TuningProblem,
                 rng: np.random.Generator) -> float:
    """Randomized empirical Bayes objective on the full data (diagnostic).

    ||beta||^2 / M + ||Sigma^{-1/2}(Y - mean(X))||^2 + log det(G + I), with a
    fresh feature draw; equals the negative log marginal likelihood of the
    finite-rank kernel up to the constant N log det Sigma.
    """
    dist = constrain(u, problem.spec)
    features = sample_features(dist, problem.M_tune, rng)
    fitted = rfr.fit(features, problem.X, problem.Y, problem.noise)
    resid = problem.Y - rfr.predict_mean(fitted, problem.X)
    resid_w = problem.noise.whiten_rows(resid)
    logdet = rfr.logdet_term(fitted.system - np.eye(features.count))
    return float(fitted.beta @ fitted.beta / features.count
                 + np.sum(resid_w * resid_w) + logdet)
