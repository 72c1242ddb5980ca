"""Random feature regression with ensemble-Kalman-tuned sampling distributions.

The package provides vector-valued random Fourier feature regression, a dense
Gaussian process reference, ensemble Kalman inversion, the hyperparameter
tuning inverse problem connecting them, and the sensitivity-analysis,
chaotic-integrator, and emulator-accelerated-MCMC experiment harnesses.
"""

from .backend import BACKEND
from .features import (FeatureDistribution, FeatureSet, approximate_kernel,
                       build_covariance_factor, evaluate_features,
                       load_feature_set, sample_features, save_feature_set)
from .hyperparams import (HyperparamSpec, PriorSpec, constrain, default_prior,
                          parameter_count, prior_logpdf, sample_prior,
                          unconstrain)
from .rfr import NoiseModel, RFFit, fit, gram_matrix, logdet_term, predict_cov, predict_mean

__all__ = [
    "BACKEND",
    "__version__",
    "FeatureDistribution",
    "FeatureSet",
    "approximate_kernel",
    "build_covariance_factor",
    "evaluate_features",
    "load_feature_set",
    "sample_features",
    "save_feature_set",
    "HyperparamSpec",
    "PriorSpec",
    "constrain",
    "default_prior",
    "parameter_count",
    "prior_logpdf",
    "sample_prior",
    "unconstrain",
    "NoiseModel",
    "RFFit",
    "fit",
    "gram_matrix",
    "logdet_term",
    "predict_cov",
    "predict_mean",
]

__version__ = "0.1.0"
