"""Dense GP reference: fits, predictions, marginal likelihood, grid tuning."""

import numpy as np
import pytest

from randfeat import rfr
from randfeat.features import sample_features
from randfeat.gpr import (CapExceededError, Kernel, gp_fit, gp_predict,
                          gp_tune_grid, neg_log_marginal_likelihood)
from randfeat.rfr import NoiseModel
from test_features import isotropic_dist


def rbf(ls, var=1.0, d=1):
    return Kernel(kind="rbf_ard", lengthscales=np.full(d, ls), variance=var)


def test_zero_data_zero_coefficients():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 1))
    fitted = gp_fit(rbf(1.0), X, np.zeros(6), NoiseModel(np.array([[0.5]])))
    assert np.abs(fitted.alpha).max() == 0.0


def test_single_point_hand_solve():
    # K(x,x)=1, sigma^2=1, y=2 -> alpha = 1
    fitted = gp_fit(rbf(1.0), np.zeros((1, 1)), np.array([2.0]),
                    NoiseModel(np.array([[1.0]])))
    assert fitted.alpha[0, 0] == pytest.approx(1.0, rel=1e-14)


def test_far_field_returns_prior():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((8, 1))
    Y = rng.standard_normal(8)
    fitted = gp_fit(rbf(0.5, var=1.7), X, Y, NoiseModel(np.array([[0.1]])))
    mean, cov = gp_predict(fitted, np.array([50.0]))
    assert abs(mean[0]) < 1e-6
    assert cov[0, 0] == pytest.approx(1.7, abs=1e-6)


def test_interpolation_in_zero_noise_limit():
    rng = np.random.default_rng(2)
    X = np.linspace(0, 1, 5)[:, None]
    Y = rng.standard_normal(5)
    fitted = gp_fit(rbf(0.4), X, Y, NoiseModel(np.array([[1e-12]])))
    mean, cov = gp_predict(fitted, X[2])
    assert mean[0] == pytest.approx(Y[2], abs=1e-5)
    assert cov[0, 0] < 1e-6


def test_matches_hand_rolled_dense_formulas():
    rng = np.random.default_rng(3)
    d, N = 2, 7
    X = rng.standard_normal((N, d))
    Y = rng.standard_normal(N)
    ls = np.array([0.7, 1.3])
    s2 = 0.2
    kernel = Kernel(kind="rbf_ard", lengthscales=ls, variance=1.4)
    fitted = gp_fit(kernel, X, Y, NoiseModel(np.array([[s2]])))

    def k(a, b):
        return 1.4 * np.exp(-0.5 * np.sum(((a - b) / ls) ** 2))

    K = np.array([[k(a, b) for b in X] for a in X])
    x = rng.standard_normal(d)
    kx = np.array([k(x, b) for b in X])
    alpha = np.linalg.solve(K + s2 * np.eye(N), Y)
    mean_direct = kx @ alpha
    cov_direct = k(x, x) - kx @ np.linalg.solve(K + s2 * np.eye(N), kx)
    mean, cov = gp_predict(fitted, x)
    assert mean[0] == pytest.approx(mean_direct, abs=1e-10)
    assert cov[0, 0] == pytest.approx(cov_direct, abs=1e-10)


def test_posterior_covariance_psd_vector_case():
    rng = np.random.default_rng(4)
    fs = sample_features(isotropic_dist(2, 3, scale=0.7), 10, rng)
    X = rng.standard_normal((5, 2))
    Y = rng.standard_normal((5, 3))
    A = rng.standard_normal((3, 3)) * 0.2
    fitted = gp_fit(Kernel(kind="finite_rank", features=fs), X, Y,
                    NoiseModel(A @ A.T + 0.3 * np.eye(3)))
    for x in rng.standard_normal((6, 2)):
        _, cov = gp_predict(fitted, x)
        assert np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() > -1e-9


def test_finite_rank_fit_reproduces_rfr():
    rng = np.random.default_rng(5)
    fs = sample_features(isotropic_dist(2, 2, scale=0.5), 6, rng)
    X = rng.standard_normal((6, 2))
    Y = rng.standard_normal((6, 2))
    noise = NoiseModel(0.4 * np.eye(2))
    rffit = rfr.fit(fs, X, Y, noise)
    gfit = gp_fit(Kernel(kind="finite_rank", features=fs), X, Y, noise)
    for x in rng.standard_normal((5, 2)):
        mean, _ = gp_predict(gfit, x)
        assert np.abs(mean - rfr.predict_mean(rffit, x[None, :])[0]).max() < 1e-8


def test_nlml_trivial_and_hand_values():
    # K = 0 limit via tiny variance: || Y ||^2 with Sigma = I
    rng = np.random.default_rng(6)
    X = rng.standard_normal((4, 1))
    Y = rng.standard_normal(4)
    tiny = Kernel(kind="rbf_ard", lengthscales=np.array([1.0]), variance=1e-300)
    val = neg_log_marginal_likelihood(tiny, X, Y, NoiseModel(np.array([[1.0]])))
    assert val == pytest.approx(Y @ Y, abs=1e-8)
    # 1x1: K = 1, sigma^2 = 1, y = 2 -> 4/2 + log 2
    val = neg_log_marginal_likelihood(rbf(1.0), np.zeros((1, 1)), np.array([2.0]),
                                      NoiseModel(np.array([[1.0]])))
    assert val == pytest.approx(2.0 + np.log(2.0), rel=1e-12)


def test_nlml_finite_rank_identity_with_rf_components():
    rng = np.random.default_rng(7)
    fs = sample_features(isotropic_dist(2, 2, scale=0.8), 5, rng)
    X = rng.standard_normal((5, 2))
    Y = rng.standard_normal((5, 2))
    A = rng.standard_normal((2, 2)) * 0.3
    noise = NoiseModel(A @ A.T + 0.5 * np.eye(2))
    nlml = neg_log_marginal_likelihood(Kernel(kind="finite_rank", features=fs),
                                       X, Y, noise)
    rffit = rfr.fit(fs, X, Y, noise)
    resid_w = noise.whiten_rows(Y - rfr.predict_mean(rffit, X))
    parts = (rffit.beta @ rffit.beta / fs.count + np.sum(resid_w ** 2)
             + rfr.logdet_term(rffit.system - np.eye(fs.count)))
    assert nlml - 5 * noise.logdet == pytest.approx(parts, abs=1e-8)


def test_grid_tuning_selects_generating_lengthscale():
    grid = [rbf(0.1), rbf(0.5), rbf(2.5)]
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2, 2, size=(64, 1))
        K = np.exp(-0.5 * (X - X.T) ** 2 / 0.5 ** 2)
        Y = np.linalg.cholesky(K + 1e-10 * np.eye(64)) @ rng.standard_normal(64)
        Y += 0.1 * rng.standard_normal(64)
        best = gp_tune_grid(X, Y, NoiseModel(np.array([[0.01]])), grid)
        hits += best.lengthscales[0] == 0.5
    assert hits >= 45


def test_grid_tuning_trivial_and_idempotent():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((10, 1))
    Y = rng.standard_normal(10)
    noise = NoiseModel(np.array([[0.5]]))
    only = rbf(0.9)
    assert gp_tune_grid(X, Y, noise, [only]) is only
    grid = [rbf(0.3), rbf(1.0), rbf(3.0)]
    winner = gp_tune_grid(X, Y, noise, grid)
    assert gp_tune_grid(X, Y, noise, grid + [winner]) is winner


def test_cap_enforced():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((30, 1))
    Y = rng.standard_normal((30, 2))
    with pytest.raises(CapExceededError):
        gp_fit(rbf(1.0), X, Y, NoiseModel(np.eye(2)), cap=50)
