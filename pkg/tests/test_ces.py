"""Posterior construction, Metropolis kernel, and step-size adaptation."""

import numpy as np
import pytest
from scipy import integrate, stats

from randfeat.ces import (BoundedLogitPrior, EmulatedPosterior, GaussianPrior,
                          MCMCChain, StepSizeError, SyntheticForwardMap,
                          emulated_neg_log_posterior, run_chain, rwm_step,
                          tune_step_size)


def standard_normal_posterior(dim=1):
    prior = GaussianPrior(np.zeros(dim), np.ones(dim))
    # flat likelihood: y = G(theta) identically
    return EmulatedPosterior(lambda t: np.zeros(1), prior, np.zeros(1),
                             np.eye(1))


def test_gaussian_prior_matches_scipy():
    prior = GaussianPrior(np.array([1.0, -2.0]), np.array([0.5, 3.0]))
    theta = np.array([0.3, 0.1])
    expected = stats.norm.logpdf(theta, [1.0, -2.0], [0.5, 3.0]).sum()
    assert prior.logpdf(theta) == pytest.approx(expected, rel=1e-12)


def test_bounded_logit_prior_support_and_median():
    prior = BoundedLogitPrior(bounds=[(0.0, 1.0), (0.01, 1.0)],
                              centers=[0.13, 0.4])
    rng = np.random.default_rng(0)
    draws = np.array([prior.sample(rng) for _ in range(20_000)])
    assert np.all(draws > [0.0, 0.01]) and np.all(draws < 1.0)
    med = np.median(draws, axis=0)
    assert np.abs(med - [0.13, 0.4]).max() < 0.01
    assert prior.logpdf(np.array([-0.1, 0.5])) == -np.inf
    # round trip through the latent coordinates
    theta = np.array([0.3, 0.7])
    assert np.abs(prior.from_latent(prior.to_latent(theta)) - theta).max() < 1e-12


def test_bounded_logit_prior_normalized():
    prior = BoundedLogitPrior(bounds=[(0.0, 2.0)], centers=[0.5])
    total, _ = integrate.quad(lambda t: np.exp(prior.logpdf(np.array([t]))),
                              1e-12, 2.0 - 1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_neg_log_posterior_prior_mode_reduction():
    prior = GaussianPrior(np.zeros(2), np.ones(2))
    gamma = 2.0 * np.eye(3)
    post = EmulatedPosterior(lambda t: np.array([1.0, 2.0, 3.0]), prior,
                             np.array([1.0, 2.0, 3.0]), gamma)
    val = post.neg_log(np.zeros(2))
    expected = 0.5 * np.log(np.linalg.det(gamma)) - prior.logpdf(np.zeros(2))
    assert val == pytest.approx(expected, rel=1e-12)


def test_neg_log_posterior_linear_gaussian_closed_form():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 2))
    y = rng.standard_normal(4)
    prior = GaussianPrior(np.zeros(2), np.ones(2))
    post = EmulatedPosterior(lambda t: A @ t, prior, y, np.eye(4))
    theta = rng.standard_normal(2)
    resid = y - A @ theta
    expected = 0.5 * resid @ resid - prior.logpdf(theta)
    assert post.neg_log(theta) == pytest.approx(expected, rel=1e-10)


def test_neg_log_posterior_monotone_in_residual():
    prior = GaussianPrior(np.zeros(1), np.ones(1))
    vals = []
    for target in (0.0, 1.0, 2.0):
        post = EmulatedPosterior(lambda t: np.array([0.0]), prior,
                                 np.array([target]), np.eye(1))
        vals.append(post.neg_log(np.zeros(1)))
    assert vals[0] < vals[1] < vals[2]


def test_out_of_support_is_rejected():
    prior = BoundedLogitPrior(bounds=[(0.0, 1.0)], centers=[0.5])
    post = EmulatedPosterior(lambda t: t, prior, np.array([0.5]), np.eye(1))
    assert emulated_neg_log_posterior(np.array([1.5]), post) == np.inf
    chain = MCMCChain.start(np.array([0.5]), post, step_size=5.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        rwm_step(chain, post, 5.0, rng)
    samples = chain.as_array()
    assert np.all((samples > 0.0) & (samples < 1.0))


def test_pointwise_covariance_reduces_to_constant_case():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 2))
    y = rng.standard_normal(3)
    prior = GaussianPrior(np.zeros(2), np.ones(2))
    gamma = 0.7 * np.eye(3)
    exact = EmulatedPosterior(lambda t: A @ t, prior, y, gamma)
    padded = EmulatedPosterior(lambda t: A @ t, prior, y, gamma,
                               cov_fn=lambda t: np.zeros((3, 3)))
    for theta in rng.standard_normal((5, 2)):
        assert exact.neg_log(theta) == pytest.approx(padded.neg_log(theta), rel=1e-12)


def test_rwm_step_zero_step_always_accepts():
    post = standard_normal_posterior()
    chain = MCMCChain.start(np.array([0.3]), post, 0.0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        rwm_step(chain, post, 0.0, rng)
    assert chain.n_accept == 10
    assert np.allclose(chain.as_array(), 0.3)


def test_rwm_chain_ergodic_mean():
    post = standard_normal_posterior()
    chain = run_chain(post, np.zeros(1), 100_000, 1000, 2.4,
                      np.random.default_rng(5))
    samples = chain.as_array()
    assert abs(samples.mean()) < 0.05
    assert samples.std() == pytest.approx(1.0, abs=0.05)


def test_metropolis_transition_frequencies_on_three_state_target():
    # random-walk proposals on an embedded lattice {-h, 0, h}: compare the
    # empirical transition frequencies with the analytic Metropolis kernel
    weights = {-1: 0.2, 0: 0.5, 1: 0.3}
    h = 1.0

    class LatticePrior:
        dim = 1

        def in_support(self, theta):
            return int(round(theta[0])) in weights

        def logpdf(self, theta):
            key = int(round(theta[0]))
            return np.log(weights.get(key, 1e-300))

        def sample(self, rng):
            return np.zeros(1)

    post = EmulatedPosterior(lambda t: np.zeros(1), LatticePrior(), np.zeros(1),
                             np.eye(1))
    rng = np.random.default_rng(6)
    state = 0
    counts = np.zeros((3, 3))
    current = post.neg_log(np.array([float(state)]))
    for _ in range(200_000):
        # uniform proposal to one of the two other lattice sites
        others = [s for s in (-1, 0, 1) if s != state]
        proposal = int(rng.choice(others))
        cand = post.neg_log(np.array([float(proposal)]))
        if cand <= current or np.log(rng.uniform()) < current - cand:
            counts[state + 1, proposal + 1] += 1
            state, current = proposal, cand
        else:
            counts[state + 1, state + 1] += 1
    freq = counts / counts.sum(axis=1, keepdims=True)
    pi = np.array([0.2, 0.5, 0.3])
    kernel = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            if i != j:
                kernel[i, j] = 0.5 * min(1.0, pi[j] / pi[i])
        kernel[i, i] = 1.0 - kernel[i].sum()
    assert np.abs(freq - kernel).max() < 0.02


def test_tune_step_size_hits_target_acceptance():
    post = standard_normal_posterior()
    rng = np.random.default_rng(7)
    step = tune_step_size(post, np.zeros(1), rng, initial_step=40.0)
    rate = run_chain(post, np.zeros(1), 20_000, 1000, step,
                     np.random.default_rng(8)).acceptance_rate
    assert 0.18 <= rate <= 0.32


def test_tune_step_size_shrinks_from_oversized_start():
    post = standard_normal_posterior()
    steps = []
    orig = run_chain  # noqa: F841

    # monitor the pilot sequence by re-running the search manually
    from randfeat import ces

    original = ces._pilot_acceptance

    def spy(p, t0, s, n, rng):
        steps.append(s)
        return original(p, t0, s, n, rng)

    ces._pilot_acceptance = spy
    try:
        tune_step_size(post, np.zeros(1), np.random.default_rng(9),
                       initial_step=512.0)
    finally:
        ces._pilot_acceptance = original
    shrinking = steps[:next(i for i, s in enumerate(steps) if s < 10)]
    assert all(a > b for a, b in zip(shrinking, shrinking[1:]))


def test_tune_step_size_deterministic():
    post = standard_normal_posterior(dim=3)
    a = tune_step_size(post, np.zeros(3), np.random.default_rng(10))
    b = tune_step_size(post, np.zeros(3), np.random.default_rng(10))
    assert a == b


def test_tune_step_size_terminates_in_higher_dimensions():
    post = standard_normal_posterior(dim=10)
    step = tune_step_size(post, np.zeros(10), np.random.default_rng(11))
    assert step > 0


def test_tune_step_size_nonconvergence():
    post = standard_normal_posterior()
    with pytest.raises(StepSizeError):
        tune_step_size(post, np.zeros(1), np.random.default_rng(12),
                       initial_step=1e12, max_rounds=2)


def test_run_chain_burn_in_edge():
    post = standard_normal_posterior()
    chain = run_chain(post, np.zeros(1), 10, 9, 0.5, np.random.default_rng(13))
    assert len(chain) == 1
    with pytest.raises(ValueError):
        run_chain(post, np.zeros(1), 10, 10, 0.5, np.random.default_rng(13))


def test_run_chain_linear_gaussian_moments():
    rng = np.random.default_rng(14)
    A = np.array([[1.0, 0.3], [-0.2, 0.8], [0.5, 0.5]])
    theta_true = np.array([0.4, -0.3])
    gamma = 0.05 * np.eye(3)
    y = A @ theta_true + np.linalg.cholesky(gamma) @ rng.standard_normal(3)
    prior = GaussianPrior(np.zeros(2), np.ones(2))
    post_cov = np.linalg.inv(A.T @ np.linalg.inv(gamma) @ A + np.eye(2))
    post_mean = post_cov @ (A.T @ np.linalg.inv(gamma) @ y)
    post = EmulatedPosterior(lambda t: A @ t, prior, y, gamma)
    chain = run_chain(post, post_mean, 100_000, 5000, 0.25,
                      np.random.default_rng(15))
    samples = chain.as_array()
    assert np.abs(samples.mean(axis=0) - post_mean).max() < 0.05
    emp_cov = np.cov(samples.T)
    assert np.abs(emp_cov - post_cov).max() < 0.15 * np.abs(post_cov).max() + 5e-3


def test_synthetic_map_shapes_and_determinism():
    fmap = SyntheticForwardMap.seeded(5, 50, seed=1234)
    fmap2 = SyntheticForwardMap.seeded(5, 50, seed=1234)
    theta = np.linspace(0.1, 0.5, 5)
    assert fmap(theta).shape == (50,)
    assert np.array_equal(fmap(theta), fmap2(theta))
    assert fmap.dim_in == 5 and fmap.dim_out == 50
