"""Configuration-driven experiment pipelines.

Each experiment is a pure function of its resolved configuration: same
config and seed give identical metrics regardless of worker count.  The
returned metrics carry a JSON-able summary plus named tables that the CLI
writes as CSV.
"""

from __future__ import annotations

import numpy as np

from . import ces, dynamics, eki, features, gsa, rfr, tuning
from .hyperparams import HyperparamSpec, default_prior, parameter_count

__all__ = ["ConfigError", "EXPERIMENTS", "experiment_defaults", "resolve_config",
           "run_experiment"]


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


_COMMON_DEFAULTS = {
    "seed": 0,
    "workers": 1,
}

_DEFAULTS = {
    "linear_gaussian_check": {
        **_COMMON_DEFAULTS,
        "ensemble_size": 1000,
        "n_iter": 4,
        "dt": 0.25,
    },
    "ishigami": {
        **_COMMON_DEFAULTS,
        "input_dim": 3,
        "n_train": 300,
        "noise_var": 0.01,
        "n_base": 3200,
        "M_tune": 150,
        "M_predict": 500,
        "ensemble_size": 30,
        "n_iter": 20,
        "rank": 3,
        "n_repeats": 20,
        "holdout_fraction": 0.2,
        "n_cv": 2,
        "gamma_samples": 100,
        "inflation_factor": 0.1,
        "factor_prior_std": 2.0,
        "terminal_time": 1.0,
        "ishigami_a": 7.0,
        "ishigami_b": 0.1,
    },
    "sobol_g": {
        **_COMMON_DEFAULTS,
        "input_dim": 3,
        "n_train_per_dim": 250,
        "noise_var": 0.01,
        "n_base": 2048,
        "M_tune": 150,
        "M_predict": 500,
        "ensemble_size": 60,
        "n_iter": 20,
        "rank": 3,
        "holdout_fraction": 0.2,
        "n_cv": 2,
        "gamma_samples": 100,
        "inflation_factor": 0.1,
        "factor_prior_std": 2.0,
        "terminal_time": 1.0,
        "feature_count_study": [],  # optional list of tuning feature counts
    },
    "lorenz63": {
        **_COMMON_DEFAULTS,
        "n_train": 500,
        "noise_var": 1e-4,
        "dt": 0.01,
        "train_time": 20.0,
        "rollout_time": 1000.0,
        "spinup_time": 10.0,
        "M_tune": 200,
        "M_predict": 600,
        "ensemble_size": 42,
        "n_iter": 20,
        "rank": 4,
        "holdout_fraction": 0.2,
        "n_cv": 2,
        "gamma_samples": 100,
        "inflation_factor": 0.1,
        "factor_prior_std": 2.0,
        "terminal_time": 1e6,
        "bound": 100.0,
        "valid_time_threshold": 10.0,
        "amplitude_refinement": True,
    },
    "ces_synthetic": {
        **_COMMON_DEFAULTS,
        "dim_in": 5,
        "dim_out": 50,
        "map_seed": 1234,
        "obs_noise_std": 0.1,
        "calibration_ensemble": 50,
        "calibration_iters": 8,
        "M_tune": 120,
        "M_predict": 300,
        "ensemble_size": 90,
        "n_iter": 12,
        "rank_in": 5,
        "rank_out": 1,
        "holdout_fraction": 0.05,
        "n_cv": 2,
        "gamma_samples": 60,
        "inflation_factor": 0.1,
        "factor_prior_std": 2.0,
        "terminal_time": 1e6,
        "chain_steps": 100_000,
        "burn_in": 20_000,
        "target_acceptance": 0.25,
        "pointwise_cov": True,
    },
}

EXPERIMENTS = tuple(sorted(_DEFAULTS))


def experiment_defaults(tag: str) -> dict:
    if tag not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {tag!r}; expected one of {EXPERIMENTS}")
    return dict(_DEFAULTS[tag])


def resolve_config(config: dict) -> dict:
    """Merge a user config over the experiment defaults and validate keys."""
    if not isinstance(config, dict) or "experiment" not in config:
        raise ConfigError("config must be an object with an 'experiment' key")
    tag = config["experiment"]
    resolved = experiment_defaults(tag)
    extras = {k: v for k, v in config.items() if k != "experiment"}
    unknown = sorted(set(extras) - set(resolved))
    if unknown:
        raise ConfigError(f"unknown config keys for {tag!r}: {unknown}")
    resolved.update(extras)
    resolved["experiment"] = tag
    for key, value in resolved.items():
        if key.startswith(("n_", "M_", "ensemble", "chain", "burn")) \
                and not isinstance(value, (list, tuple)):
            if not (isinstance(value, (int, np.integer)) and value >= 0):
                raise ConfigError(f"{key} must be a nonnegative integer, got {value!r}")
    return resolved


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tags))


def _tuning_settings(cfg, prior, seed_tag: int) -> eki.EKISettings:
    return eki.EKISettings(
        ensemble_size=cfg["ensemble_size"], n_iter=cfg["n_iter"],
        terminal_time=cfg["terminal_time"], seed=cfg["seed"] * 100_003 + seed_tag,
        inflation_std=cfg["inflation_factor"] * prior.stds)


def _trace_table(trace: eki.EKITrace) -> dict:
    return {"columns": list(eki.EKITrace.COLUMNS), "rows": trace.rows()}


# ---------------------------------------------------------------------------
# linear-Gaussian smoke check

def _run_linear_gaussian(cfg, workers):
    rng = _rng(cfg["seed"], 0)
    A = np.array([[1.0, 0.4], [0.2, 2.0], [0.5, -1.0]])
    prior_cov = np.diag([1.0, 2.0])
    gamma = 0.3 * np.eye(3)
    u_true = rng.standard_normal(2)
    z_star = A @ u_true + np.linalg.cholesky(gamma) @ rng.standard_normal(3)
    post_cov = np.linalg.inv(A.T @ np.linalg.inv(gamma) @ A + np.linalg.inv(prior_cov))
    post_mean = post_cov @ (A.T @ np.linalg.inv(gamma) @ z_star)

    prior = eki.GaussianEnsemblePrior(np.zeros(2), np.sqrt(np.diag(prior_cov)))
    obs = eki.ObservationSpec(z_star, gamma)
    settings = eki.EKISettings(ensemble_size=cfg["ensemble_size"], n_iter=cfg["n_iter"],
                               scheduler="constant", dt=cfg["dt"], inflation_std=0.0,
                               seed=cfg["seed"])
    ens, trace = eki.run(lambda u, r: A @ u, prior, obs, settings, workers=workers)
    err = float(np.linalg.norm(ens.mean() - post_mean) / np.linalg.norm(post_mean))
    summary = {
        "analytic_map": post_mean.tolist(),
        "ensemble_mean": ens.mean().tolist(),
        "relative_error": err,
        "passed": err < 0.05,
    }
    return summary, {"misfit_trace": _trace_table(trace)}


# ---------------------------------------------------------------------------
# global sensitivity experiments

def _fit_and_indices(result, problem, design, pts, M_predict, rng):
    """Fresh feature draw from a tuned distribution, fit, indices over design."""
    fs = features.sample_features(result.distribution, M_predict, rng)
    fitted = rfr.fit(fs, problem.X, problem.Y, problem.noise)
    preds_w = rfr.predict_mean(fitted, problem.transforms.whiten_inputs(pts))
    preds = problem.transforms.unwhiten_outputs(preds_w).ravel()
    samples = gsa.samples_from_values(preds, design)
    return (gsa.first_order_indices(samples), gsa.total_order_indices(samples), preds)


def _run_ishigami(cfg, workers):
    d = cfg["input_dim"]
    seed = cfg["seed"]
    rng = _rng(seed, 0)
    design = gsa.sobol_design(d, cfg["n_base"])
    pts = 2.0 * np.pi * gsa.design_points(design) - np.pi
    f_true = gsa.ishigami(pts, a=cfg["ishigami_a"], b=cfg["ishigami_b"])

    idx = rng.choice(pts.shape[0], size=cfg["n_train"], replace=False)
    X_raw = pts[idx]
    Y_raw = f_true[idx] + np.sqrt(cfg["noise_var"]) * rng.standard_normal(cfg["n_train"])

    spec = HyperparamSpec(d, 1, "nonseparable", rank=cfg["rank"])
    problem, gamma = tuning.build_problem(
        X_raw, Y_raw, np.array([[cfg["noise_var"]]]), spec, cfg["M_tune"], rng,
        holdout_fraction=cfg["holdout_fraction"], n_cv=cfg["n_cv"],
        gamma_samples=cfg["gamma_samples"], workers=workers)
    prior = tuning.search_prior(spec, cfg["factor_prior_std"])

    truth = gsa.samples_from_values(f_true, design)
    V_emp = gsa.first_order_indices(truth)
    TV_emp = gsa.total_order_indices(truth)
    V_true, TV_true = gsa.analytic_indices("ishigami", a=cfg["ishigami_a"],
                                           b=cfg["ishigami_b"])

    rows, V_all, TV_all = [], [], []
    first_trace = None
    for rep in range(cfg["n_repeats"]):
        result = tuning.tune(problem, prior, _tuning_settings(cfg, prior, rep + 1),
                             gamma=gamma, workers=workers)
        if first_trace is None:
            first_trace = result.trace
        V, TV, preds = _fit_and_indices(result, problem, design, pts,
                                        cfg["M_predict"], _rng(seed, 1, rep))
        rmse = float(np.sqrt(np.mean((preds - f_true) ** 2)))
        V_all.append(V)
        TV_all.append(TV)
        rows.append([rep] + list(np.round(V, 6)) + list(np.round(TV, 6)) + [round(rmse, 6)])
    V_all, TV_all = np.array(V_all), np.array(TV_all)

    summary = {
        "analytic_V": V_true.tolist(), "analytic_TV": TV_true.tolist(),
        "empirical_V": V_emp.tolist(), "empirical_TV": TV_emp.tolist(),
        "tuned_V_mean": V_all.mean(axis=0).tolist(),
        "tuned_V_std": V_all.std(axis=0).tolist(),
        "tuned_TV_mean": TV_all.mean(axis=0).tolist(),
        "tuned_TV_std": TV_all.std(axis=0).tolist(),
        "n_repeats": cfg["n_repeats"],
    }
    idx_cols = (["repeat"] + [f"V{i + 1}" for i in range(d)]
                + [f"TV{i + 1}" for i in range(d)] + ["rmse"])
    tables = {
        "indices": {"columns": idx_cols, "rows": rows},
        "misfit_trace": _trace_table(first_trace),
    }
    return summary, tables


def _run_sobol_g(cfg, workers):
    d = cfg["input_dim"]
    seed = cfg["seed"]
    rng = _rng(seed, 0)
    a = gsa.sobol_g_coefficients(d)
    design = gsa.sobol_design(d, cfg["n_base"])
    pts = gsa.design_points(design)
    f_true = gsa.sobol_g(pts, a)
    n_train = cfg["n_train_per_dim"] * d

    idx = rng.choice(pts.shape[0], size=n_train, replace=False)
    X_raw = pts[idx]
    Y_raw = f_true[idx] + np.sqrt(cfg["noise_var"]) * rng.standard_normal(n_train)

    spec = HyperparamSpec(d, 1, "nonseparable", rank=min(cfg["rank"], d))
    problem, gamma = tuning.build_problem(
        X_raw, Y_raw, np.array([[cfg["noise_var"]]]), spec, cfg["M_tune"], rng,
        holdout_fraction=cfg["holdout_fraction"], n_cv=cfg["n_cv"],
        gamma_samples=cfg["gamma_samples"], workers=workers)
    prior = tuning.search_prior(spec, cfg["factor_prior_std"])
    V_true, TV_true = gsa.analytic_indices("sobol_g", a=a)

    result = tuning.tune(problem, prior, _tuning_settings(cfg, prior, 1),
                         gamma=gamma, workers=workers)
    V, TV, preds = _fit_and_indices(result, problem, design, pts,
                                    cfg["M_predict"], _rng(seed, 1))
    test_mask = np.ones(pts.shape[0], dtype=bool)
    test_mask[idx] = False
    rmse_test = float(np.sqrt(np.mean((preds[test_mask] - f_true[test_mask]) ** 2)))

    summary = {
        "coefficients": a.tolist(),
        "analytic_V": V_true.tolist(), "analytic_TV": TV_true.tolist(),
        "tuned_V": V.tolist(), "tuned_TV": TV.tolist(),
        "max_V_error": float(np.abs(V - V_true).max()),
        "test_rmse": rmse_test,
    }
    tables = {
        "indices": {"columns": ["dimension", "V_analytic", "V_tuned",
                                "TV_analytic", "TV_tuned"],
                    "rows": [[i + 1, V_true[i], V[i], TV_true[i], TV[i]]
                             for i in range(d)]},
        "misfit_trace": _trace_table(result.trace),
    }

    study = list(cfg["feature_count_study"])
    if study:
        rows = []
        for M in study:
            prob_m, gam_m = tuning.build_problem(
                X_raw, Y_raw, np.array([[cfg["noise_var"]]]), spec, int(M),
                _rng(seed, 2, int(M)), holdout_fraction=cfg["holdout_fraction"],
                n_cv=cfg["n_cv"], gamma_samples=cfg["gamma_samples"], workers=workers)
            res_m = tuning.tune(prob_m, prior, _tuning_settings(cfg, prior, 1000 + M),
                                gamma=gam_m, workers=workers)
            _, _, preds_m = _fit_and_indices(res_m, prob_m, design, pts,
                                             cfg["M_predict"], _rng(seed, 3, int(M)))
            err_train = float(np.sqrt(np.mean((preds_m[idx] - f_true[idx]) ** 2)))
            err_test = float(np.sqrt(np.mean((preds_m[test_mask] - f_true[test_mask]) ** 2)))
            rows.append([int(M), err_train, err_test])
        tables["feature_count_study"] = {
            "columns": ["M_tune", "train_rmse", "test_rmse"], "rows": rows}
        summary["feature_count_study"] = {str(r[0]): r[2] for r in rows}
    return summary, tables


# ---------------------------------------------------------------------------
# chaotic integrator experiment

def _cdf_rows(states_true, states_emu, n_grid=201):
    rows = []
    for i in range(3):
        lo = min(states_true[:, i].min(), states_emu[:, i].min())
        hi = max(states_true[:, i].max(), states_emu[:, i].max())
        grid = np.linspace(lo, hi, n_grid)
        f_true = np.searchsorted(np.sort(states_true[:, i]), grid, side="right") / len(states_true)
        f_emu = np.searchsorted(np.sort(states_emu[:, i]), grid, side="right") / len(states_emu)
        rows += [[i, g, ft, fe] for g, ft, fe in zip(grid, f_true, f_emu)]
    return rows


def _run_lorenz63(cfg, workers):
    seed = cfg["seed"]
    rng = _rng(seed, 0)
    dt = cfg["dt"]
    n_train_steps = int(round(cfg["train_time"] / dt))
    n_roll = int(round(cfg["rollout_time"] / dt))
    n_spin = int(round(cfg["spinup_time"] / dt))
    truth = dynamics.euler_integrate((1.0, 1.0, 1.0), dt, n_train_steps + n_roll)

    sigma = cfg["noise_var"] * np.eye(3)
    X_raw, Y_raw = dynamics.make_training_pairs(
        dynamics.Trajectory(truth.states[:n_train_steps + 1], dt),
        cfg["n_train"], sigma, rng)

    spec = HyperparamSpec(3, 3, "nonseparable", rank=cfg["rank"])
    problem, gamma = tuning.build_problem(
        X_raw, Y_raw, sigma, spec, cfg["M_tune"], rng,
        holdout_fraction=cfg["holdout_fraction"], n_cv=cfg["n_cv"],
        gamma_samples=cfg["gamma_samples"], workers=workers)
    prior = tuning.search_prior(spec, cfg["factor_prior_std"])

    result = tuning.tune(problem, prior, _tuning_settings(cfg, prior, 1),
                         gamma=gamma, workers=workers)
    # untuned baseline: prior-mean hyperparameters on plainly whitened data
    # (the variability rescaling only exists to condition the inversion)
    plain_settings = eki.EKISettings(ensemble_size=cfg["ensemble_size"], n_iter=0,
                                     seed=seed)
    X_w, Y_w, sigma_w, plain_tf = tuning.whiten_data(X_raw, Y_raw, sigma)
    plain_problem = tuning.TuningProblem(
        X=X_w, Y=Y_w, noise=rfr.NoiseModel(sigma_w), spec=spec,
        M_tune=cfg["M_tune"], partitions=problem.partitions, transforms=plain_tf)
    untuned = tuning.tune(plain_problem, default_prior(spec), plain_settings)

    reference = truth.states[n_train_steps + n_spin + 1:]

    def evaluate(dist, prob, draw_tag, fs=None):
        if fs is None:
            fs = features.sample_features(dist, cfg["M_predict"], _rng(seed, draw_tag))
        fitted = rfr.fit(fs, prob.transforms.whiten_inputs(X_raw),
                         prob.transforms.whiten_outputs(Y_raw), prob.noise)
        try:
            roll = dynamics.rf_rollout(fitted, prob.transforms,
                                       truth.states[n_train_steps], n_roll,
                                       dt=dt, t0=cfg["train_time"])
        except dynamics.BlowUpError as err:
            return {"bounded": False, "max_abs": float("inf"),
                    "ks": [1.0, 1.0, 1.0], "valid_time": err.step * dt}, None
        max_abs = float(np.abs(roll.states).max())
        bounded = max_abs <= cfg["bound"]
        ks = dynamics.marginal_cdf_distance(roll.states[n_spin:], reference) \
            if bounded else np.array([1.0, 1.0, 1.0])
        valid = dynamics.forecast_valid_time(
            dynamics.Trajectory(truth.states[n_train_steps:], dt, cfg["train_time"]),
            roll, cfg["valid_time_threshold"])
        return {"bounded": bounded, "max_abs": max_abs, "ks": ks.tolist(),
                "valid_time": valid}, roll

    tuned_dist, tuned_fs = result.distribution, None
    if cfg["amplitude_refinement"]:
        tuned_dist, tuned_fs = tuning.refine_scale(
            result.distribution, problem.transforms.whiten_inputs(X_raw),
            problem.transforms.whiten_outputs(Y_raw), problem.noise,
            cfg["M_predict"], _rng(seed, 5))
    tuned_stats, tuned_roll = evaluate(tuned_dist, problem, 5, fs=tuned_fs)
    untuned_stats, _ = evaluate(untuned.distribution, plain_problem, 6)

    summary = {
        "tuned": tuned_stats,
        "untuned": untuned_stats,
        "tuned_ks_max": float(np.max(tuned_stats["ks"])),
        "untuned_failed": bool((not untuned_stats["bounded"])
                               or np.max(untuned_stats["ks"]) > 0.3),
    }
    tables = {"misfit_trace": _trace_table(result.trace)}
    if tuned_roll is not None:
        head = tuned_roll.states[:2000]
        tables["rollout_head"] = {
            "columns": ["t", "x", "y", "z"],
            "rows": [[round(cfg["train_time"] + k * dt, 6)] + list(np.round(s, 6))
                     for k, s in enumerate(head)]}
        tables["marginal_cdfs"] = {
            "columns": ["coordinate", "value", "cdf_true", "cdf_emulator"],
            "rows": _cdf_rows(reference, tuned_roll.states[n_spin:])}
    return summary, tables


# ---------------------------------------------------------------------------
# calibrate-emulate-sample experiment

def _run_ces_synthetic(cfg, workers):
    seed = cfg["seed"]
    rng = _rng(seed, 0)
    fmap = ces.SyntheticForwardMap.seeded(cfg["dim_in"], cfg["dim_out"],
                                          seed=cfg["map_seed"])
    phys_prior = ces.BoundedLogitPrior(
        bounds=[(0.0, 1.0), (0.0, 1.0), (0.01, 1.0), (0.01, 1.0), (0.01, 1.0)],
        centers=[0.13, 0.51, 0.14, 0.22, 0.40])
    gamma_phys = cfg["obs_noise_std"] ** 2 * np.eye(cfg["dim_out"])
    theta_true = phys_prior.sample(rng)
    y = fmap(theta_true) + cfg["obs_noise_std"] * rng.standard_normal(cfg["dim_out"])

    # calibrate in the latent space where the prior is unit Gaussian
    latent_prior = eki.GaussianEnsemblePrior(phys_prior.latent_mean,
                                             np.ones(phys_prior.dim))
    cal_settings = eki.EKISettings(
        ensemble_size=cfg["calibration_ensemble"], n_iter=cfg["calibration_iters"],
        inflation_std=0.0, seed=seed)
    obs = eki.ObservationSpec(y, gamma_phys)
    _, cal_trace = eki.run(lambda z, r: fmap(phys_prior.from_latent(z)),
                           latent_prior, obs, cal_settings, workers=workers,
                           store_iterates=True)
    # emulate in the latent coordinates, where the design is unbounded and
    # roughly Gaussian; bounded parameters pile up at their limits
    latents = np.concatenate([U.T for U, _ in cal_trace.iterates])
    evals = np.concatenate([G.T for _, G in cal_trace.iterates])

    spec = HyperparamSpec(cfg["dim_in"], cfg["dim_out"], "separable",
                          rank_in=cfg["rank_in"], rank_out=cfg["rank_out"])
    problem, gamma = tuning.build_problem(
        latents, evals, gamma_phys, spec, cfg["M_tune"], rng,
        holdout_fraction=cfg["holdout_fraction"], n_cv=cfg["n_cv"],
        gamma_samples=cfg["gamma_samples"], workers=workers)
    prior = tuning.search_prior(spec, cfg["factor_prior_std"])
    result = tuning.tune(problem, prior, _tuning_settings(cfg, prior, 1),
                         gamma=gamma, workers=workers)

    fs = features.sample_features(result.distribution, cfg["M_predict"], _rng(seed, 2))
    fitted = rfr.fit(fs, problem.X, problem.Y, problem.noise)
    tf = problem.transforms

    def mean_fn(theta):
        z = tf.whiten_inputs(phys_prior.to_latent(theta)[None, :])
        return tf.unwhiten_outputs(rfr.predict_mean(fitted, z))[0]

    def cov_fn(theta):
        z = tf.whiten_inputs(phys_prior.to_latent(theta)[None, :])[0]
        return tf.unwhiten_output_cov(rfr.predict_cov(fitted, z))

    emulated = ces.EmulatedPosterior(mean_fn, phys_prior, y, gamma_phys,
                                     cov_fn=cov_fn if cfg["pointwise_cov"] else None)
    exact = ces.EmulatedPosterior(fmap, phys_prior, y, gamma_phys)

    theta0 = phys_prior.from_latent(phys_prior.latent_mean)
    chains, rates, steps = {}, {}, {}
    for name, post, tag in (("emulated", emulated, 3), ("exact", exact, 4)):
        step = ces.tune_step_size(post, theta0, _rng(seed, tag, 0),
                                  target=cfg["target_acceptance"],
                                  initial_step=0.1, pilot_steps=2000)
        chain = ces.run_chain(post, theta0, cfg["chain_steps"], cfg["burn_in"],
                              step, _rng(seed, tag, 1))
        chains[name] = chain.as_array()
        rates[name] = chain.acceptance_rate
        steps[name] = step

    prior_rng = _rng(seed, 5)
    prior_draws = np.array([phys_prior.sample(prior_rng) for _ in range(20000)])
    prior_std = prior_draws.std(axis=0)
    mean_em = chains["emulated"].mean(axis=0)
    mean_ex = chains["exact"].mean(axis=0)
    diff = np.abs(mean_em - mean_ex) / prior_std

    summary = {
        "theta_true": theta_true.tolist(),
        "posterior_mean_emulated": mean_em.tolist(),
        "posterior_mean_exact": mean_ex.tolist(),
        "posterior_std_emulated": chains["emulated"].std(axis=0).tolist(),
        "posterior_std_exact": chains["exact"].std(axis=0).tolist(),
        "prior_std": prior_std.tolist(),
        "mean_diff_prior_units": diff.tolist(),
        "max_mean_diff_prior_units": float(diff.max()),
        "acceptance": rates,
        "step_sizes": steps,
    }
    k = phys_prior.dim
    thin = max(1, (cfg["chain_steps"] - cfg["burn_in"]) // 5000)
    tables = {
        "chain_emulated": {
            "columns": [f"theta{i + 1}" for i in range(k)],
            "rows": [list(np.round(row, 6)) for row in chains["emulated"][::thin]]},
        "chain_exact": {
            "columns": [f"theta{i + 1}" for i in range(k)],
            "rows": [list(np.round(row, 6)) for row in chains["exact"][::thin]]},
        "misfit_trace": _trace_table(result.trace),
    }
    # pairwise-marginal histograms for corner plots
    edges = [np.histogram_bin_edges(chains["exact"][:, i], bins=30) for i in range(k)]
    rows = []
    for i in range(k):
        for j in range(i):
            H_em, _, _ = np.histogram2d(chains["emulated"][:, i],
                                        chains["emulated"][:, j],
                                        bins=[edges[i], edges[j]])
            H_ex, _, _ = np.histogram2d(chains["exact"][:, i],
                                        chains["exact"][:, j],
                                        bins=[edges[i], edges[j]])
            for a in range(30):
                for b in range(30):
                    rows.append([i + 1, j + 1, a, b, int(H_em[a, b]), int(H_ex[a, b])])
    tables["pair_histograms"] = {
        "columns": ["dim_i", "dim_j", "bin_i", "bin_j", "count_emulated", "count_exact"],
        "rows": rows}
    return summary, tables


_RUNNERS = {
    "linear_gaussian_check": _run_linear_gaussian,
    "ishigami": _run_ishigami,
    "sobol_g": _run_sobol_g,
    "lorenz63": _run_lorenz63,
    "ces_synthetic": _run_ces_synthetic,
}


def run_experiment(config: dict):
    """Execute one experiment; returns (summary, tables)."""
    cfg = resolve_config(config)
    runner = _RUNNERS[cfg["experiment"]]
    return runner(cfg, max(1, int(cfg["workers"])))
