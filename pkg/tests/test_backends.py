"""Compiled fast path vs NumPy reference: identical semantics."""

import numpy as np
import pytest

from randfeat import _refpath
from randfeat import backend

compiled = pytest.importorskip("randfeat._fastpath",
                               reason="compiled fast path not built")


def test_selected_backend_reported():
    assert backend.BACKEND in ("compiled", "python")
    assert "python" in backend.available_backends()


def test_euler_lorenz_identical():
    init = np.array([1.0, 1.0, 1.0])
    s_py, c_py = _refpath.euler_lorenz(init, 0.01, 2000, 10.0, 28.0, 8.0 / 3.0)
    s_c, c_c = compiled.euler_lorenz(init, 0.01, 2000, 10.0, 28.0, 8.0 / 3.0)
    assert c_py == c_c == 2000
    assert np.array_equal(s_py, s_c)


def test_euler_lorenz_blowup_step_identical():
    init = np.array([1.0, 1.0, 1.0])
    s_py, c_py = _refpath.euler_lorenz(init, 1.0, 200, 10.0, 28.0, 8.0 / 3.0)
    s_c, c_c = compiled.euler_lorenz(init, 1.0, 200, 10.0, 28.0, 8.0 / 3.0)
    assert c_py == c_c < 200
    assert np.array_equal(s_py[:c_py + 1], s_c[:c_c + 1])


def test_weighted_cos_identical():
    rng = np.random.default_rng(0)
    M, p, d = 17, 3, 4
    xi = rng.standard_normal((M * p, d))
    b = rng.standard_normal(M * p)
    w = rng.standard_normal(M)
    x = rng.standard_normal(d)
    a = _refpath.rff_weighted_cos(xi, b, w, x)
    c = compiled.rff_weighted_cos(xi, b, w, x)
    assert np.abs(a - c).max() < 1e-12


def test_rollout_identical():
    rng = np.random.default_rng(1)
    M, p = 25, 3
    xi = rng.standard_normal((M * p, p))
    b = rng.standard_normal(M * p)
    w = rng.standard_normal(M) * 0.1
    out_mat = np.eye(p) + 0.05 * rng.standard_normal((p, p))
    out_shift = 0.05 * rng.standard_normal(p)
    x0 = rng.standard_normal(p)
    s_py, c_py = _refpath.rff_rollout(xi, b, w, out_mat, out_shift, x0, 400)
    s_c, c_c = compiled.rff_rollout(xi, b, w, out_mat, out_shift, x0, 400)
    assert c_py == c_c
    assert np.abs(s_py - s_c).max() < 1e-10


def test_rollout_blowup_identical():
    # cosine features are bounded, so divergence requires huge weights
    rng = np.random.default_rng(2)
    M, p = 8, 3
    xi = rng.standard_normal((M * p, p))
    b = rng.standard_normal(M * p)
    w = rng.standard_normal(M) * 1e13
    out_mat = np.eye(p)
    out_shift = np.zeros(p)
    x0 = np.ones(p)
    s_py, c_py = _refpath.rff_rollout(xi, b, w, out_mat, out_shift, x0, 100)
    s_c, c_c = compiled.rff_rollout(xi, b, w, out_mat, out_shift, x0, 100)
    assert c_py == c_c < 100
    assert np.array_equal(s_py[:c_py + 1], s_c[:c_c + 1])
