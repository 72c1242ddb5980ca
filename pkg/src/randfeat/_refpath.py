"""Pure NumPy reference implementations of the sequential hot kernels.

Semantics match the compiled fast path bit-for-bit up to floating-point
reassociation; the compiled module is preferred at import when present.
"""

from __future__ import annotations

import numpy as np

BLOWUP_LIMIT = 1e12


def euler_lorenz(initial, dt, n_steps, sigma, rho, beta):
    """Forward-Euler integration of the Lorenz system.

    Returns (states, n_completed) where states has n_steps + 1 rows; rows past
    a blow-up (non-finite or magnitude above BLOWUP_LIMIT) are left at zero
    and n_completed reports the number of successful steps.
    """
    states = np.zeros((n_steps + 1, 3))
    x, y, z = (float(v) for v in initial)
    states[0] = (x, y, z)
    for k in range(n_steps):
        x, y, z = (x + dt * sigma * (y - x),
                   y + dt * (x * (rho - z) - y),
                   z + dt * (x * y - beta * z))
        if not (abs(x) < BLOWUP_LIMIT and abs(y) < BLOWUP_LIMIT and abs(z) < BLOWUP_LIMIT):
            return states, k
        states[k + 1] = (x, y, z)
    return states, n_steps


def rff_weighted_cos(xi_flat, b_flat, weights, x):
    """sum_m w_m cos(Xi_m x + B_m) as a length-p vector.

    ``xi_flat`` is (M*p, d), ``b_flat`` is (M*p,), ``weights`` is (M,).
    """
    p = b_flat.size // weights.size
    t = xi_flat @ x
    t += b_flat
    np.cos(t, out=t)
    return weights @ t.reshape(weights.size, p)


def rff_rollout(xi_flat, b_flat, weights, out_mat, out_shift, x0, n_steps):
    """Recursively apply a random-feature next-step map.

    The state update is x <- out_mat @ (sum_m w_m cos(Xi_m x + B_m)) +
    out_shift; input whitening must be folded into Xi and B by the caller.
    Returns (states, n_completed) like :func:`euler_lorenz`.
    """
    p = out_shift.size
    states = np.zeros((n_steps + 1, p))
    x = np.array(x0, dtype=float)
    states[0] = x
    for k in range(n_steps):
        x = out_mat @ rff_weighted_cos(xi_flat, b_flat, weights, x) + out_shift
        if not np.all(np.abs(x) < BLOWUP_LIMIT):
            return states, k
        states[k + 1] = x
    return states, n_steps
