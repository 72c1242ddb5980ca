# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the sequential hot kernels (see _refpath.py)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs

cnp.import_array()

BLOWUP_LIMIT = 1e12
cdef double _LIMIT = 1e12


def euler_lorenz(initial, double dt, long n_steps,
                 double sigma, double rho, double beta):
    states_arr = np.zeros((n_steps + 1, 3))
    cdef double[:, ::1] states = states_arr
    cdef double x = initial[0], y = initial[1], z = initial[2]
    cdef double nx, ny, nz
    cdef long k
    states[0, 0] = x
    states[0, 1] = y
    states[0, 2] = z
    for k in range(n_steps):
        nx = x + dt * sigma * (y - x)
        ny = y + dt * (x * (rho - z) - y)
        nz = z + dt * (x * y - beta * z)
        x, y, z = nx, ny, nz
        if not (fabs(x) < _LIMIT and fabs(y) < _LIMIT and fabs(z) < _LIMIT):
            return states_arr, k
        states[k + 1, 0] = x
        states[k + 1, 1] = y
        states[k + 1, 2] = z
    return states_arr, n_steps


cdef void _weighted_cos(const double[:, ::1] xi_flat, const double[::1] b_flat,
                        const double[::1] weights, const double* x,
                        long p, long d, double* out) nogil:
    cdef long M = weights.shape[0]
    cdef long m, i, k, row
    cdef double acc, w
    for i in range(p):
        out[i] = 0.0
    row = 0
    for m in range(M):
        w = weights[m]
        for i in range(p):
            acc = b_flat[row]
            for k in range(d):
                acc += xi_flat[row, k] * x[k]
            out[i] += w * cos(acc)
            row += 1


def rff_weighted_cos(const double[:, ::1] xi_flat, const double[::1] b_flat,
                     const double[::1] weights, const double[::1] x):
    cdef long d = xi_flat.shape[1]
    cdef long p = b_flat.shape[0] // weights.shape[0]
    out_arr = np.zeros(p)
    cdef double[::1] out = out_arr
    _weighted_cos(xi_flat, b_flat, weights, &x[0], p, d, &out[0])
    return out_arr


def rff_rollout(const double[:, ::1] xi_flat, const double[::1] b_flat,
                const double[::1] weights, const double[:, ::1] out_mat,
                const double[::1] out_shift, const double[::1] x0, long n_steps):
    cdef long p = out_shift.shape[0]
    cdef long d = xi_flat.shape[1]
    if d != p:
        raise ValueError("rollout needs matching state dimensions")
    states_arr = np.zeros((n_steps + 1, p))
    cdef double[:, ::1] states = states_arr
    x_arr = np.array(x0, dtype=float)
    mean_arr = np.zeros(p)
    cdef double[::1] x = x_arr
    cdef double[::1] mean = mean_arr
    cdef long k, i, j
    cdef double acc
    cdef bint ok = True
    for i in range(p):
        states[0, i] = x[i]
    with nogil:
        for k in range(n_steps):
            _weighted_cos(xi_flat, b_flat, weights, &x[0], p, d, &mean[0])
            ok = True
            for i in range(p):
                acc = out_shift[i]
                for j in range(p):
                    acc += out_mat[i, j] * mean[j]
                x[i] = acc
                if not fabs(acc) < _LIMIT:
                    ok = False
            if not ok:
                with gil:
                    return states_arr, k
            for i in range(p):
                states[k + 1, i] = x[i]
    return states_arr, n_steps
