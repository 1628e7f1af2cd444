# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for maximum-likelihood profile estimation.

Runs the whole fixed-point iteration in C so that re-estimating the profile
on every query stays cheap. Semantics match lppm._em._em_iterate_py exactly.
"""

import numpy as np

from libc.math cimport fabs, log


def em_iterate(double[:, ::1] lik, pi_init, double tol, int max_iters, bint record_ll):
    """One full EM run.

    lik holds one per-step likelihood row per observation; pi_init is the
    starting profile. Returns (profile, iterations, loglik_history) where
    loglik_history is the observed-data log-likelihood evaluated at the
    profile entering each iteration (empty list unless record_ll).
    """
    cdef Py_ssize_t r = lik.shape[0]
    cdef Py_ssize_t n = lik.shape[1]
    cdef Py_ssize_t s, i, t
    cdef double denom, ll, delta, diff, inv_r

    pi_arr = np.array(pi_init, dtype=np.float64, copy=True)
    new_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] pi = pi_arr
    cdef double[::1] new = new_arr

    ll_hist = []
    inv_r = 1.0 / r
    cdef int iters = 0
    for t in range(max_iters):
        ll = 0.0
        for i in range(n):
            new[i] = 0.0
        for s in range(r):
            denom = 0.0
            for i in range(n):
                denom += pi[i] * lik[s, i]
            if denom <= 0.0:
                raise ValueError("zero observation probability under the current profile")
            ll += log(denom)
            for i in range(n):
                new[i] += pi[i] * lik[s, i] / denom
        if record_ll:
            ll_hist.append(ll)
        delta = 0.0
        for i in range(n):
            new[i] *= inv_r
            diff = fabs(new[i] - pi[i])
            if diff > delta:
                delta = diff
            pi[i] = new[i]
        iters = t + 1
        if delta < tol:
            break
    return pi_arr, iters, ll_hist
