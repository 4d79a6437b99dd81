# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise rank-loss kernels.

Same contracts as `_pairloss_np`; avoids the O(n^2) temporaries of the
vectorized fallback and fuses value + gradient into one pass.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, tanh

cnp.import_array()

BACKEND = "cython"


def loss_value(double[::1] scores, double[::1] returns) -> float:
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, j
    cdef double tf, ty, z, total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            tf = tanh(scores[i] - scores[j])
            ty = tanh(returns[i] - returns[j])
            z = tf * ty
            total += log1p(exp(-z))
    return total / (n * (n - 1))


def loss_value_grad(double[::1] scores, double[::1] returns):
    cdef Py_ssize_t n = scores.shape[0]
    cdef cnp.ndarray[double, ndim=1] grad = np.zeros(n, dtype=np.float64)
    cdef double[::1] g = grad
    cdef Py_ssize_t i, j
    cdef double tf, ty, z, w, total = 0.0
    cdef double norm = 1.0 / (n * (n - 1))
    for i in range(n):
        for j in range(i + 1, n):
            tf = tanh(scores[i] - scores[j])
            ty = tanh(returns[i] - returns[j])
            z = tf * ty
            total += 2.0 * log1p(exp(-z))
            # both orderings of the pair contribute the same derivative
            w = -ty * (1.0 - tf * tf) / (1.0 + exp(z))
            g[i] += w
            g[j] -= w
    for i in range(n):
        g[i] *= 2.0 * norm
    return total * norm, grad


def pair_matrix(double[::1] scores, double[::1] returns):
    cdef Py_ssize_t n = scores.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(n):
        o[i, i] = 0.0
        for j in range(i + 1, n):
            v = log1p(exp(-tanh(scores[i] - scores[j]) * tanh(returns[i] - returns[j])))
            o[i, j] = v
            o[j, i] = v
    return out


def subset_pair_mean(double[:, ::1] terms, long[::1] idx) -> float:
    cdef Py_ssize_t k = idx.shape[0]
    cdef Py_ssize_t a, b
    cdef double total = 0.0
    for a in range(k):
        for b in range(k):
            total += terms[idx[a], idx[b]]
    return total / (k * (k - 1))
