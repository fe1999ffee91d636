# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops for the per-sample perturbed softmax CE and LDI counting."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def perturbed_ce_batch(logits, labels, delta):
    cdef double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef cnp.int64_t[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef double[:, ::1] dl = np.ascontiguousarray(delta, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], C = z.shape[1]
    loss_arr = np.empty(n, dtype=np.float64)
    prob_arr = np.empty((n, C), dtype=np.float64)
    grad_arr = np.empty((n, C), dtype=np.float64)
    cdef double[::1] loss = loss_arr
    cdef double[:, ::1] prob = prob_arr
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t i, c, t
    cdef double m, s, v
    for i in range(n):
        t = y[i]
        m = z[i, 0] + dl[t, 0]
        for c in range(1, C):
            v = z[i, c] + dl[t, c]
            if v > m:
                m = v
        s = 0.0
        for c in range(C):
            v = exp(z[i, c] + dl[t, c] - m)
            prob[i, c] = v
            s += v
        for c in range(C):
            prob[i, c] = prob[i, c] / s
            grad[i, c] = prob[i, c]
        grad[i, t] -= 1.0
        loss[i] = log(s) - (z[i, t] + dl[t, t] - m)
    return loss_arr, grad_arr, prob_arr


def ldi_counts(Py_ssize_t n_nodes, edges, labels):
    cdef cnp.int64_t[:, ::1] E = np.ascontiguousarray(np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    deg_arr = np.zeros(n_nodes, dtype=np.int64)
    diff_arr = np.zeros(n_nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] deg = deg_arr
    cdef cnp.int64_t[::1] diff = diff_arr
    cdef Py_ssize_t k, a, b
    cdef int d
    for k in range(E.shape[0]):
        a = E[k, 0]
        b = E[k, 1]
        d = 1 if lab[a] != lab[b] else 0
        deg[a] += 1
        diff[a] += d
        if a != b:
            deg[b] += 1
            diff[b] += d
    return deg_arr, diff_arr
