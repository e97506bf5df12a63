# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops over node pairs.

These are the per-epoch hot paths of the affiliation objective: dot
products of affiliation rows for a list of pairs, the summed edge terms
of the balanced loss, and scatter-accumulation of pair gradients into
the affiliation gradient. `nocd._kernels._fallback` provides the same
functions in pure numpy; both must agree to floating-point tolerance.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport expm1, log

cnp.import_array()

ctypedef cnp.int64_t idx_t


def pair_dots(const double[:, ::1] f, const idx_t[::1] us, const idx_t[::1] vs):
    """Return d[k] = <f[us[k]], f[vs[k]]> for every listed pair."""
    cdef Py_ssize_t n = us.shape[0]
    cdef Py_ssize_t c = f.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, j
    cdef idx_t u, v
    cdef double acc
    for k in range(n):
        u = us[k]
        v = vs[k]
        acc = 0.0
        for j in range(c):
            acc += f[u, j] * f[v, j]
        out[k] = acc
    return out_arr


def edge_term_sums(const double[:, ::1] f, const idx_t[::1] us, const idx_t[::1] vs, double min_dot):
    """Summed edge contributions over the listed pairs.

    Returns (nll_sum, dot_sum) where nll_sum accumulates
    -log(1 - exp(-max(d, min_dot))) and dot_sum accumulates the raw,
    unclamped dot products.
    """
    cdef Py_ssize_t n = us.shape[0]
    cdef Py_ssize_t c = f.shape[1]
    cdef Py_ssize_t k, j
    cdef idx_t u, v
    cdef double d, acc
    cdef double nll_sum = 0.0
    cdef double dot_sum = 0.0
    for k in range(n):
        u = us[k]
        v = vs[k]
        acc = 0.0
        for j in range(c):
            acc += f[u, j] * f[v, j]
        dot_sum += acc
        d = acc if acc > min_dot else min_dot
        nll_sum -= log(-expm1(-d))
    return nll_sum, dot_sum


def accumulate_pair_grads(const double[:, ::1] f, const idx_t[::1] us, const idx_t[::1] vs,
                          const double[::1] coefs, double[:, ::1] out):
    """For every pair k add coefs[k]*f[vs[k]] to out[us[k]] and vice versa."""
    cdef Py_ssize_t n = us.shape[0]
    cdef Py_ssize_t c = f.shape[1]
    cdef Py_ssize_t k, j
    cdef idx_t u, v
    cdef double w
    for k in range(n):
        u = us[k]
        v = vs[k]
        w = coefs[k]
        for j in range(c):
            out[u, j] += w * f[v, j]
            out[v, j] += w * f[u, j]
