# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_pycore`` holds the reference implementations."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, INFINITY

cnp.import_array()


def chol_update(double[:, ::1] L, double[::1] x):
    """Rank-one update in place: on return ``L @ L.T`` equals the old
    ``L @ L.T + outer(x, x)``. ``x`` is overwritten."""
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t k, i
    cdef double r, c, s, lkk
    for k in range(n):
        lkk = L[k, k]
        r = sqrt(lkk * lkk + x[k] * x[k])
        c = r / lkk
        s = x[k] / lkk
        L[k, k] = r
        for i in range(k + 1, n):
            L[i, k] = (L[i, k] + s * x[i]) / c
            x[i] = c * x[i] - s * L[i, k]


def select_index(double[::1] scores, double u):
    """Pick index k with probability softmax(scores)[k] using one uniform ``u``.

    Returns ``(k, logsumexp(scores))``; ``k`` is -1 when every score is -inf.
    """
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k
    cdef double m = -INFINITY
    cdef double total = 0.0
    cdef double target, acc
    for k in range(n):
        if scores[k] > m:
            m = scores[k]
    if m == -INFINITY:
        return -1, -INFINITY
    for k in range(n):
        total += exp(scores[k] - m)
    target = u * total
    acc = 0.0
    for k in range(n):
        acc += exp(scores[k] - m)
        if acc > target:
            return k, m + log(total)
    # roundoff: fall back to the last positive weight
    for k in range(n - 1, -1, -1):
        if scores[k] > -INFINITY:
            return k, m + log(total)
    return -1, -INFINITY


def subset_grid_lse(double[:, ::1] S,
                    cnp.uint8_t[::1] row_base,
                    cnp.uint8_t[::1] col_base,
                    cnp.int8_t[::1] free_axis,
                    cnp.intp_t[::1] free_idx,
                    double[::1] free_prob):
    """Enumerate every on/off pattern of the free rows/columns of ``S``.

    For pattern ``b`` (bit j set means free item j is on) returns its log
    probability under independent Bernoulli(free_prob) draws and the
    log-sum-exp of ``S`` over the switched-on rows x switched-on columns.
    """
    cdef Py_ssize_t R = S.shape[0]
    cdef Py_ssize_t C = S.shape[1]
    cdef Py_ssize_t f = free_idx.shape[0]
    cdef Py_ssize_t nmask = (<Py_ssize_t>1) << f
    cdef Py_ssize_t b, j, r, c
    cdef double lp, m, total, val
    logp_arr = np.empty(nmask, dtype=np.float64)
    lse_arr = np.empty(nmask, dtype=np.float64)
    cdef double[::1] logp = logp_arr
    cdef double[::1] lse = lse_arr
    cdef cnp.uint8_t[::1] rows = np.empty(R, dtype=np.uint8)
    cdef cnp.uint8_t[::1] cols = np.empty(C, dtype=np.uint8)
    cdef double[::1] lon = np.empty(f, dtype=np.float64)
    cdef double[::1] loff = np.empty(f, dtype=np.float64)
    for j in range(f):
        lon[j] = log(free_prob[j])
        loff[j] = log(1.0 - free_prob[j])
    for b in range(nmask):
        rows[:] = row_base
        cols[:] = col_base
        lp = 0.0
        for j in range(f):
            if (b >> j) & 1:
                lp += lon[j]
                if free_axis[j] == 0:
                    rows[free_idx[j]] = 1
                else:
                    cols[free_idx[j]] = 1
            else:
                lp += loff[j]
        logp[b] = lp
        m = -INFINITY
        for r in range(R):
            if rows[r]:
                for c in range(C):
                    if cols[c] and S[r, c] > m:
                        m = S[r, c]
        if m == -INFINITY:
            lse[b] = -INFINITY
            continue
        total = 0.0
        for r in range(R):
            if rows[r]:
                for c in range(C):
                    if cols[c]:
                        val = S[r, c]
                        total += exp(val - m)
        lse[b] = m + log(total)
    return logp_arr, lse_arr
