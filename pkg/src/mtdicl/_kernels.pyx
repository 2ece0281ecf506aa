# cython: language_level=3
"""Compiled inner loops. See ``_kernels_py`` for the reference semantics."""
import numpy as np

from libc.math cimport exp, INFINITY


def sample_path(const long long[::1] first, const double[::1] lam_cum,
                const double[:, ::1] pi_cum, const double[::1] u_lag,
                const double[::1] u_tok):
    cdef Py_ssize_t m = first.shape[0]
    cdef Py_ssize_t T = u_lag.shape[0]
    cdef Py_ssize_t q = pi_cum.shape[1]
    cdef Py_ssize_t t, g, j
    cdef long long prev
    cdef double x
    out_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] out = out_arr
    for t in range(m):
        out[t] = first[t]
    for t in range(m, T):
        x = u_lag[t] * lam_cum[m - 1]
        g = 0
        while g < m - 1 and x >= lam_cum[g]:
            g += 1
        prev = out[t - g - 1]
        x = u_tok[t] * pi_cum[prev, q - 1]
        j = 0
        while j < q - 1 and x >= pi_cum[prev, j]:
            j += 1
        out[t] = j
    return out_arr


def lag_counts(const double[:, ::1] C, const double[::1] lam, const double[::1] u):
    cdef Py_ssize_t n = C.shape[0]
    cdef Py_ssize_t m = C.shape[1]
    cdef Py_ssize_t t, g
    cdef double acc, x
    counts_arr = np.zeros(m, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef double[::1] cum = np.empty(m, dtype=np.float64)
    for t in range(n):
        acc = 0.0
        for g in range(m):
            acc = acc + C[t, g] * lam[g]
            cum[g] = acc
        x = u[t] * acc
        g = 0
        while g < m - 1 and x >= cum[g]:
            g += 1
        counts[g] += 1
    return counts_arr


def causal_rpe_softmax(const double[:, ::1] S, const double[:, ::1] P):
    cdef Py_ssize_t T = S.shape[0]
    cdef Py_ssize_t i, j
    cdef double mx, e, total
    A_arr = np.zeros((T, T), dtype=np.float64)
    cdef double[:, ::1] A = A_arr
    for i in range(T):
        mx = -INFINITY
        for j in range(i + 1):
            e = S[i, j] + P[i, i - j]
            A[i, j] = e
            if e > mx:
                mx = e
        total = 0.0
        for j in range(i + 1):
            e = exp(A[i, j] - mx)
            A[i, j] = e
            total += e
        for j in range(i + 1):
            A[i, j] /= total
    return A_arr


def rpe_value_sum(const double[:, ::1] A, const double[:, ::1] RV):
    cdef Py_ssize_t T = A.shape[0]
    cdef Py_ssize_t d = RV.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double a
    out_arr = np.zeros((T, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(T):
        for j in range(i + 1):
            a = A[i, j]
            if a == 0.0:
                continue
            for c in range(d):
                out[i, c] += a * RV[i - j, c]
    return out_arr
