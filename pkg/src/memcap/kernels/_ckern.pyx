# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``memcap.kernels.pykernels``.

Plain C loops over typed memoryviews; no BLAS.  The operand sizes this
package runs at (decoder widths of a few hundred) sit right where call
overhead and cache behaviour matter more than peak GEMM throughput, which
is what the benchmark in ``benchmarks/bench_kernels.py`` measures.
"""

import numpy as np

from libc.math cimport exp, sqrt, pow

NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t r = a.shape[0], inner = a.shape[1], c = b.shape[1]
    if b.shape[0] != inner:
        raise ValueError("matmul: inner dimensions differ")
    out_arr = np.zeros((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double aik
    for i in range(r):
        for k in range(inner):
            aik = a[i, k]
            for j in range(c):
                out[i, j] += aik * b[k, j]
    return out_arr


def matmul_tn(double[:, ::1] a, double[:, ::1] b):
    # a^T @ b: a is (inner, r), b is (inner, c)
    cdef Py_ssize_t inner = a.shape[0], r = a.shape[1], c = b.shape[1]
    if b.shape[0] != inner:
        raise ValueError("matmul_tn: inner dimensions differ")
    out_arr = np.zeros((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double aki
    for k in range(inner):
        for i in range(r):
            aki = a[k, i]
            for j in range(c):
                out[i, j] += aki * b[k, j]
    return out_arr


def matmul_nt(double[:, ::1] a, double[:, ::1] b):
    # a @ b^T: a is (r, inner), b is (c, inner)
    cdef Py_ssize_t r = a.shape[0], inner = a.shape[1], c = b.shape[0]
    if b.shape[1] != inner:
        raise ValueError("matmul_nt: inner dimensions differ")
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(r):
        for j in range(c):
            s = 0.0
            for k in range(inner):
                s += a[i, k] * b[j, k]
            out[i, j] = s
    return out_arr


def matvec(double[:, ::1] a, double[::1] x):
    cdef Py_ssize_t r = a.shape[0], c = a.shape[1]
    if x.shape[0] != c:
        raise ValueError("matvec: dimensions differ")
    out_arr = np.empty(r, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(r):
        s = 0.0
        for k in range(c):
            s += a[i, k] * x[k]
        out[i] = s
    return out_arr


def matvec_t(double[:, ::1] a, double[::1] x):
    # a^T @ x: a is (r, c), x is (r,)
    cdef Py_ssize_t r = a.shape[0], c = a.shape[1]
    if x.shape[0] != r:
        raise ValueError("matvec_t: dimensions differ")
    out_arr = np.zeros(c, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double xi
    for i in range(r):
        xi = x[i]
        for k in range(c):
            out[k] += a[i, k] * xi
    return out_arr


def circ_conv(double[::1] kernel, double[::1] signal):
    # out[i] = sum_j kernel[j] * signal[(i - j) mod n]
    cdef Py_ssize_t n = kernel.shape[0]
    if signal.shape[0] != n:
        raise ValueError("circ_conv: lengths differ")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, idx
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(i + 1):
            s += kernel[j] * signal[i - j]
        for j in range(i + 1, n):
            s += kernel[j] * signal[i - j + n]
        out[i] = s
    return out_arr


def circ_corr(double[::1] a, double[::1] b):
    # out[k] = sum_i a[i] * b[(i - k) mod n]
    cdef Py_ssize_t n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("circ_corr: lengths differ")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    cdef double s
    for k in range(n):
        s = 0.0
        for i in range(k):
            s += a[i] * b[i - k + n]
        for i in range(k, n):
            s += a[i] * b[i - k]
        out[k] = s
    return out_arr


def softmax_vec(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double mx = x[0]
    cdef double total = 0.0
    for i in range(1, n):
        if x[i] > mx:
            mx = x[i]
    for i in range(n):
        out[i] = exp(x[i] - mx)
        total += out[i]
    for i in range(n):
        out[i] /= total
    return out_arr


def acc_outer(double[:, ::1] acc, double[::1] u, double[::1] v):
    cdef Py_ssize_t r = acc.shape[0], c = acc.shape[1]
    if u.shape[0] != r or v.shape[0] != c:
        raise ValueError("acc_outer: dimensions differ")
    cdef Py_ssize_t i, j
    cdef double ui
    for i in range(r):
        ui = u[i]
        for j in range(c):
            acc[i, j] += ui * v[j]


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t):
    """Bias-corrected Adam step, all four flat arrays updated in place."""
    cdef Py_ssize_t n = p.shape[0]
    cdef double mc = 1.0 - pow(beta1, t)
    cdef double vc = 1.0 - pow(beta2, t)
    cdef Py_ssize_t i
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / mc) / (sqrt(v[i] / vc) + eps)
