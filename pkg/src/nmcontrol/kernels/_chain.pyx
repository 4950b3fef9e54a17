# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled slice-chain kernels.

Same contracts as ``_chain_py``. The blocks are small (k up to a few tens,
r <= N), where per-slice numpy/BLAS dispatch dominates, so these are plain
loops over interleaved (re, im) doubles.
"""
import numpy as np


cdef inline void _mm(const double* A, const double* B, double* C,
                     Py_ssize_t m, Py_ssize_t p, Py_ssize_t q) noexcept nogil:
    # C (m x q) = A (m x p) @ B (p x q), row-major complex as re/im pairs
    cdef Py_ssize_t i, j, l
    cdef double ar, ai, br, bi
    cdef double* c
    cdef const double* b
    for i in range(2 * m * q):
        C[i] = 0.0
    for i in range(m):
        c = C + 2 * i * q
        for l in range(p):
            ar = A[2 * (i * p + l)]
            ai = A[2 * (i * p + l) + 1]
            b = B + 2 * l * q
            for j in range(q):
                br = b[2 * j]
                bi = b[2 * j + 1]
                c[2 * j] += ar * br - ai * bi
                c[2 * j + 1] += ar * bi + ai * br


def _as_doubles(a):
    return np.ascontiguousarray(a, dtype=complex).view(np.float64)


def forward_chain(G, F0):
    """States after every slice: ``F[0] = F0``, ``F[j+1] = G[j] @ F[j]``."""
    g_arr = _as_doubles(G)
    f0 = np.ascontiguousarray(F0, dtype=complex)
    cdef Py_ssize_t n = g_arr.shape[0], k = g_arr.shape[1], r = f0.shape[1]
    out = np.empty((n + 1, k, r), dtype=complex)
    out[0] = f0
    cdef const double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] F = out.view(np.float64)
    cdef const double* gp = &g[0, 0, 0]
    cdef double* fp = &F[0, 0, 0]
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            _mm(gp + 2 * j * k * k, fp + 2 * j * k * r, fp + 2 * (j + 1) * k * r, k, k, r)
    return out


def backward_chain(G, C):
    """Costates: ``B[n] = C``, ``B[j] = B[j+1] @ G[j]``."""
    g_arr = _as_doubles(G)
    c = np.ascontiguousarray(C, dtype=complex)
    cdef Py_ssize_t n = g_arr.shape[0], k = g_arr.shape[1], r = c.shape[0]
    out = np.empty((n + 1, r, k), dtype=complex)
    out[n] = c
    cdef const double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] B = out.view(np.float64)
    cdef const double* gp = &g[0, 0, 0]
    cdef double* bp = &B[0, 0, 0]
    cdef Py_ssize_t j
    with nogil:
        for j in range(n - 1, -1, -1):
            _mm(bp + 2 * (j + 1) * r * k, gp + 2 * j * k * k, bp + 2 * j * r * k, r, k, k)
    return out


def slice_gradients(B, dG, F):
    """``Re tr(B[j+1] @ dG[j] @ F[j])`` for every slice ``j``."""
    cdef const double[:, :, ::1] b = _as_doubles(B)
    cdef const double[:, :, ::1] d = _as_doubles(dG)
    cdef const double[:, :, ::1] f = _as_doubles(F)
    cdef Py_ssize_t n = d.shape[0], k = d.shape[1], r = f.shape[2] // 2
    out = np.empty(n, dtype=float)
    cdef double[::1] res = out
    y_arr = np.empty(2 * k * r, dtype=float)
    cdef double[::1] y = y_arr
    cdef const double* bp = &b[0, 0, 0]
    cdef const double* dp = &d[0, 0, 0]
    cdef const double* fp = &f[0, 0, 0]
    cdef double* yp = &y[0]
    cdef const double* bj
    cdef Py_ssize_t j, a, c
    cdef double acc
    with nogil:
        for j in range(n):
            _mm(dp + 2 * j * k * k, fp + 2 * j * k * r, yp, k, k, r)
            bj = bp + 2 * (j + 1) * r * k
            acc = 0.0
            for c in range(r):
                for a in range(k):
                    acc += bj[2 * (c * k + a)] * yp[2 * (a * r + c)] \
                        - bj[2 * (c * k + a) + 1] * yp[2 * (a * r + c) + 1]
            res[j] = acc
    return out
