# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Per-slice exponential and Fréchet derivative, compiled.

For every slice ``j`` forms ``A = (L0 + values[j] * diag(g)) * dt`` and
returns ``exp(A)`` and, optionally, ``L(A, diag(g) * dt)``, the derivative
with respect to ``values[j]``. Scaling and squaring with Padé approximants
(Al-Mohy & Higham 2009, Algorithm 6.4), degree chosen per slice.

Work buffers are column-major so BLAS/LAPACK are called directly; results
are written back row-major.
"""
import numpy as np
from libc.math cimport ceil, log2, sqrt
from scipy.linalg.cython_blas cimport zgemm
from scipy.linalg.cython_lapack cimport zgetrf, zgetrs

ctypedef double complex cplx

cdef double[14] B13 = [64764752532480000., 32382376266240000., 7771770303897600.,
                       1187353796428800., 129060195264000., 10559470521600.,
                       670442572800., 33522128640., 1323241920., 40840800., 960960.,
                       16380., 182., 1.]
cdef double[10] B9 = [17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                      2162160., 110880., 3960., 90., 1.]
cdef double[8] B7 = [17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.]
cdef double[6] B5 = [30240., 15120., 3360., 420., 30., 1.]
cdef double[4] B3 = [120., 60., 12., 1.]

# buffer slots
DEF NBUF = 24
DEF S_A = 0
DEF S_P = 1     # even powers A^0..A^8 (slots 1..5)
DEF S_M = 6     # their derivatives (slots 6..10, slot 6 unused)
DEF S_U = 11
DEF S_V = 12
DEF S_LU = 13
DEF S_LV = 14
DEF S_W = 15
DEF S_LW = 16
DEF S_T1 = 17
DEF S_T2 = 18
DEF S_R = 19
DEF S_L = 20
DEF S_Q = 21
DEF S_W1 = 22
DEF S_Z1 = 23


cdef inline void _gemm(int k, cplx* A, cplx* B, cplx* C, cplx beta) noexcept nogil:
    # C = A @ B + beta * C (column-major)
    cdef char tr = b'N'
    cdef cplx one = 1.0
    zgemm(&tr, &tr, &k, &k, &k, &one, A, &k, B, &k, &beta, C, &k)


cdef inline void _mul_re(double re, double im, double xr, double xi,
                         double* outr, double* outi) noexcept nogil:
    outr[0] = re * xr - im * xi
    outi[0] = re * xi + im * xr


cdef void _diag_derivative(int k, cplx* A, const double* e, cplx* M) noexcept nogil:
    # M = A diag(e) + diag(e) A, e as (re, im) pairs
    cdef int r, c
    cdef double* a = <double*> A
    cdef double* m = <double*> M
    cdef double xr, xi, yr, yi
    for c in range(k):
        for r in range(k):
            _mul_re(e[2 * c] + e[2 * r], e[2 * c + 1] + e[2 * r + 1],
                    a[2 * (c * k + r)], a[2 * (c * k + r) + 1], &xr, &xi)
            m[2 * (c * k + r)] = xr
            m[2 * (c * k + r) + 1] = xi


cdef void _scale_rows_add(int k, cplx* X, const double* e, cplx* out) noexcept nogil:
    # out += diag(e) @ X
    cdef int r, c
    cdef double* x = <double*> X
    cdef double* o = <double*> out
    cdef double yr, yi
    for c in range(k):
        for r in range(k):
            _mul_re(e[2 * r], e[2 * r + 1], x[2 * (c * k + r)], x[2 * (c * k + r) + 1], &yr, &yi)
            o[2 * (c * k + r)] += yr
            o[2 * (c * k + r) + 1] += yi


cdef inline void _axpy_set(int n, double a, cplx* x, cplx* y, bint first) noexcept nogil:
    cdef int i
    if first:
        for i in range(n):
            y[i] = a * x[i]
    else:
        for i in range(n):
            y[i] = y[i] + a * x[i]


cdef void _pade_low(int k, int m, const double* b, cplx** buf, const double* e,
                    bint deriv) noexcept nogil:
    """U, V (and Lu, Lv) for degree 3..9 from the even powers."""
    cdef int kk = k * k, i, npow = (m + 1) // 2, p
    cdef cplx* A = buf[S_A]
    cdef cplx* P0 = buf[S_P]
    for i in range(kk):
        P0[i] = 0
    for i in range(k):
        P0[i * k + i] = 1
    _gemm(k, A, A, buf[S_P + 1], 0)
    if deriv:
        _diag_derivative(k, A, e, buf[S_M + 1])
    for p in range(2, npow):
        _gemm(k, buf[S_P + p - 1], buf[S_P + 1], buf[S_P + p], 0)
        if deriv:
            _gemm(k, buf[S_P + p - 1], buf[S_M + 1], buf[S_M + p], 0)
            _gemm(k, buf[S_M + p - 1], buf[S_P + 1], buf[S_M + p], 1)
    # W = sum b[2i+1] A^{2i}, V = sum b[2i] A^{2i}
    for p in range(npow):
        _axpy_set(kk, b[2 * p + 1], buf[S_P + p], buf[S_W], p == 0)
        _axpy_set(kk, b[2 * p], buf[S_P + p], buf[S_V], p == 0)
    _gemm(k, A, buf[S_W], buf[S_U], 0)
    if not deriv:
        return
    for p in range(1, npow):
        _axpy_set(kk, b[2 * p + 1], buf[S_M + p], buf[S_LW], p == 1)
        _axpy_set(kk, b[2 * p], buf[S_M + p], buf[S_LV], p == 1)
    _gemm(k, A, buf[S_LW], buf[S_LU], 0)
    _scale_rows_add(k, buf[S_W], e, buf[S_LU])


cdef void _pade13(int k, cplx** buf, const double* e, bint deriv) noexcept nogil:
    cdef int kk = k * k, i
    cdef const double* b = B13
    cdef cplx* A = buf[S_A]
    cdef cplx* A2 = buf[S_P + 1]
    cdef cplx* A4 = buf[S_P + 2]
    cdef cplx* A6 = buf[S_P + 3]
    cdef cplx* M2 = buf[S_M + 1]
    cdef cplx* M4 = buf[S_M + 2]
    cdef cplx* M6 = buf[S_M + 3]
    cdef cplx* W1 = buf[S_W1]
    cdef cplx* Z1 = buf[S_Z1]
    cdef cplx* W = buf[S_W]
    cdef cplx* T1 = buf[S_T1]
    cdef cplx* T2 = buf[S_T2]
    _gemm(k, A, A, A2, 0)
    _gemm(k, A2, A2, A4, 0)
    _gemm(k, A2, A4, A6, 0)
    for i in range(kk):
        W1[i] = b[13] * A6[i] + b[11] * A4[i] + b[9] * A2[i]
        Z1[i] = b[12] * A6[i] + b[10] * A4[i] + b[8] * A2[i]
        W[i] = b[7] * A6[i] + b[5] * A4[i] + b[3] * A2[i]
        buf[S_V][i] = b[6] * A6[i] + b[4] * A4[i] + b[2] * A2[i]
    for i in range(k):
        W[i * k + i] = W[i * k + i] + b[1]
        buf[S_V][i * k + i] = buf[S_V][i * k + i] + b[0]
    _gemm(k, A6, W1, W, 1)
    _gemm(k, A, W, buf[S_U], 0)
    _gemm(k, A6, Z1, buf[S_V], 1)
    if not deriv:
        return
    _diag_derivative(k, A, e, M2)
    _gemm(k, A2, M2, M4, 0)
    _gemm(k, M2, A2, M4, 1)
    _gemm(k, A4, M2, M6, 0)
    _gemm(k, M4, A2, M6, 1)
    # Lw = A6 Lw1 + M6 W1 + Lw2 ; Lv = A6 Lz1 + M6 Z1 + Lz2
    for i in range(kk):
        T1[i] = b[13] * M6[i] + b[11] * M4[i] + b[9] * M2[i]
        T2[i] = b[12] * M6[i] + b[10] * M4[i] + b[8] * M2[i]
        buf[S_LW][i] = b[7] * M6[i] + b[5] * M4[i] + b[3] * M2[i]
        buf[S_LV][i] = b[6] * M6[i] + b[4] * M4[i] + b[2] * M2[i]
    _gemm(k, A6, T1, buf[S_LW], 1)
    _gemm(k, M6, W1, buf[S_LW], 1)
    _gemm(k, A6, T2, buf[S_LV], 1)
    _gemm(k, M6, Z1, buf[S_LV], 1)
    _gemm(k, A, buf[S_LW], buf[S_LU], 0)
    _scale_rows_add(k, W, e, buf[S_LU])


def expm_slices(L0, g, values, double dt, bint derivative=False):
    """Return ``(G, dG)`` stacks, ``dG`` is None without ``derivative``."""
    cdef const cplx[:, ::1] l0 = np.ascontiguousarray(L0, dtype=complex)
    cdef const cplx[::1] gv = np.ascontiguousarray(g, dtype=complex)
    cdef const double[::1] vals = np.ascontiguousarray(values, dtype=float)
    cdef int k = l0.shape[0], n = vals.shape[0]
    cdef int kk = k * k
    G_arr = np.empty((n, k, k), dtype=complex)
    dG_arr = np.empty((n, k, k), dtype=complex) if derivative else None
    cdef cplx[:, :, ::1] G = G_arr
    cdef cplx[:, :, ::1] dG
    if derivative:
        dG = dG_arr
    work_arr = np.empty((NBUF, max(kk, 1)), dtype=complex)
    cdef cplx[:, ::1] work = work_arr
    e_arr = np.empty(2 * k, dtype=float)
    cdef double[::1] e = e_arr
    piv_arr = np.empty(k, dtype=np.int32)
    cdef int[::1] piv = piv_arr
    cdef cplx* buf[NBUF]
    cdef int i, j, r, c, s, q, info, m
    cdef double norm, colsum, scale
    cdef cplx* A
    cdef char tr = b'N'
    for i in range(NBUF):
        buf[i] = &work[i, 0]
    if n == 0 or k == 0:
        return G_arr, dG_arr
    with nogil:
        for j in range(n):
            A = buf[S_A]
            # column-major A = (L0 + v diag g) dt
            for c in range(k):
                for r in range(k):
                    A[c * k + r] = l0[r, c] * dt
                A[c * k + c] = A[c * k + c] + vals[j] * dt * gv[c]
            norm = 0.0
            for c in range(k):
                colsum = 0.0
                for r in range(k):
                    colsum += sqrt(A[c * k + r].real * A[c * k + r].real
                                   + A[c * k + r].imag * A[c * k + r].imag)
                if colsum > norm:
                    norm = colsum
            s = 0
            scale = 1.0
            if norm > 1.78:
                m = 13
                s = <int> ceil(log2(norm / 4.74))
                if s < 0:
                    s = 0
                scale = 2.0 ** (-s)
                for i in range(kk):
                    A[i] = A[i] * scale
            elif norm > 7.83e-1:
                m = 9
            elif norm > 2.00e-1:
                m = 7
            elif norm > 1.08e-2:
                m = 5
            else:
                m = 3
            for c in range(k):
                e[2 * c] = dt * gv[c].real * scale
                e[2 * c + 1] = dt * gv[c].imag * scale
            if m == 13:
                _pade13(k, buf, &e[0], derivative)
            elif m == 9:
                _pade_low(k, 9, B9, buf, &e[0], derivative)
            elif m == 7:
                _pade_low(k, 7, B7, buf, &e[0], derivative)
            elif m == 5:
                _pade_low(k, 5, B5, buf, &e[0], derivative)
            else:
                _pade_low(k, 3, B3, buf, &e[0], derivative)
            # P = V - U (factored in place in T1), R = P^-1 (U + V)
            for i in range(kk):
                buf[S_T1][i] = buf[S_V][i] - buf[S_U][i]
                buf[S_R][i] = buf[S_U][i] + buf[S_V][i]
            zgetrf(&k, &k, buf[S_T1], &k, &piv[0], &info)
            zgetrs(&tr, &k, &k, buf[S_T1], &k, &piv[0], buf[S_R], &k, &info)
            if derivative:
                # L = P^-1 (Lu + Lv + (Lu - Lv) R)
                for i in range(kk):
                    buf[S_L][i] = buf[S_LU][i] + buf[S_LV][i]
                    buf[S_Q][i] = buf[S_LU][i] - buf[S_LV][i]
                _gemm(k, buf[S_Q], buf[S_R], buf[S_L], 1)
                zgetrs(&tr, &k, &k, buf[S_T1], &k, &piv[0], buf[S_L], &k, &info)
            for q in range(s):
                if derivative:
                    _gemm(k, buf[S_R], buf[S_L], buf[S_Q], 0)
                    _gemm(k, buf[S_L], buf[S_R], buf[S_Q], 1)
                    for i in range(kk):
                        buf[S_L][i] = buf[S_Q][i]
                _gemm(k, buf[S_R], buf[S_R], buf[S_Q], 0)
                for i in range(kk):
                    buf[S_R][i] = buf[S_Q][i]
            for c in range(k):
                for r in range(k):
                    G[j, r, c] = buf[S_R][c * k + r]
            if derivative:
                for c in range(k):
                    for r in range(k):
                        dG[j, r, c] = buf[S_L][c * k + r]
    return G_arr, dG_arr
