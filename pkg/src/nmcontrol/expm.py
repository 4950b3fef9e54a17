"""Batched matrix exponential with its Fréchet derivative along a diagonal.

Scaling and squaring with Padé approximants (Al-Mohy & Higham, SIAM J.
Matrix Anal. Appl. 30, 1639 (2009), Algorithm 6.4), evaluated for a whole
stack of generators at once. One Padé degree and one scaling power are
chosen for the stack from its largest 1-norm, which keeps the backward
error bound for every member.

The derivative direction is a diagonal matrix, so products with it are row
and column scalings.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["expm_frechet_diag", "expm_augmented"]

# largest ||2^-s A||_1 per Padé degree with backward error <= 2^-53
_ELL = {3: 1.08e-2, 5: 2.00e-1, 7: 7.83e-1, 9: 1.78e0, 13: 4.74e0}

_B = {
    3: (120., 60., 12., 1.),
    5: (30240., 15120., 3360., 420., 30., 1.),
    7: (17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.),
    9: (17643225600., 8821612800., 2075673600., 302702400., 30270240.,
        2162160., 110880., 3960., 90., 1.),
    13: (64764752532480000., 32382376266240000., 7771770303897600.,
         1187353796428800., 129060195264000., 10559470521600.,
         670442572800., 33522128640., 1323241920., 40840800., 960960.,
         16380., 182., 1.),
}


def _scale_cols(X, e):
    return X * e[..., None, :]


def _scale_rows(X, e):
    return X * e[..., :, None]


def _pade_low(A, e, m, ident):
    """U, V and their derivatives for degree 3..9 (powers built directly)."""
    b = _B[m]
    A2 = A @ A
    M2 = _scale_cols(A, e) + _scale_rows(A, e)
    powers = [(ident, None), (A2, M2)]
    for _ in range(2, (m + 1) // 2):
        P, Mp = powers[-1]
        powers.append((P @ A2, P @ M2 + Mp @ A2))
    w = sum(b[2 * i + 1] * powers[i][0] for i in range(len(powers)))
    v = sum(b[2 * i] * powers[i][0] for i in range(len(powers)))
    lw = sum(b[2 * i + 1] * powers[i][1] for i in range(1, len(powers)))
    lv = sum(b[2 * i] * powers[i][1] for i in range(1, len(powers)))
    U = A @ w
    Lu = A @ lw + _scale_rows(w, e)
    return U, v, Lu, lv


def _pade13(A, e, ident):
    b = _B[13]
    A2 = A @ A
    M2 = _scale_cols(A, e) + _scale_rows(A, e)
    A4 = A2 @ A2
    M4 = A2 @ M2 + M2 @ A2
    A6 = A2 @ A4
    M6 = A4 @ M2 + M4 @ A2
    W1 = b[13] * A6 + b[11] * A4 + b[9] * A2
    W2 = b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident
    Z1 = b[12] * A6 + b[10] * A4 + b[8] * A2
    Z2 = b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    W = A6 @ W1 + W2
    U = A @ W
    V = A6 @ Z1 + Z2
    Lw1 = b[13] * M6 + b[11] * M4 + b[9] * M2
    Lw2 = b[7] * M6 + b[5] * M4 + b[3] * M2
    Lz1 = b[12] * M6 + b[10] * M4 + b[8] * M2
    Lz2 = b[6] * M6 + b[4] * M4 + b[2] * M2
    Lw = A6 @ Lw1 + M6 @ W1 + Lw2
    Lu = A @ Lw + _scale_rows(W, e)
    Lv = A6 @ Lz1 + M6 @ Z1 + Lz2
    return U, V, Lu, Lv


def expm_frechet_diag(A: np.ndarray, e: np.ndarray):
    """``exp(A_j)`` and ``L(A_j, diag(e))`` for a stack ``A`` of shape (n, k, k).

    ``e`` has shape (k,) and is shared by the stack.
    """
    A = np.asarray(A, dtype=complex)
    e = np.asarray(e, dtype=complex)
    n, k, _ = A.shape
    if n == 0:
        return A.copy(), A.copy()
    ident = np.eye(k, dtype=complex)
    norm = float(np.abs(A).sum(axis=-2).max())
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _ELL[m]:
            U, V, Lu, Lv = _pade_low(A, e, m, ident)
            break
    else:
        s = max(0, int(math.ceil(math.log2(norm / _ELL[13]))))
        scale = 2.0 ** -s
        U, V, Lu, Lv = _pade13(A * scale, e * scale, ident)
    P = V - U
    R = np.linalg.solve(P, U + V)
    L = np.linalg.solve(P, Lu + Lv + (Lu - Lv) @ R)
    for _ in range(s):
        L = R @ L + L @ R
        R = R @ R
    return R, L


def expm_augmented(A: np.ndarray, e: np.ndarray):
    """Reference: read both results off ``exp([[A, diag(e)], [0, A]])``."""
    import scipy.linalg

    A = np.asarray(A, dtype=complex)
    n, k, _ = A.shape
    aug = np.zeros((n, 2 * k, 2 * k), dtype=complex)
    aug[:, :k, :k] = A
    aug[:, k:, k:] = A
    aug[:, np.arange(k), k + np.arange(k)] = e
    E = scipy.linalg.expm(aug)
    return E[:, :k, :k], E[:, :k, k:]
