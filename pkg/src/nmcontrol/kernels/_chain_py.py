"""Pure-numpy slice-chain kernels (fallback for the compiled extension)."""
import numpy as np


def forward_chain(G, F0):
    """States after every slice: ``F[0] = F0``, ``F[j+1] = G[j] @ F[j]``."""
    n, k, _ = G.shape
    F = np.empty((n + 1, k, F0.shape[1]), dtype=complex)
    F[0] = F0
    for j in range(n):
        np.matmul(G[j], F[j], out=F[j + 1])
    return F


def backward_chain(G, C):
    """Costates: ``B[n] = C``, ``B[j] = B[j+1] @ G[j]``."""
    n, k, _ = G.shape
    B = np.empty((n + 1, C.shape[0], k), dtype=complex)
    B[n] = C
    for j in range(n - 1, -1, -1):
        np.matmul(B[j + 1], G[j], out=B[j])
    return B


def slice_gradients(B, dG, F):
    """``Re tr(B[j+1] @ dG[j] @ F[j])`` for every slice ``j``."""
    X = np.matmul(B[1:], dG)
    return np.real(np.einsum("jrk,jkr->j", X, F[:-1]))
