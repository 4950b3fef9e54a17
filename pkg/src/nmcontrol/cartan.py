"""Cartan (KAK) factorization of unitaries into real rotations and a diagonal.

Any ``U`` in U(N) can be written ``U = e^{i phi} k1 A k2`` with ``k1, k2`` in
SO(N) and ``A`` diagonal unitary. Since the rotations are generated by real
antisymmetric Hamiltonians, the hard part of a gate reduces to a diagonal
unitary.

Conventions used here:

* ``M = U U^T = k1 A^2 k1^T`` is diagonalized by a real orthogonal ``k1``.
* ``theta_j = arg(A^2)_jj`` is taken in ``(-pi, pi]``, ``A = diag(e^{i theta/2})``.
* ``phi = arg(det U) / N`` is split off so that ``det(k1 A k2) = 1``; the
  phases stored in ``a_phases`` are those of ``A`` after this split, wrapped
  to ``(-pi, pi]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CartanError", "KakDecomposition", "kak_decompose", "is_special_orthogonal"]

_UNITARY_TOL = 1e-10
_MAX_RETRIES = 8


class CartanError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KakDecomposition:
    """``U = exp(i*global_phase) * k1 @ diag(exp(i*a_phases)) @ k2``."""
    k1: np.ndarray
    k2: np.ndarray
    a_phases: np.ndarray
    residual: float
    global_phase: float

    @property
    def a(self) -> np.ndarray:
        return np.diag(np.exp(1j * self.a_phases))

    def reconstruct(self) -> np.ndarray:
        return np.exp(1j * self.global_phase) * (self.k1 * np.exp(1j * self.a_phases)) @ self.k2


def is_special_orthogonal(M, tol: float = 1e-10) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise CartanError(f"expected a square matrix, got shape {M.shape}")
    if np.iscomplexobj(M):
        if np.abs(M.imag).max(initial=0.0) > tol:
            return False
        M = M.real
    n = M.shape[0]
    if np.linalg.norm(M.T @ M - np.eye(n)) > tol:
        return False
    return abs(np.linalg.det(M) - 1.0) <= tol


def _wrap(phases):
    # (-pi, pi]
    return np.pi - np.mod(np.pi - phases, 2 * np.pi)


def _joint_eigvecs(M, rng):
    """Real orthogonal O with O^T M O diagonal, for complex symmetric normal M.

    Re M and Im M commute, so a generic real mix of the two has the joint
    eigenvectors. Degenerate eigenspaces of M are degenerate for the mix as
    well and any orthonormal basis of them works.
    """
    X, Y = M.real, M.imag
    X = (X + X.T) / 2
    Y = (Y + Y.T) / 2
    if np.abs(M - np.diag(np.diag(M))).max() <= _UNITARY_TOL:
        return np.eye(M.shape[0]), 0.0
    best = None
    for _ in range(_MAX_RETRIES):
        c = rng.uniform(-np.pi, np.pi)
        _, O = np.linalg.eigh(np.cos(c) * X + np.sin(c) * Y)
        D = O.T @ M @ O
        off = np.linalg.norm(D - np.diag(np.diag(D)))
        if best is None or off < best[1]:
            best = (O, off)
        if off <= 1e-12 * np.sqrt(M.shape[0]):
            break
    return best


def kak_decompose(U, seed: int = 0, tol: float = 1e-9) -> KakDecomposition:
    """Factor a unitary ``U`` as ``e^{i phi} k1 A k2``.

    Parameters
    ----------
    U : (N, N) complex array
        Unitary to ``1e-10`` in ``||U^H U - I||``.
    seed : int
        Seeds the random mixing used to separate degenerate eigenspaces.
    tol : float
        Relative Frobenius residual that must be reached.

    Raises
    ------
    CartanError
        If ``U`` is not unitary or no retry reaches the residual bound.
    """
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise CartanError(f"expected a square matrix, got shape {U.shape}")
    n = U.shape[0]
    dev = np.linalg.norm(U.conj().T @ U - np.eye(n))
    if dev > _UNITARY_TOL:
        raise CartanError(f"input is not unitary: ||U^H U - I|| = {dev:.3e}")
    rng = np.random.default_rng(seed)
    norm_u = np.linalg.norm(U)
    best = None
    for _ in range(_MAX_RETRIES):
        O, _ = _joint_eigvecs(U @ U.T, rng)
        if np.linalg.det(O) < 0:
            O[:, 0] = -O[:, 0]
        theta = _wrap(np.angle(np.einsum("ij,jk,ki->i", O.T, U @ U.T, O)))
        half = theta / 2
        # A^{-1} k1^T U is orthogonal and (to rounding) real
        k2c = np.exp(-1j * half)[:, None] * (O.T @ U)
        k2 = k2c.real
        if np.linalg.det(k2) < 0:
            k2[0] = -k2[0]
            half[0] += np.pi
        phi = float(np.angle(np.linalg.det(U))) / n
        # shifting a phase by 2pi leaves exp(i*phase) unchanged
        phases = _wrap(half - phi)
        k1 = O
        dec = KakDecomposition(k1, k2, phases, 0.0, phi)
        res = float(np.linalg.norm(dec.reconstruct() - U))
        dec = KakDecomposition(k1, k2, phases, res, phi)
        if best is None or res < best.residual:
            best = dec
        if res <= tol * norm_u and is_special_orthogonal(k1) and is_special_orthogonal(k2):
            return dec
    raise CartanError(
        f"decomposition did not converge: residual {best.residual:.3e} after {_MAX_RETRIES} tries")
