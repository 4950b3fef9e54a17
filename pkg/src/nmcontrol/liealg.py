"""Dynamic Lie algebra of drift and control, and the diagonal directions it
reaches on the qudit.

Elements are anti-Hermitian matrices handled as real vectors (real and
imaginary parts stacked), with the real Hilbert-Schmidt inner product
``Re tr(A^H B)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import OperatorSet

__all__ = ["LieClosure", "LieError", "lie_closure", "control_ideal",
           "diagonal_reachability", "diagonal_projection_rank"]


class LieError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LieClosure:
    basis: list = field(repr=False)
    dimension: int
    truncated: bool


class _Basis:
    """Incremental Gram-Schmidt on flattened anti-Hermitian matrices."""

    def __init__(self, d: int, tol: float, max_dim: int):
        self.d = d
        self.tol = tol
        self.max_dim = max_dim
        self.vecs = np.empty((0, 2 * d * d))
        self.mats: list[np.ndarray] = []

    def add(self, X: np.ndarray) -> bool:
        v = np.concatenate([X.real.ravel(), X.imag.ravel()])
        for _ in range(2):  # second pass keeps orthogonality at rounding level
            if len(self.mats):
                v = v - self.vecs.T @ (self.vecs @ v)
        nrm = np.linalg.norm(v)
        if nrm <= self.tol:
            return False
        v = v / nrm
        self.vecs = np.vstack([self.vecs, v])
        n2 = self.d * self.d
        M = (v[:n2] + 1j * v[n2:]).reshape(self.d, self.d)
        self.mats.append((M - M.conj().T) / 2)
        return True

    @property
    def full(self) -> bool:
        return len(self.mats) >= self.max_dim


def _closure(seeds, actors, tol, max_dim):
    """Smallest subspace containing ``seeds`` that is closed under brackets
    with itself and with every element of ``actors``."""
    d = seeds[0].shape[0]
    basis = _Basis(d, tol, max_dim)
    for s in seeds:
        if basis.full:
            break
        basis.add(s / max(np.linalg.norm(s), 1e-300))
    actors = [a / max(np.linalg.norm(a), 1e-300) for a in actors]
    # every pair (i, j) with i < j is bracketed once; actors against every element
    done = 0
    while done < len(basis.mats) and not basis.full:
        new = basis.mats[done]
        partners = actors + basis.mats[:done]
        for P in partners:
            C = new @ P - P @ new
            if np.linalg.norm(C) > tol:
                basis.add(C)
                if basis.full:
                    break
        done += 1
    # all of u(d) is closed by definition, so only a smaller cap truncates
    truncated = basis.full and done < len(basis.mats) and len(basis.mats) < d * d
    return LieClosure(list(basis.mats), len(basis.mats), truncated)


def _check_generators(generators):
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if not gens:
        raise LieError("need at least one generator")
    d = gens[0].shape
    if len(d) != 2 or d[0] != d[1] or any(g.shape != d for g in gens):
        raise LieError("generators must be square and of equal size")
    return gens


def lie_closure(generators, tol: float = 1e-8, max_dim: int | None = None) -> LieClosure:
    """Real Lie algebra spanned by nested commutators of ``i * generators``.

    Parameters
    ----------
    generators : sequence of Hermitian arrays
    tol : float
        Residual norm, relative to unit-normalized elements, below which a
        commutator counts as already in the span.
    max_dim : int, optional
        Stop (and flag ``truncated``) at this dimension; defaults to ``d**2``.
    """
    gens = _check_generators(generators)
    d = gens[0].shape[0]
    max_dim = d * d if max_dim is None else max_dim
    return _closure([1j * g for g in gens], [], tol, max_dim)


def control_ideal(drift, control, tol: float = 1e-8, max_dim: int | None = None) -> LieClosure:
    """Ideal generated by ``i*control`` inside the algebra of ``{drift, control}``.

    These are the directions the control adds on top of free evolution:
    ``i*control``, its nested brackets with the drift, and brackets among those.
    """
    drift, control = _check_generators([drift, control])
    d = drift.shape[0]
    max_dim = d * d if max_dim is None else max_dim
    return _closure([1j * control], [1j * drift], tol, max_dim)


def diagonal_projection_rank(closure: LieClosure, n_levels: int, env_dim: int,
                             tol: float = 1e-8) -> int:
    """Rank of the closure projected onto traceless qudit diagonals, taken
    in the block with every environment mode in its ground state."""
    rows = []
    for B in closure.basis:
        # basis order is qudit ⊗ environment: ground env at stride env_dim
        diag = np.diag(B)[::env_dim][:n_levels].imag
        rows.append(diag - diag.mean())
    if not rows:
        return 0
    s = np.linalg.svd(np.array(rows), compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def diagonal_reachability(ops: OperatorSet, tol: float = 1e-8,
                          max_dim: int | None = None) -> int:
    """Number of independent traceless qudit-diagonal directions the control
    reaches; ``n_levels - 1`` means every diagonal unitary is reachable.

    Raises
    ------
    LieError
        If the closure hit ``max_dim`` before reaching ``n_levels - 1``.
    """
    closure = control_ideal(ops.drift, ops.control_generator, tol, max_dim)
    rank = diagonal_projection_rank(closure, ops.n_levels, ops.env_dim, tol)
    if closure.truncated and rank < ops.n_levels - 1:
        raise LieError(f"closure truncated at dimension {closure.dimension}; "
                       f"reachability indeterminate (rank so far {rank})")
    return rank
