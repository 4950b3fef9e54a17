"""Block-structured propagation used by the optimizer and the diagnostics.

Two exact reductions make the Liouville-space problem small:

* Starting from ``X ⊗ |g..g><g..g|`` no state above ``N - 1`` total
  excitations is ever populated (the Hamiltonian conserves the excitation
  count and every jump lowers it), so the joint space is cut to the states
  with at most ``N - 1`` excitations.
* ``|a><b|`` keeps its coherence order ``exc(a) - exc(b)`` under the
  Hamiltonian and under every jump, so the Liouvillian is block diagonal
  in that order. Orders ``-m`` are complex conjugates of orders ``m``
  (the dynamics preserve Hermiticity), so only ``m = 0 .. N-1`` are
  propagated.

Within a block of size ``k`` the generator of slice ``j`` is
``L0 + delta_j * diag(g)`` with ``g`` the (diagonal) superoperator of
``-i[D, .]``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .lindblad import Channel, PropagationError, liouvillian
from .model import OperatorSet

__all__ = ["OrderBlock", "BlockSystem", "block_system"]


@dataclass(frozen=True, eq=False)
class OrderBlock:
    order: int
    L0: np.ndarray          # (k, k) generator at delta = 0
    g: np.ndarray           # (k,) diagonal of the control superoperator
    inputs: np.ndarray      # (k, r) columns embed |l+m><l| ⊗ |g..g><g..g|
    readout: np.ndarray     # (r, k) partial trace onto |l+m><l|
    qudit_index: np.ndarray  # (r,) column-stacked qudit indices of the pairs

    @property
    def size(self) -> int:
        return self.L0.shape[0]

    @property
    def rank(self) -> int:
        return self.inputs.shape[1]


class BlockSystem:
    """Coherence-order blocks of the Liouvillian restricted to the reachable
    excitation subspace."""

    def __init__(self, ops: OperatorSet):
        self.ops = ops
        n = ops.n_levels
        e = ops.env_dim
        exc = np.rint(np.real(np.diag(ops.excitation_number))).astype(int)
        keep = np.flatnonzero(exc <= n - 1)
        pos = -np.ones(ops.dim, dtype=int)
        pos[keep] = np.arange(keep.size)
        dr = keep.size
        sub = np.ix_(keep, keep)
        H0 = ops.drift[sub]
        A = [c[sub] for c in ops.collapse_ops]
        ctrl = np.real(np.diag(ops.control_generator))[keep]
        L0 = liouvillian(H0, A).data
        # column stacking: index a + dr*b  <->  |a><b|
        g = -1j * (np.tile(ctrl, dr) - np.repeat(ctrl, dr))
        exc_r = exc[keep]
        order = np.tile(exc_r, dr) - np.repeat(exc_r, dr)

        self.n_levels = n
        self.reduced_dim = dr
        self.blocks: list[OrderBlock] = []
        for m in range(n):
            idx = np.flatnonzero(order == m)
            where = -np.ones(dr * dr, dtype=int)
            where[idx] = np.arange(idx.size)
            r = n - m
            inputs = np.zeros((idx.size, r), dtype=complex)
            readout = np.zeros((r, idx.size), dtype=complex)
            qidx = np.empty(r, dtype=int)
            for l in range(r):
                k = l + m
                qidx[l] = k + n * l
                inputs[where[pos[k * e] + dr * pos[l * e]], l] = 1.0
                for s in range(e):
                    a, b = pos[k * e + s], pos[l * e + s]
                    if a >= 0 and b >= 0:
                        readout[l, where[a + dr * b]] = 1.0
            self.blocks.append(OrderBlock(
                order=m,
                L0=np.ascontiguousarray(L0[np.ix_(idx, idx)]),
                g=g[idx],
                inputs=inputs,
                readout=readout,
                qudit_index=qidx,
            ))

    # -- slice propagators -------------------------------------------------

    def generators(self, block: OrderBlock, values: np.ndarray) -> np.ndarray:
        """Stack of ``L0 + delta_j diag(g)``, shape ``(n_slices, k, k)``."""
        stack = np.repeat(block.L0[None], len(values), axis=0)
        diag = np.einsum("jii->ji", stack)
        diag += np.multiply.outer(values, block.g)
        return stack

    def slice_propagators(self, block: OrderBlock, values: np.ndarray, dt: float,
                          derivative: bool = False):
        """``exp(L_j dt)`` for every slice and optionally its derivative with
        respect to ``delta_j``."""
        values = np.ascontiguousarray(values, dtype=float)
        return kernels.expm_slices(block.L0, block.g, values, float(dt), derivative)

    # -- channels ------------------------------------------------------------

    def _assemble(self, lam: list[np.ndarray]) -> Channel:
        n = self.n_levels
        out = np.zeros((n * n, n * n), dtype=complex)
        for block, blk in zip(self.blocks, lam):
            q = block.qudit_index
            out[np.ix_(q, q)] = blk
            if block.order:
                # Λ(|l><k|) = Λ(|k><l|)^H
                qt = (q % n) * n + q // n
                out[np.ix_(qt, qt)] = blk.conj()
        return Channel(out)

    def channel(self, values: np.ndarray, dt: float) -> Channel:
        lam = []
        for block in self.blocks:
            G, _ = self.slice_propagators(block, values, dt)
            F = kernels.forward_chain(G, block.inputs)
            lam.append(block.readout @ F[-1])
        return self._assemble(lam)

    def channels_at(self, values: np.ndarray, dt: float,
                    times: np.ndarray) -> list[Channel]:
        """Reduced channels at arbitrary times inside ``[0, n_slices*dt]``."""
        values = np.asarray(values, dtype=float)
        total = values.size * dt
        times = np.asarray(times, dtype=float)
        if np.any(times < -1e-12) or np.any(times > total * (1 + 1e-12)):
            raise PropagationError(f"sample times outside [0, {total}]")
        # slice index and remainder for every sample
        j = np.minimum(np.floor(times / dt + 1e-9).astype(int), values.size)
        rem = times - j * dt
        rem[np.abs(rem) < 1e-12 * max(1.0, total)] = 0.0
        per_block = []
        for block in self.blocks:
            G, _ = self.slice_propagators(block, values, dt)
            F = kernels.forward_chain(G, block.inputs)
            out = []
            for jj, tau in zip(j, rem):
                state = F[jj]
                if tau > 0 and jj < values.size:
                    L = block.L0 + values[jj] * np.diag(block.g)
                    state = scipy.linalg.expm(L * tau) @ state
                out.append(block.readout @ state)
            per_block.append(out)
        return [self._assemble([pb[i] for pb in per_block]) for i in range(times.size)]

    def boundary_channels(self, values: np.ndarray, dt: float) -> list[Channel]:
        """Channels at every slice boundary, ``n_slices + 1`` of them."""
        per_block = []
        for block in self.blocks:
            G, _ = self.slice_propagators(block, values, dt)
            F = kernels.forward_chain(G, block.inputs)
            per_block.append(np.einsum("rk,jkc->jrc", block.readout, F))
        return [self._assemble([pb[i] for pb in per_block])
                for i in range(len(values) + 1)]

    # -- fidelity and gradient ----------------------------------------------

    def _target_blocks(self, U: np.ndarray) -> list[np.ndarray]:
        S = np.kron(U.conj(), U)
        return [S[np.ix_(b.qudit_index, b.qudit_index)] for b in self.blocks]

    def process_fidelity(self, values: np.ndarray, dt: float, U: np.ndarray,
                         gradient: bool = False):
        """Process fidelity and, optionally, its derivative per slice."""
        n = self.n_levels
        U = np.asarray(U, dtype=complex)
        values = np.asarray(values, dtype=float)
        fid = 0.0
        grad = np.zeros(values.size) if gradient else None
        for block, S in zip(self.blocks, self._target_blocks(U)):
            weight = 1.0 if block.order == 0 else 2.0
            G, dG = self.slice_propagators(block, values, dt, derivative=gradient)
            F = kernels.forward_chain(G, block.inputs)
            costate = S.conj().T @ block.readout
            fid += weight * np.real(np.trace(costate @ F[-1]))
            if gradient:
                B = kernels.backward_chain(G, costate)
                grad += weight * kernels.slice_gradients(B, dG, F)
        fid /= n * n
        if gradient:
            grad /= n * n
        return fid, grad


@functools.lru_cache(maxsize=16)
def block_system(ops: OperatorSet) -> BlockSystem:
    """Shared ``BlockSystem`` per operator set (operator sets are immutable)."""
    return BlockSystem(ops)
