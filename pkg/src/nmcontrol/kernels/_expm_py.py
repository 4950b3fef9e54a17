"""Numpy fallback for the per-slice exponentials."""
import numpy as np
import scipy.linalg

from ..expm import expm_frechet_diag

# bound on the temporary stacks held at once
_MAX_STACK_BYTES = 64 * 2**20


def expm_slices(L0, g, values, dt, derivative=False):
    """``exp((L0 + v_j diag(g)) dt)`` for each ``v_j`` in ``values``.

    With ``derivative`` also returns the derivative of each exponential
    with respect to ``v_j``; otherwise the second result is None.
    """
    L0 = np.asarray(L0, dtype=complex)
    g = np.asarray(g, dtype=complex)
    values = np.asarray(values, dtype=float)
    n, k = values.size, L0.shape[0]
    chunk = max(1, _MAX_STACK_BYTES // (k * k * 16 * 12))
    G = np.empty((n, k, k), dtype=complex)
    dG = np.empty((n, k, k), dtype=complex) if derivative else None
    idx = np.arange(k)
    for s in range(0, n, chunk):
        part = values[s:s + chunk]
        A = np.broadcast_to(L0 * dt, (part.size, k, k)).copy()
        A[:, idx, idx] += part[:, None] * g * dt
        if derivative:
            G[s:s + chunk], dG[s:s + chunk] = expm_frechet_diag(A, g * dt)
        else:
            G[s:s + chunk] = scipy.linalg.expm(A)
    return G, dG
