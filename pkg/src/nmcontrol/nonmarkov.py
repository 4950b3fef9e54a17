"""Determinant (state-space volume) witness of non-Markovian reduced dynamics.

For a Markovian semigroup ``|det Λ(t)|`` can only shrink; any increase
between two sample times means information flowed back from the environment.
The magnitude of the determinant does not depend on the operator basis used
to write the channel, so the column-stacking representation is used as is.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import block_system
from .controls import PiecewiseControl
from .lindblad import PropagationError
from .model import OperatorSet

__all__ = ["DeterminantTrace", "determinant_trace", "is_markovian", "increase_intervals",
           "EPSILON"]

# absolute increase per step that counts as back-flow
EPSILON = 1e-9


@dataclass(frozen=True, eq=False)
class DeterminantTrace:
    times: np.ndarray                       # ns
    det_abs: np.ndarray
    nonmarkovian_intervals: list = field(default_factory=list)

    @property
    def max_increase(self) -> float:
        if self.det_abs.size < 2:
            return 0.0
        return float(max(0.0, np.diff(self.det_abs).max()))


def increase_intervals(times, values, eps: float = EPSILON) -> list[tuple[float, float]]:
    """Maximal runs of consecutive samples over which ``values`` rises by more
    than ``eps`` per step."""
    times = np.asarray(times, dtype=float)
    rising = np.diff(np.asarray(values, dtype=float)) > eps
    out = []
    start = None
    for i, r in enumerate(rising):
        if r and start is None:
            start = i
        elif not r and start is not None:
            out.append((float(times[start]), float(times[i])))
            start = None
    if start is not None:
        out.append((float(times[start]), float(times[-1])))
    return out


def determinant_trace(ops: OperatorSet, control: PiecewiseControl, n_samples: int = 400,
                      eps: float = EPSILON) -> DeterminantTrace:
    """``|det Λ(t)|`` at ``n_samples`` equally spaced times in ``[0, T]``."""
    if n_samples < 2:
        raise PropagationError(f"n_samples must be >= 2, got {n_samples}")
    times = np.linspace(0.0, control.total_time, n_samples)
    channels = block_system(ops).channels_at(control.values, control.dt, times)
    det_abs = np.array([abs(ch.determinant()) for ch in channels])
    return DeterminantTrace(times, det_abs, increase_intervals(times, det_abs, eps))


def is_markovian(trace: DeterminantTrace) -> bool:
    return not trace.nonmarkovian_intervals
