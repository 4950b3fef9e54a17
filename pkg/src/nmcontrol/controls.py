"""Piecewise-constant controls and the edge-ramp constraint."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import mhz_to_angular

__all__ = ["RampSpec", "PiecewiseControl", "ConstraintError", "apply_constraints",
           "ramp_slices", "free_to_full", "full_to_free_gradient", "free_bounds"]


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class RampSpec:
    """Linear ramp into and out of the control at the pulse edges.

    ``ramp_rate_cap`` is in rad/ns per ns; the default corresponds to
    500 MHz reached in 2.5 ns.
    """

    ramp_time: float = 2.5
    ramp_rate_cap: float = mhz_to_angular(500.0) / 2.5
    endpoints_zero: bool = True

    @property
    def max_edge_value(self) -> float:
        return self.ramp_rate_cap * self.ramp_time


@dataclass(frozen=True, eq=False)
class PiecewiseControl:
    """Control shift ``delta`` (rad/ns) constant on ``len(values)`` equal slices."""

    total_time: float
    values: np.ndarray
    ramp: Optional[RampSpec] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ConstraintError("control needs at least one slice")
        if not np.all(np.isfinite(v)):
            raise ConstraintError("control values must be finite")
        if not (self.total_time > 0 and math.isfinite(self.total_time)):
            raise ConstraintError(f"total_time must be positive, got {self.total_time}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_slices(self) -> int:
        return self.values.size

    @property
    def dt(self) -> float:
        return self.total_time / self.n_slices

    @property
    def times(self) -> np.ndarray:
        """Slice boundaries, length ``n_slices + 1``."""
        return np.linspace(0.0, self.total_time, self.n_slices + 1)

    @classmethod
    def zeros(cls, total_time: float, n_slices: int, ramp: Optional[RampSpec] = None):
        return cls(total_time, np.zeros(n_slices), ramp)

    @classmethod
    def constant(cls, total_time: float, n_slices: int, value: float):
        return cls(total_time, np.full(n_slices, float(value)))

    def with_values(self, values) -> "PiecewiseControl":
        return PiecewiseControl(self.total_time, values, self.ramp)

    def refined(self, factor: int = 2) -> "PiecewiseControl":
        """Same pulse shape on ``factor`` times as many slices."""
        return PiecewiseControl(self.total_time, np.repeat(self.values, factor), self.ramp)


def ramp_slices(n_slices: int, dt: float, ramp: Optional[RampSpec]) -> int:
    """Number of locked slices at each edge."""
    if ramp is None:
        return 0
    n_r = int(round(ramp.ramp_time / dt))
    if 2 * ramp.ramp_time >= n_slices * dt or 2 * n_r >= n_slices:
        raise ConstraintError(
            f"ramp_time {ramp.ramp_time} ns leaves no free slices in "
            f"{n_slices * dt} ns")
    return n_r


def _ramp_weights(n_r: int) -> np.ndarray:
    # linear profile sampled at slice midpoints
    return (np.arange(n_r) + 0.5) / n_r


def free_bounds(n_free: int, delta_max: float, ramp: Optional[RampSpec]) -> np.ndarray:
    """Per-parameter symmetric bounds for the free slices."""
    b = np.full(n_free, float(delta_max))
    if ramp is not None and ramp.endpoints_zero:
        edge = min(delta_max, ramp.max_edge_value)
        b[0] = min(b[0], edge)
        b[-1] = min(b[-1], edge)
    return b


def free_to_full(free: np.ndarray, n_slices: int, dt: float,
                 ramp: Optional[RampSpec]) -> np.ndarray:
    """Expand free interior values to all slices, filling the edge ramps."""
    n_r = ramp_slices(n_slices, dt, ramp)
    free = np.asarray(free, dtype=float)
    if free.size != n_slices - 2 * n_r:
        raise ConstraintError("free parameter count does not match slices")
    if n_r == 0:
        return free.copy()
    w = _ramp_weights(n_r)
    out = np.empty(n_slices)
    out[n_r:n_slices - n_r] = free
    if ramp.endpoints_zero:
        out[:n_r] = free[0] * w
        out[n_slices - n_r:] = free[-1] * w[::-1]
    else:
        out[:n_r] = free[0]
        out[n_slices - n_r:] = free[-1]
    return out


def full_to_free_gradient(grad_full: np.ndarray, dt: float,
                          ramp: Optional[RampSpec]) -> np.ndarray:
    """Pull a per-slice gradient back onto the free parameters (chain rule
    through the ramp)."""
    n = grad_full.size
    n_r = ramp_slices(n, dt, ramp)
    if n_r == 0:
        return np.array(grad_full, dtype=float)
    g = np.array(grad_full[n_r:n - n_r], dtype=float)
    w = _ramp_weights(n_r) if ramp.endpoints_zero else np.ones(n_r)
    g[0] += w @ grad_full[:n_r]
    g[-1] += w[::-1] @ grad_full[n - n_r:]
    return g


def apply_constraints(control: PiecewiseControl, ramp: Optional[RampSpec] = None,
                      delta_max: float = mhz_to_angular(1000.0)) -> PiecewiseControl:
    """Clip interior slices to ``[-delta_max, delta_max]`` and overwrite the
    edges with linear ramps to and from the adjacent free values."""
    if ramp is None:
        ramp = control.ramp
    n = control.n_slices
    n_r = ramp_slices(n, control.dt, ramp)
    free = np.array(control.values[n_r:n - n_r])
    bounds = free_bounds(free.size, delta_max, ramp)
    free = np.clip(free, -bounds, bounds)
    return PiecewiseControl(control.total_time,
                            free_to_full(free, n, control.dt, ramp), ramp)
