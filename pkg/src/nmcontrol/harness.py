"""Experiment runners behind the command line: single optimizations, grids,
the two-TLS table, random-target batches and diagnostics exports.

Every runner takes a resolved configuration and an optional output
directory. Grid points are independent; each gets the seed
``SeedSequence([seed, index])`` so rows do not depend on the worker count,
and rows are always reported in index order.
"""
from __future__ import annotations

import copy
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .blocks import block_system
from .config import ConfigError, RunConfig, config_hash, parse_config, with_override
from .controls import PiecewiseControl
from .grape import OptimizationResult, optimize, random_diagonal_target
from .io import (read_csv, save_superoperator, write_csv, write_determinant_csv,
                 write_population_csv, write_pulse_csv)
from .lindblad import Channel, average_fidelity, frame_target
from .model import build_operators, mhz_to_angular
from .nonmarkov import DeterminantTrace, determinant_trace

__all__ = ["SweepSpec", "SweepResult", "derive_seed", "run_optimize", "run_sweep",
           "run_table1", "run_random_targets", "run_nonmarkov", "run_simulate",
           "read_pulse_csv", "write_summary", "NO_TLS_BOUND"]

log = logging.getLogger(__name__)

# smallest error a qudit without a coupled TLS can reach for U1
NO_TLS_BOUND = 0.40


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _provenance(raw: dict, **extra) -> dict:
    out = {"config_hash": config_hash(raw), "version": __version__}
    out.update(extra)
    return out


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(str(v))


def write_summary(path, items: dict) -> None:
    """``key = value`` lines (valid TOML) for a flat mapping."""
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_toml_value(v)}\n")


def _mkdir(out):
    if out is not None:
        os.makedirs(out, exist_ok=True)
    return out


# -- single optimization -----------------------------------------------------


def _result_summary(cfg: RunConfig, res: OptimizationResult) -> dict:
    return {
        "config_hash": cfg.hash,
        "version": __version__,
        "final_error": res.final_error,
        "n_iterations": res.n_iterations,
        "status": res.status,
        "converged": res.converged,
        "gradient_norm_final": res.gradient_norm_final,
        "wall_time_s": res.wall_time,
        "seed": res.seed,
        "start_errors": res.start_errors,
        "no_tls_bound": NO_TLS_BOUND,
        "beats_no_tls_bound": bool(res.final_error < NO_TLS_BOUND),
        "error_history": res.error_history,
    }


def run_optimize(cfg: RunConfig, out: Optional[str] = None, workers: int = 1,
                 n_det_samples: Optional[int] = None):
    """Optimize the configured target; with ``out`` write ``pulse.csv``,
    ``history.csv``, ``determinant.csv``, ``channel.txt`` and ``summary.toml``.

    Returns the result, the determinant trace of the optimized evolution and
    the summary mapping.
    """
    ops = build_operators(cfg.model)
    res = optimize(ops, cfg.optimization, cfg.ramp, workers=workers)
    n_det = n_det_samples or cfg.raw["nonmarkov"]["n_samples"]
    trace = determinant_trace(ops, res.best_control, n_det)
    summary = _result_summary(cfg, res)
    summary["nonmarkovian_intervals"] = len(trace.nonmarkovian_intervals)
    if _mkdir(out):
        prov = _provenance(cfg.raw, gate_time_ns=cfg.optimization.total_time)
        write_pulse_csv(os.path.join(out, "pulse.csv"), res.best_control,
                        cfg.model.frequency_convention, prov)
        write_csv(os.path.join(out, "history.csv"), ["iteration", "error"],
                  enumerate(res.error_history), prov)
        write_determinant_csv(os.path.join(out, "determinant.csv"), trace, prov)
        ch = block_system(ops).channel(res.best_control.values, res.best_control.dt)
        save_superoperator(os.path.join(out, "channel.txt"), ch, prov)
        write_summary(os.path.join(out, "summary.toml"), summary)
    return res, trace, summary


# -- grids ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepSpec:
    """Up to two axes of parameter values over a base configuration."""
    base: dict
    axes: tuple = ()            # ((name, (values...)), ...)
    workers: int = 1

    def __post_init__(self):
        axes = tuple((str(n), tuple(v)) for n, v in self.axes)
        object.__setattr__(self, "axes", axes)
        if len(axes) > 2:
            raise ConfigError(f"at most two sweep axes, got {len(axes)}")
        for name, values in axes:
            if not values:
                raise ConfigError(f"sweep axis '{name}' has no values")
            # resolves the name and validates the value
            parse_config(with_override(self.base, name, values[0]))

    @classmethod
    def from_config(cls, cfg: RunConfig, workers: int = 1) -> "SweepSpec":
        axes = []
        for i, ax in enumerate(cfg.raw["sweep"]["axes"]):
            if not isinstance(ax, dict) or set(ax) != {"name", "values"}:
                raise ConfigError(f"'sweep.axes[{i}]' needs exactly 'name' and 'values'")
            axes.append((ax["name"], ax["values"]))
        return cls(cfg.raw, tuple(axes), workers)

    def points(self) -> list[dict]:
        names = [n for n, _ in self.axes]
        return [dict(zip(names, combo))
                for combo in itertools.product(*(v for _, v in self.axes))]


@dataclass
class SweepResult:
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def write(self, path) -> None:
        write_csv(path, self.columns, self.rows, self.provenance)


def _run_point(args):
    raw, overrides, seed = args
    raw = copy.deepcopy(raw)
    t0 = time.perf_counter()
    try:
        for name, value in overrides.items():
            raw = with_override(raw, name, value)
        raw["optimizer"]["seed"] = seed
        cfg = parse_config(raw)
        res = optimize(build_operators(cfg.model), cfg.optimization, cfg.ramp)
        return res.final_error, res.n_iterations, res.wall_time, res.status
    except Exception as exc:  # recorded in the row, the sweep goes on
        log.warning("point %s failed: %s", overrides, exc)
        return math.nan, 0, time.perf_counter() - t0, f"failed: {exc}"


def _run_points(base: dict, points: Sequence[dict], seed: int, workers: int):
    jobs = [(base, p, derive_seed(seed, i)) for i, p in enumerate(points)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_point, jobs, chunksize=1))
    else:
        outcomes = [_run_point(j) for j in jobs]
    return [(j[2],) + o for j, o in zip(jobs, outcomes)]


_RESULT_COLUMNS = ["final_error", "iterations", "wall_time_s", "seed", "status"]


def _assemble(names, points, outcomes, raw):
    rows = []
    for p, (seed, err, nit, wall, status) in zip(points, outcomes):
        rows.append([p[n] for n in names] + [err, nit, wall, seed, status])
    return SweepResult(list(names) + _RESULT_COLUMNS, rows, _provenance(raw))


def run_sweep(spec: SweepSpec, out: Optional[str] = None) -> SweepResult:
    """One multi-start optimization per grid point; ``sweep.csv`` in ``out``."""
    names = [n for n, _ in spec.axes]
    points = spec.points()
    seed = int(spec.base["optimizer"]["seed"])
    outcomes = _run_points(spec.base, points, seed, spec.workers)
    result = _assemble(names, points, outcomes, spec.base)
    if _mkdir(out):
        result.write(os.path.join(out, "sweep.csv"))
    return result


def run_table1(cfg: RunConfig, out: Optional[str] = None, workers: int = 1) -> SweepResult:
    """Second TLS placed ``delta2`` below the first, for every combination of
    the configured offsets, couplings and lifetimes; ``table1.csv`` in ``out``."""
    t = cfg.raw["table1"]
    tls1 = cfg.raw["model"]["tls"]
    if not tls1:
        raise ConfigError("table1 needs a first TLS in 'model.tls'")
    d1 = tls1[0]["detuning_mhz"]
    base = cfg.raw
    if len(tls1) > 1:
        base = dict(base, model=dict(base["model"], tls=tls1[:1]))
    points, labels = [], []
    for d2, s2, t12 in itertools.product(t["detunings_mhz"], t["couplings_mhz"], t["t1s_ns"]):
        points.append({"tls2_detuning_mhz": d1 + d2, "tls2_coupling_mhz": s2,
                       "tls2_t1_ns": t12})
        labels.append({"delta2_mhz": d2, "coupling2_mhz": s2, "t1_2_ns": t12})
    outcomes = _run_points(base, points, int(cfg.raw["optimizer"]["seed"]), workers)
    result = _assemble(["delta2_mhz", "coupling2_mhz", "t1_2_ns"], labels, outcomes, cfg.raw)
    if _mkdir(out):
        result.write(os.path.join(out, "table1.csv"))
    return result


def run_random_targets(cfg: RunConfig, n: Optional[int] = None, out: Optional[str] = None,
                       workers: int = 1, reference: bool = True):
    """Optimize ``n`` random diagonal targets (target ``i`` drawn from
    ``SeedSequence([seed, i])``) and, with ``reference``, U1 for comparison.

    Returns the per-target result and a summary with min/max/median error,
    max/min spread and the ratio of the largest error to the U1 error.
    """
    n = int(cfg.raw["random_targets"]["n"] if n is None else n)
    if n < 1:
        raise ConfigError(f"random_targets.n must be >= 1, got {n}")
    seed = int(cfg.raw["optimizer"]["seed"])
    phases = []
    for i in range(n):
        U = random_diagonal_target(np.random.SeedSequence([seed, i]), cfg.model.n_levels)
        phases.append(np.angle(np.diag(U)))
    points = [{"target": "phases", "target_phases_rad": [float(x) for x in p]} for p in phases]
    if reference:
        points.append({"target": "U1"})
    outcomes = _run_points(cfg.raw, points, seed, workers)
    cols = ["index"] + [f"phase{k}_rad" for k in range(cfg.model.n_levels)] + _RESULT_COLUMNS
    rows = []
    for i, (p, (s, err, nit, wall, status)) in enumerate(zip(phases, outcomes)):
        rows.append([i] + list(p) + [err, nit, wall, s, status])
    result = SweepResult(cols, rows, _provenance(cfg.raw))
    errs = result.column("final_error").astype(float)
    summary = {
        "config_hash": cfg.hash,
        "n_targets": n,
        "min_error": float(np.min(errs)),
        "max_error": float(np.max(errs)),
        "median_error": float(np.median(errs)),
        "spread_max_over_min": float(np.max(errs) / np.min(errs)),
    }
    if reference:
        u1 = outcomes[-1]
        summary["u1_error"] = u1[1]
        summary["max_over_u1"] = float(np.max(errs) / u1[1])
    if _mkdir(out):
        result.write(os.path.join(out, "random_targets.csv"))
        write_summary(os.path.join(out, "random_targets_summary.toml"), summary)
    return result, summary


# -- diagnostics -----------------------------------------------------------------


def read_pulse_csv(path, cfg: RunConfig) -> PiecewiseControl:
    """Control from a ``t_ns, delta_mhz`` file written by ``run_optimize``."""
    header, rows = read_csv(path)
    if header[:2] != ["t_ns", "delta_mhz"]:
        raise ConfigError(f"{path}: expected columns t_ns, delta_mhz, got {header}")
    data = np.array([[float(x) for x in r[:2]] for r in rows])
    if data.shape[0] < 1:
        raise ConfigError(f"{path}: no rows")
    conv = cfg.model.frequency_convention
    values = mhz_to_angular(data[:, 1], conv)
    if data.shape[0] > 1:
        total = float(data.shape[0] * (data[1, 0] - data[0, 0]))
    else:
        total = cfg.optimization.total_time
    return PiecewiseControl(total, values)


def _control_for(cfg: RunConfig, pulse: Optional[str]) -> PiecewiseControl:
    if pulse:
        return read_pulse_csv(pulse, cfg)
    sim = cfg.raw["simulate"]
    value = mhz_to_angular(float(sim["constant_delta_mhz"]), cfg.model.frequency_convention)
    return PiecewiseControl.constant(cfg.optimization.total_time, cfg.optimization.n_slices,
                                     value)


def run_nonmarkov(cfg: RunConfig, pulse: Optional[str] = None, out: Optional[str] = None,
                  workers: int = 1) -> DeterminantTrace:
    """Determinant trace for a stored pulse, or for a fresh optimization when
    no pulse is given; ``determinant.csv`` in ``out``."""
    ops = build_operators(cfg.model)
    if pulse:
        control = read_pulse_csv(pulse, cfg)
    else:
        control = optimize(ops, cfg.optimization, cfg.ramp, workers=workers).best_control
    trace = determinant_trace(ops, control, int(cfg.raw["nonmarkov"]["n_samples"]))
    if _mkdir(out):
        write_determinant_csv(os.path.join(out, "determinant.csv"), trace,
                              _provenance(cfg.raw))
    return trace


def run_simulate(cfg: RunConfig, pulse: Optional[str] = None, out: Optional[str] = None):
    """Reduced qudit state over time from ``|initial_level>`` with every TLS in
    its ground state. Writes ``populations.csv`` and the final ``channel.txt``.

    Returns ``(times, states, final_channel, gate_error)``; ``gate_error``
    is measured against the configured target in the configured frame.
    """
    sim = cfg.raw["simulate"]
    ops = build_operators(cfg.model)
    control = _control_for(cfg, pulse)
    n = cfg.model.n_levels
    level = int(sim["initial_level"])
    if not 0 <= level < n:
        raise ConfigError(f"'simulate.initial_level' must be in [0, {n - 1}], got {level}")
    n_samples = int(sim["n_samples"])
    if n_samples < 2:
        raise ConfigError(f"'simulate.n_samples' must be >= 2, got {n_samples}")
    times = np.linspace(0.0, control.total_time, n_samples)
    channels = block_system(ops).channels_at(control.values, control.dt, times)
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[level, level] = 1.0
    states = [ch.apply(rho0) for ch in channels]
    final: Channel = channels[-1]
    target = frame_target(ops, cfg.optimization.target, control.total_time,
                          cfg.optimization.frame)
    gate_error = 1.0 - average_fidelity(final, target)
    if _mkdir(out):
        prov = _provenance(cfg.raw)
        write_population_csv(os.path.join(out, "populations.csv"), times, states, prov)
        save_superoperator(os.path.join(out, "channel.txt"), final, prov)
    return times, states, final, gate_error
