"""Command line entry point: ``nmcontrol <subcommand> [options]``.

Exit status is 0 on success and 2 when the configuration or an input file
fails validation.
"""
from __future__ import annotations

import functools
import logging
import os
import sys

import click
import numpy as np

from .cartan import CartanError, kak_decompose
from .config import ConfigError, load_config
from .io import MatrixFormatError, read_matrix, write_matrix
from .model import ModelError

_VALIDATION_ERRORS = (ConfigError, ModelError, CartanError, MatrixFormatError)


def _common(f):
    f = click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory for CSV and summary files.")(f)
    f = click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Parallel workers (starts or grid points).")(f)
    f = click.option("--seed", type=int, default=None,
                     help="Overrides optimizer.seed from the config.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     default=None, help="TOML configuration file.")(f)

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _load(config_path, seed):
    overrides = {} if seed is None else {"seed": seed}
    return load_config(config_path, overrides)


def _fmt(x) -> str:
    return f"{x:.6e}" if isinstance(x, float) else str(x)


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
@click.version_option(package_name="artifact", message="%(version)s")
def main(verbose):
    """Optimal control of a qudit coupled to two-level defects."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
def optimize(config_path, seed, workers, out):
    """Optimize the configured target and export pulse, history and determinant."""
    from .harness import run_optimize

    cfg = _load(config_path, seed)
    res, trace, summary = run_optimize(cfg, out, workers)
    for key in ("config_hash", "final_error", "n_iterations", "status", "wall_time_s",
                "beats_no_tls_bound", "nonmarkovian_intervals"):
        click.echo(f"{key} = {_fmt(summary[key])}")


@main.command()
@_common
def sweep(config_path, seed, workers, out):
    """Grid of optimizations over the axes in [[sweep.axes]]."""
    from .harness import SweepSpec, run_sweep

    cfg = _load(config_path, seed)
    spec = SweepSpec.from_config(cfg, workers)
    if not spec.axes:
        raise ConfigError("no [[sweep.axes]] in the configuration")
    _echo_table(run_sweep(spec, out))


@main.command()
@_common
def table1(config_path, seed, workers, out):
    """Errors with a second TLS for every offset/coupling/lifetime combination."""
    from .harness import run_table1

    _echo_table(run_table1(_load(config_path, seed), out, workers))


@main.command("random-targets")
@_common
@click.option("-n", "n_targets", type=click.IntRange(min=1), default=None,
              help="Number of targets (default random_targets.n).")
def random_targets(config_path, seed, workers, out, n_targets):
    """Optimize random diagonal targets and compare with U1."""
    from .harness import run_random_targets

    result, summary = run_random_targets(_load(config_path, seed), n_targets, out, workers)
    _echo_table(result)
    for k, v in summary.items():
        click.echo(f"{k} = {_fmt(v)}")


@main.command()
@_common
@click.option("--pulse", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pulse CSV (t_ns, delta_mhz); optimizes first when omitted.")
def nonmarkov(config_path, seed, workers, out, pulse):
    """Determinant of the reduced dynamical map over time."""
    from .harness import run_nonmarkov

    trace = run_nonmarkov(_load(config_path, seed), pulse, out, workers)
    click.echo(f"markovian = {'true' if not trace.nonmarkovian_intervals else 'false'}")
    click.echo(f"final_det_abs = {trace.det_abs[-1]:.6e}")
    click.echo("t_start_ns,t_end_ns,det_increase")
    for a, b in trace.nonmarkovian_intervals:
        ia = int(np.searchsorted(trace.times, a))
        ib = int(np.searchsorted(trace.times, b))
        click.echo(f"{a:.4f},{b:.4f},{trace.det_abs[ib] - trace.det_abs[ia]:.6e}")


@main.command()
@_common
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False))
def cartan(config_path, seed, workers, out, matrix):
    """Factor the unitary in MATRIX (rows of 're im' pairs) as k1 A k2."""
    U = read_matrix(matrix)
    dec = kak_decompose(U, seed=0 if seed is None else seed)
    with np.printoptions(precision=12, suppress=True, linewidth=120):
        click.echo(f"k1 =\n{dec.k1}")
        click.echo(f"a_phases = {dec.a_phases}")
        click.echo(f"k2 =\n{dec.k2}")
    click.echo(f"global_phase = {dec.global_phase:.12f}")
    click.echo(f"residual = {dec.residual:.3e}")
    if out:
        os.makedirs(out, exist_ok=True)
        write_matrix(os.path.join(out, "k1.txt"), dec.k1)
        write_matrix(os.path.join(out, "k2.txt"), dec.k2)
        write_matrix(os.path.join(out, "a_phases.txt"), dec.a_phases[None, :])


@main.command("lie-rank")
@_common
@click.option("--tol", type=float, default=1e-8, show_default=True)
def lie_rank(config_path, seed, workers, out, tol):
    """Dimension of the dynamic Lie algebra and the reachable qudit diagonals."""
    from .liealg import LieError, control_ideal, diagonal_projection_rank, lie_closure
    from .model import build_operators

    cfg = _load(config_path, seed)
    ops = build_operators(cfg.model)
    full = lie_closure([ops.drift, ops.control_generator], tol)
    ideal = control_ideal(ops.drift, ops.control_generator, tol)
    rank = diagonal_projection_rank(ideal, ops.n_levels, ops.env_dim, tol)
    click.echo(f"dimension = {full.dimension}")
    click.echo(f"truncated = {'true' if full.truncated else 'false'}")
    click.echo(f"control_ideal_dimension = {ideal.dimension}")
    if ideal.truncated and rank < ops.n_levels - 1:
        click.echo(str(LieError("diagonal reachability indeterminate (truncated)")))
        click.echo("diagonal_reachability = indeterminate")
    else:
        click.echo(f"diagonal_reachability = {rank}")
    click.echo(f"full_diagonal_control = {'true' if rank == ops.n_levels - 1 else 'false'}")


@main.command()
@_common
@click.option("--pulse", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pulse CSV (t_ns, delta_mhz); constant simulate.constant_delta_mhz "
                   "when omitted.")
def simulate(config_path, seed, workers, out, pulse):
    """Populations and coherences of the qudit under a given control."""
    from .harness import run_simulate

    times, states, final, err = run_simulate(_load(config_path, seed), pulse, out)
    pops = np.real(np.diag(states[-1]))
    click.echo(f"final_populations = {', '.join(f'{p:.6f}' for p in pops)}")
    click.echo(f"gate_error = {err:.6e}")


def _echo_table(result):
    click.echo(",".join(result.columns))
    for row in result.rows:
        click.echo(",".join(_fmt(x) for x in row))


if __name__ == "__main__":
    main()
