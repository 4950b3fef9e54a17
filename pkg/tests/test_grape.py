import math

import numpy as np
import pytest

from nmcontrol import PiecewiseControl, RampSpec, apply_constraints, build_operators
from nmcontrol import reference_model
from nmcontrol.controls import free_bounds, ramp_slices
from nmcontrol.grape import (U1, OptimizationConfig, gradient, initial_guess, objective,
                             optimize, random_diagonal_target)
from nmcontrol.lindblad import frame_target
from nmcontrol.model import ModelSpec, QuditSpec

IDLE = build_operators(ModelSpec(QuditSpec(4, 0.0)))


def _fd(ops, control, target, j, h=1e-6, frame="qudit"):
    """Central difference along free slice j, ramp re-applied."""
    ramp = control.ramp
    out = []
    for s in (h, -h):
        v = control.values.copy()
        v[j] += s
        c = PiecewiseControl(control.total_time, v, ramp)
        if ramp is not None:
            c = apply_constraints(c, ramp, delta_max=1e9)
        out.append(objective(ops, c, target, frame))
    return (out[0] - out[1]) / (2 * h)


def _random_ramped(ops, rng, n=400, T=40.0):
    ramp = RampSpec()
    x = initial_guess(ops, n - 2 * ramp_slices(n, T / n, ramp), T / n, rng)
    # strictly inside the bounds so the difference quotient is two-sided
    b = 0.9 * free_bounds(x.size, 1e9, ramp)
    free = np.clip(x, -b, b)
    vals = np.zeros(n)
    n_r = ramp_slices(n, T / n, ramp)
    vals[n_r:n - n_r] = free
    return apply_constraints(PiecewiseControl(T, vals, ramp), ramp, delta_max=1e9)


def test_objective_trivial_identity():
    assert objective(IDLE, PiecewiseControl.zeros(10.0, 5), np.eye(4)) == pytest.approx(0, abs=1e-14)


def test_objective_identity_channel_vs_u1():
    assert objective(IDLE, PiecewiseControl.zeros(10.0, 5), U1) == pytest.approx(0.6)


def test_gradient_vanishes_at_stationary_point():
    g = gradient(IDLE, PiecewiseControl.zeros(10.0, 20), np.eye(4))
    assert np.abs(g).max() < 1e-12


@pytest.mark.parametrize("frame", ["qudit", "rotating"])
def test_gradient_matches_finite_difference(ref_ops, rng, frame):
    control = _random_ramped(ref_ops, rng)
    g = gradient(ref_ops, control, U1, frame)
    n_r = ramp_slices(400, 0.1, control.ramp)
    for j in [n_r, n_r + 1, 57, 200, 311, 400 - n_r - 1]:
        fd = _fd(ref_ops, control, U1, j, frame=frame)
        assert abs(g[j] - fd) <= 1e-5 * abs(fd) + 1e-10, (j, g[j], fd)


def test_gradient_without_ramp(two_tls_ops, rng):
    control = PiecewiseControl(10.0, rng.normal(size=40))
    target = random_diagonal_target(3)
    g = gradient(two_tls_ops, control, target)
    for j in (0, 17, 39):
        assert g[j] == pytest.approx(_fd(two_tls_ops, control, target, j), rel=1e-5, abs=1e-10)


def test_ramp_locked_components_are_zero(ref_ops, rng):
    control = _random_ramped(ref_ops, rng)
    g = gradient(ref_ops, control, U1)
    n_r = ramp_slices(400, 0.1, control.ramp)
    assert not g[:n_r].any() and not g[-n_r:].any()
    assert np.abs(g[n_r:-n_r]).max() > 0


def test_random_diagonal_target():
    A, B = random_diagonal_target(5), random_diagonal_target(5)
    np.testing.assert_array_equal(A, B)
    assert np.allclose(A.conj().T @ A, np.eye(4))
    assert np.abs(A - np.diag(np.diag(A))).max() == 0
    assert not np.allclose(A, random_diagonal_target(6))
    assert random_diagonal_target(1, n=3).shape == (3, 3)


def test_frame_target():
    U = frame_target(IDLE, U1, 40.0)
    np.testing.assert_allclose(U, U1)
    ops = build_operators(reference_model())
    ph = np.angle(np.diag(frame_target(ops, np.eye(4), 10.0)))
    beta = 2 * math.pi * 0.040
    np.testing.assert_allclose(np.exp(1j * ph), np.exp(-1j * beta * np.array([0, 1, 3, 6]) * 10))
    np.testing.assert_allclose(frame_target(ops, U1, 10.0, "rotating"), U1)


@pytest.mark.parametrize("kwargs", [
    dict(target=np.ones((4, 4)) / 2),
    dict(target=np.diag([1, 1, 1, 2])),
    dict(target=np.array([[0, 1], [1, 0]])),
    dict(delta_max=0.0),
    dict(optimizer="adam"),
    dict(frame="lab"),
    dict(n_starts=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizationConfig(**kwargs)


def test_nondiagonal_target_allowed_on_request():
    cfg = OptimizationConfig(target=np.array([[0, 1], [1, 0]]), allow_nondiagonal=True)
    assert cfg.target.shape == (2, 2)


def test_identity_needs_no_iterations():
    res = optimize(IDLE, OptimizationConfig(target=np.eye(4)), ramp=None)
    assert res.final_error <= 1e-12 and res.n_iterations == 0 and res.converged


@pytest.fixture(scope="module")
def short_run(ref_ops):
    cfg = OptimizationConfig(n_slices=200, n_starts=2, max_iterations=25, seed=4)
    return cfg, optimize(ref_ops, cfg)


def test_history_monotone_and_final_is_min(short_run):
    _, res = short_run
    h = res.error_history
    assert np.all(np.diff(h) <= 1e-15)
    assert res.final_error == pytest.approx(h.min())
    assert res.final_error == min(res.start_errors)
    assert res.final_error < h[0]


def test_result_satisfies_constraints(short_run):
    cfg, res = short_run
    c = res.best_control
    again = apply_constraints(c, RampSpec(), cfg.delta_max)
    np.testing.assert_allclose(again.values, c.values, atol=1e-12)
    assert np.abs(c.values).max() <= cfg.delta_max


def test_deterministic_and_worker_independent(ref_ops, short_run):
    cfg, res = short_run
    again = optimize(ref_ops, cfg, workers=2)
    np.testing.assert_array_equal(again.best_control.values, res.best_control.values)
    np.testing.assert_array_equal(again.error_history, res.error_history)


def test_gradient_descent_backtracking(ref_ops):
    cfg = OptimizationConfig(n_slices=200, n_starts=1, max_iterations=8,
                             optimizer="gradient_descent_backtracking")
    res = optimize(ref_ops, cfg)
    assert np.all(np.diff(res.error_history) <= 0)
    assert res.final_error < res.error_history[0]


def test_uncoupled_tls_cannot_reach_u1():
    ops = build_operators(reference_model(coupling_mhz=0.0))
    res = optimize(ops, OptimizationConfig(n_slices=200, n_starts=3, max_iterations=30))
    assert res.final_error >= 0.40
