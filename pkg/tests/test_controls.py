import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmcontrol import PiecewiseControl, RampSpec, apply_constraints, mhz_to_angular
from nmcontrol.controls import (ConstraintError, free_bounds, free_to_full,
                                full_to_free_gradient, ramp_slices)

RAMP = RampSpec()


def test_constant_interior_gets_linear_ramps():
    c = mhz_to_angular(300.0)
    ctrl = apply_constraints(PiecewiseControl.constant(40.0, 400, c), RAMP)
    v = ctrl.values
    n_r = 25
    np.testing.assert_allclose(v[n_r:-n_r], c)
    np.testing.assert_allclose(v[:n_r], c * (np.arange(n_r) + 0.5) / n_r)
    np.testing.assert_allclose(v[-n_r:], v[:n_r][::-1])
    # rises monotonically from (near) zero to c
    assert np.all(np.diff(v[:n_r]) > 0) and v[0] < c / 20


def test_zero_control_unchanged():
    ctrl = apply_constraints(PiecewiseControl.zeros(40.0, 400), RAMP)
    assert not ctrl.values.any()


def test_interior_clipped():
    dmax = mhz_to_angular(1000.0)
    vals = np.zeros(400)
    vals[200] = 3 * dmax
    vals[201] = -3 * dmax
    ctrl = apply_constraints(PiecewiseControl(40.0, vals), RAMP, dmax)
    assert ctrl.values[200] == dmax and ctrl.values[201] == -dmax


def test_edge_value_capped_by_ramp_rate():
    ctrl = apply_constraints(PiecewiseControl.constant(40.0, 400, mhz_to_angular(900.0)), RAMP)
    assert ctrl.values[25] == pytest.approx(RAMP.max_edge_value)
    assert RAMP.max_edge_value == pytest.approx(mhz_to_angular(500.0))


def test_ramp_too_long():
    with pytest.raises(ConstraintError):
        ramp_slices(40, 0.1, RampSpec(ramp_time=2.0))
    with pytest.raises(ConstraintError):
        apply_constraints(PiecewiseControl.zeros(4.0, 40), RampSpec(ramp_time=2.5))


def test_control_validation():
    with pytest.raises(ConstraintError):
        PiecewiseControl(10.0, [])
    with pytest.raises(ConstraintError):
        PiecewiseControl(-1.0, [0.0])
    with pytest.raises(ConstraintError):
        PiecewiseControl(1.0, [np.nan])


def test_control_grid():
    c = PiecewiseControl(2.0, [1.0, 2.0, 3.0, 4.0])
    assert c.dt == 0.5 and c.n_slices == 4
    np.testing.assert_allclose(c.times, [0, 0.5, 1.0, 1.5, 2.0])
    r = c.refined(2)
    assert r.n_slices == 8 and r.values[1] == 1.0


@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12),
       st.lists(st.floats(-5, 5), min_size=20, max_size=20), st.booleans())
def test_gradient_pullback_is_transpose(free, g_full, endpoints_zero):
    """full_to_free_gradient applies the transpose of the (linear) expansion."""
    ramp = RampSpec(ramp_time=0.4, endpoints_zero=endpoints_zero)
    n, dt = 20, 0.1
    J = np.column_stack([free_to_full(e, n, dt, ramp) for e in np.eye(12)])
    np.testing.assert_allclose(free_to_full(np.array(free), n, dt, ramp), J @ free, atol=1e-12)
    np.testing.assert_allclose(full_to_free_gradient(np.array(g_full), dt, ramp),
                               J.T @ g_full, atol=1e-10)


def test_free_bounds():
    b = free_bounds(10, 10.0, RAMP)
    assert b[0] == b[-1] == pytest.approx(RAMP.max_edge_value) and b[1] == 10.0
    assert np.all(free_bounds(5, 1.0, None) == 1.0)


def test_no_ramp_is_identity_map():
    x = np.arange(5.0)
    np.testing.assert_array_equal(free_to_full(x, 5, 1.0, None), x)
    with pytest.raises(ConstraintError):
        free_to_full(x, 6, 1.0, None)
