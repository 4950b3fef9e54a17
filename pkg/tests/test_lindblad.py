import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmcontrol import PiecewiseControl, build_operators, reference_model
from nmcontrol.lindblad import (Channel, PropagationError, Superoperator, average_fidelity,
                                depolarizing_channel, evolve_state, liouvillian,
                                partial_trace_env, process_fidelity, propagate_slice,
                                propagator, reduced_channel, unitary_channel, unvec, vec)
from nmcontrol.model import ModelSpec, QuditSpec, TlsSpec

U1 = np.diag([1, -1, 1, 1]).astype(complex)
SM = np.array([[0, 1], [0, 0]], dtype=complex)   # |0><1|


def _random_rho(d, rng):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def test_vec_is_column_stacking():
    A = np.arange(4).reshape(2, 2)
    np.testing.assert_array_equal(vec(A), [0, 2, 1, 3])
    np.testing.assert_array_equal(unvec(vec(A)), A)


def test_liouvillian_zero():
    assert np.abs(liouvillian(np.zeros((3, 3))).data).max() == 0


def test_liouvillian_matches_commutator_and_dissipator(rng):
    d = 3
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = H + H.conj().T
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = _random_rho(d, rng)
    direct = (-1j * (H @ rho - rho @ H) + A @ rho @ A.conj().T
              - 0.5 * (A.conj().T @ A @ rho + rho @ A.conj().T @ A))
    np.testing.assert_allclose(liouvillian(H, [A]).apply(rho), direct, atol=1e-12)


def test_liouvillian_trace_vector_fixed(rng):
    d = 4
    H = rng.normal(size=(d, d))
    H = H + H.T
    ops = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3)]
    L = liouvillian(H, ops)
    assert np.linalg.norm(vec(np.eye(d)).conj() @ L.data) <= 1e-12 * max(1, np.abs(L.data).max())


def test_liouvillian_dimension_mismatch():
    with pytest.raises(PropagationError):
        liouvillian(np.zeros((2, 2)), [np.zeros((3, 3))])


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_amplitude_damping_closed_form(t):
    gamma = 0.8
    rho0 = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
    G = propagate_slice(liouvillian(np.zeros((2, 2)), [math.sqrt(gamma) * SM]), t)
    rho = G.apply(rho0)
    assert rho[1, 1] == pytest.approx(0.7 * math.exp(-gamma * t), abs=1e-13)
    assert rho[0, 1] == pytest.approx((0.2 - 0.1j) * math.exp(-gamma * t / 2), abs=1e-13)


def test_propagate_slice_basics():
    assert np.allclose(propagate_slice(np.zeros((4, 4)), 1.0).data, np.eye(4))
    L = np.diag([-1.0, -0.5 + 2j, 0.3, 0])
    np.testing.assert_allclose(propagate_slice(L, 0.7).data, np.diag(np.exp(np.diag(L) * 0.7)),
                               atol=1e-14)
    with pytest.raises(PropagationError):
        propagate_slice(L, 0.0)
    with pytest.raises(PropagationError):
        propagate_slice(np.full((2, 2), np.nan), 1.0)


def test_propagate_slice_squaring_oracle(rng):
    """64x64 generator with ||L dt|| ~ 5 against Taylor + 10 squarings."""
    L = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    dt = 5.0 / np.linalg.norm(L, 2)
    small = L * dt / 2**10
    E = np.eye(64, dtype=complex)
    term = np.eye(64, dtype=complex)
    for k in range(1, 25):
        term = term @ small / k
        E = E + term
    for _ in range(10):
        E = E @ E
    assert np.linalg.norm(propagate_slice(L, dt).data - E, 2) <= 1e-9


def test_propagator_tiny_time_is_identity(ref_ops):
    G = propagator(ref_ops, PiecewiseControl(1e-9, [0.3]))
    assert np.abs(G.data - np.eye(G.data.shape[0])).max() < 1e-7


def test_unitary_propagator_has_unit_determinant():
    ops = build_operators(ModelSpec(QuditSpec(4, 0.25)))
    G = propagator(ops, PiecewiseControl.constant(10.0, 4, 0.7))
    assert abs(abs(np.linalg.det(G.data)) - 1) < 1e-10


def test_qubit_decay_for_one_lifetime():
    t1 = 250.0
    ops = build_operators(ModelSpec(QuditSpec(2, 0.0, t1=t1)))
    rho = evolve_state(ops, PiecewiseControl.constant(t1, 5, 0.0), np.diag([0, 1.0]), [t1])[0]
    assert rho[1, 1].real == pytest.approx(math.exp(-1), abs=1e-12)


def test_reduced_channel_at_zero_is_identity(ref_ops):
    ch = reduced_channel(ref_ops, PiecewiseControl.constant(40.0, 10, 0.5), 0.0)
    np.testing.assert_allclose(ch.data, np.eye(16), atol=1e-14)


def test_reduced_channel_unitary_case():
    beta, delta, t = 0.25, 0.6, 3.0
    ops = build_operators(ModelSpec(QuditSpec(4, beta)))
    ch = reduced_channel(ops, PiecewiseControl.constant(t, 3, delta))
    n = np.arange(4)
    V = np.diag(np.exp(-1j * (beta * n * (n + 1) / 2 + delta * n) * t))
    np.testing.assert_allclose(ch.data, np.kron(V.conj(), V), atol=1e-12)


def test_decoupled_tls_gives_qudit_only_channel():
    control = PiecewiseControl(12.0, np.linspace(-0.5, 0.8, 6))
    with_tls = build_operators(ModelSpec(QuditSpec(4, 0.2, t1=30.0), (TlsSpec(1.0, 0.0, 5.0),)))
    alone = build_operators(ModelSpec(QuditSpec(4, 0.2, t1=30.0)))
    np.testing.assert_allclose(reduced_channel(with_tls, control).data,
                               reduced_channel(alone, control).data, atol=1e-12)


def test_reduced_channel_matches_basis_state_propagation(ref_ops, rng):
    control = PiecewiseControl(8.0, rng.normal(size=8) * 0.5)
    ch = reduced_channel(ref_ops, control)
    g = np.zeros((2, 2))
    g[0, 0] = 1.0
    for k in range(4):
        for l in range(4):
            E = np.zeros((4, 4))
            E[k, l] = 1.0
            rho = evolve_state(ref_ops, control, np.kron(E, g), [8.0])[0]
            np.testing.assert_allclose(ch.apply(E), partial_trace_env(rho, ref_ops), atol=1e-10)


def test_channel_is_cptp(ref_ops, rng):
    ch = reduced_channel(ref_ops, PiecewiseControl(20.0, rng.normal(size=20)))
    assert ch.trace_defect() < 1e-9
    assert ch.is_completely_positive(1e-7)


def test_trajectory_stays_physical(ref_ops, rng):
    control = PiecewiseControl(20.0, rng.normal(size=10))
    rho0 = _random_rho(8, rng)
    for rho in evolve_state(ref_ops, control, rho0, np.linspace(0, 20, 7)):
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.linalg.norm(rho - rho.conj().T) < 1e-10
        assert np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() > -1e-8


def test_dissipation_free_determinant_and_trace():
    ops = build_operators(reference_model(qudit_t1=math.inf, tls_t1=math.inf))
    control = PiecewiseControl(10.0, np.linspace(-1, 1, 10))
    G = propagator(ops, control)
    assert abs(abs(np.linalg.det(G.data)) - 1) < 1e-8
    assert G.trace_defect() < 1e-10
    assert reduced_channel(ops, control).trace_defect() < 1e-10


def test_time_outside_interval(ref_ops):
    with pytest.raises(PropagationError):
        reduced_channel(ref_ops, PiecewiseControl(5.0, [0.0]), 6.0)


def test_fidelity_examples():
    assert average_fidelity(unitary_channel(U1), U1) == pytest.approx(1.0)
    assert process_fidelity(np.eye(16), U1) == pytest.approx(0.25)
    assert average_fidelity(np.eye(16), U1) == pytest.approx(0.4)
    dep = depolarizing_channel(4)
    assert process_fidelity(dep, U1) == pytest.approx(1 / 16)
    assert average_fidelity(dep, U1) == pytest.approx(0.25)


def test_depolarizing_fidelity_by_definition(rng):
    """Sum the overlap definition over the matrix units directly."""
    U = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    dep = depolarizing_channel(4)
    total = 0.0
    for k in range(4):
        for l in range(4):
            E = np.zeros((4, 4))
            E[k, l] = 1
            total += np.real(np.vdot(vec(U @ E @ U.conj().T), vec(dep.apply(E))))
    assert process_fidelity(dep, U) == pytest.approx(total / 16)


@given(phase=st.floats(-math.pi, math.pi))
def test_fidelity_global_phase_invariant(phase):
    ch = unitary_channel(np.diag(np.exp(1j * np.array([0.1, 0.5, -1.0, 2.0]))))
    U = np.diag(np.exp(1j * np.array([0.2, 0.3, -1.1, 2.2])))
    assert average_fidelity(ch, U) == pytest.approx(average_fidelity(ch, np.exp(1j * phase) * U),
                                                    abs=1e-12)


def test_fidelity_rejects_non_unitary():
    with pytest.raises(PropagationError):
        average_fidelity(np.eye(16), np.diag([1, 1, 1, 2]))


def test_partial_trace_examples():
    rng = np.random.default_rng(0)
    rq, rp = _random_rho(4, rng), _random_rho(2, rng)
    model = reference_model()
    np.testing.assert_allclose(partial_trace_env(np.kron(rq, rp), model), rq, atol=1e-14)
    psi = np.zeros(8)
    psi[0 * 2 + 1] = psi[1 * 2 + 0] = 1 / math.sqrt(2)   # (|0,e> + |1,g>)/sqrt2
    np.testing.assert_allclose(partial_trace_env(np.outer(psi, psi), model),
                               np.diag([0.5, 0.5, 0, 0]), atol=1e-15)
    with pytest.raises(PropagationError):
        partial_trace_env(np.eye(4), model)


def test_entangled_qubit_pair_reduces_to_mixed():
    model = ModelSpec(QuditSpec(2), (TlsSpec(0.0, 0.1),))
    psi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    np.testing.assert_allclose(partial_trace_env(np.outer(psi, psi), model), np.eye(2) / 2)


def test_superoperator_composition():
    A = Superoperator(np.diag([1.0, 2, 3, 4]))
    B = Superoperator(np.full((4, 4), 0.5))
    assert np.allclose((A @ B).data, A.data @ B.data)
    assert isinstance(Channel(np.eye(4)).choi(), np.ndarray)


def test_slice_count_convergence(ref_ops):
    """Halving dt at the default 0.1 ns changes the error by < 1e-6 for a
    smooth control."""
    from nmcontrol.grape import objective

    def sampled(n):
        t = (np.arange(n) + 0.5) / n
        return PiecewiseControl(40.0, -2.0 + 0.8 * np.sin(2 * np.pi * 2 * t))

    e1 = objective(ref_ops, sampled(400), U1)
    e2 = objective(ref_ops, sampled(800), U1)
    assert abs(e1 - e2) < 1e-6
