import numpy as np
import pytest

from nmcontrol import PiecewiseControl, build_operators, reference_model
from nmcontrol.blocks import BlockSystem
from nmcontrol.lindblad import process_fidelity, reduced_channel
from nmcontrol.model import ModelSpec, QuditSpec, TlsSpec


def _count_block_sizes(n, n_tls):
    """Pairs (a, b) with exc(a), exc(b) <= n-1 grouped by exc(a) - exc(b)."""
    from nmcontrol.model import excitation_numbers

    exc = excitation_numbers(n, n_tls)
    exc = exc[exc <= n - 1]
    diff = exc[:, None] - exc[None, :]
    return [int(np.sum(diff == m)) for m in range(n)]


@pytest.mark.parametrize("n_tls, sizes", [(1, [13, 10, 6, 2]), (2, [42, 31, 16, 4])])
def test_block_sizes(n_tls, sizes):
    model = reference_model(extra_tls=[(1000.0, 40.0, 200.0)] * (n_tls - 1))
    bs = BlockSystem(build_operators(model))
    assert [b.size for b in bs.blocks] == sizes == _count_block_sizes(4, n_tls)


MODELS = [
    reference_model(),
    reference_model(extra_tls=[(600.0, 40.0, 40.0)]),
    ModelSpec(QuditSpec(3, 0.3, t1=50.0, t2_star=80.0), (TlsSpec(0.9, 0.4, 20.0, 30.0),)),
    ModelSpec(QuditSpec(4, 0.25, t1=100.0)),
]


@pytest.mark.parametrize("model", MODELS)
def test_block_channel_matches_dense(model, rng):
    ops = build_operators(model)
    control = PiecewiseControl(6.0, rng.normal(size=12))
    dense = reduced_channel(ops, control)
    block = BlockSystem(ops).channel(control.values, control.dt)
    np.testing.assert_allclose(block.data, dense.data, atol=1e-11)


def test_channels_at_matches_dense(ref_ops, rng):
    control = PiecewiseControl(5.0, rng.normal(size=10))
    times = np.array([0.0, 0.25, 1.0, 3.3, 5.0])
    got = BlockSystem(ref_ops).channels_at(control.values, control.dt, times)
    for t, ch in zip(times, got):
        np.testing.assert_allclose(ch.data, reduced_channel(ref_ops, control, t).data,
                                   atol=1e-11)


def test_boundary_channels(ref_ops, rng):
    control = PiecewiseControl(3.0, rng.normal(size=6))
    bs = BlockSystem(ref_ops)
    chans = bs.boundary_channels(control.values, control.dt)
    assert len(chans) == 7
    np.testing.assert_allclose(chans[-1].data, bs.channel(control.values, control.dt).data)
    np.testing.assert_allclose(chans[3].data, reduced_channel(ref_ops, control, 1.5).data,
                               atol=1e-11)


def test_block_fidelity_and_gradient(two_tls_ops, rng):
    U = np.diag(np.exp(1j * rng.uniform(0, 6, 4)))
    values = rng.normal(size=16)
    dt = 0.5
    bs = BlockSystem(two_tls_ops)
    f, g = bs.process_fidelity(values, dt, U, gradient=True)
    dense = reduced_channel(two_tls_ops, PiecewiseControl(8.0, values))
    assert f == pytest.approx(process_fidelity(dense, U), abs=1e-12)
    h = 1e-6
    for j in (0, 5, 15):
        vp, vm = values.copy(), values.copy()
        vp[j] += h
        vm[j] -= h
        fd = (bs.process_fidelity(vp, dt, U)[0] - bs.process_fidelity(vm, dt, U)[0]) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)
