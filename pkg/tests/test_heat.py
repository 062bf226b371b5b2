import numpy as np
import pytest

from hcflab.common import PositivityError
from hcflab.flow import FlowState, SmpMonitor, assemble_a_eps, heat_step, smp_monitor, smp_value
from hcflab.grid import MetricField, TorusGrid
from hcflab.presets import cosine_bump, synthetic_minus_b


@pytest.fixture
def grid():
    return TorusGrid(1, 16)


def test_constant_is_stationary(grid):
    flat = MetricField.flat(grid)
    phi = np.full(grid.shape, 0.7)
    np.testing.assert_allclose(heat_step(phi, flat, 0.05), 0.7, atol=1e-14)


def test_single_mode_decay(grid):
    """On g = delta, cos(2 y) decays like exp(-t) since the operator is (d_xx + d_yy) / 4."""
    flat = MetricField.flat(grid)
    _, y = grid.coordinates()
    phi = 1.0 + 0.5 * np.cos(2 * y)
    for _ in range(20):
        phi = heat_step(phi, flat, 0.01)
    np.testing.assert_allclose(phi, 1.0 + 0.5 * np.exp(-0.2) * np.cos(2 * y), atol=1e-9)


def test_scaled_metric_slows_diffusion(grid):
    wide = MetricField.flat(grid).scaled(2.0)
    x, _ = grid.coordinates()
    phi = 1.0 + 0.5 * np.cos(x)
    out = heat_step(phi, wide, 0.1)
    np.testing.assert_allclose(out, 1.0 + 0.5 * np.exp(-0.1 / 8) * np.cos(x), atol=1e-9)


def test_large_steps_are_subcycled():
    grid = TorusGrid(1, 32)
    flat = MetricField.flat(grid)
    phi = cosine_bump(grid, power=4)
    out = heat_step(phi, flat, 0.5)
    assert np.all(np.isfinite(out))
    assert np.min(out) >= -1e-12
    assert np.max(out) < np.max(phi)


def test_negative_values_are_reported(grid):
    flat = MetricField.flat(grid)
    phi = np.zeros(grid.shape)
    phi[0, 0] = -1e-3
    with pytest.raises(PositivityError):
        heat_step(phi, flat, 1e-4)


def test_a_eps_arithmetic():
    synth = synthetic_minus_b(2)
    ric = np.einsum('kl,ijkl->ij', np.linalg.inv(synth.g).T, synth.rm)
    a = assemble_a_eps(ric, synth.g, 0.5, 2.0, 1.0, 0.5, 0.1)
    weight = np.exp(-2.0) * 0.25 - 0.1 * np.exp(1.0)
    np.testing.assert_allclose(a, (-3.0 + weight) * synth.g)
    assert smp_value(ric, synth.g, 0.5, 2.0, 1.0, 0.5, 0.1) == pytest.approx(-3.0 + weight)


def test_smp_monitor_on_flat_metric(grid):
    flat = MetricField.flat(grid)
    state = FlowState(0.0, flat)
    phi = cosine_bump(grid, power=2, scale=0.5)
    # Ric = 0, so max eig A^eps = max phi^2 - eps
    assert smp_monitor(state, phi, 1.0, 1.0, 0.01) == pytest.approx(0.25 - 0.01)
    with pytest.raises(ValueError):
        smp_monitor(state, None, 1.0, 1.0, 0.01)

    monitor = SmpMonitor(phi, 1.0, 1.0, 0.01)
    assert not monitor.arm(state.pkg.Ric_first, flat)
    monitor.check(state, phi)
    assert monitor.values == [pytest.approx(0.24)]
    assert monitor.violated_at is None

    quiet = SmpMonitor(np.zeros(grid.shape), 1.0, 1.0, 0.01)
    assert quiet.arm(state.pkg.Ric_first, flat)
    quiet.check(state, phi)
    assert quiet.violated_at == 0.0
