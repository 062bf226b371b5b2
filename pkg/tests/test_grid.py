"""Tests for the torus grid, tensor fields and the derivative probe."""

import math

import numpy as np
import pytest

from hcflab.common import GridError, SignatureError
from hcflab.grid import (FD4, SPECTRAL, MetricField, Slot, TensorField, TorusGrid, convergence_probe,
                         partial_anti, partial_holo)
from hcflab.trig import TrigPoly, analytic_preset


def test_grid_validation():
    with pytest.raises(GridError):
        TorusGrid(1, 12)
    with pytest.raises(GridError):
        TorusGrid(4, 16)
    with pytest.raises(GridError):
        TorusGrid(1, 16, derivative_mode="fd2")
    with pytest.raises(GridError):
        TorusGrid(1, 16, periods=(1.0, 2.0, 3.0))
    grid = TorusGrid(2, 8, periods=3.0)
    assert grid.periods == (3.0,) * 4
    assert grid.shape == (8, 8, 8, 8)
    assert grid.spacing == (3.0 / 8,) * 4


def test_axis_out_of_range(flat_grid):
    data = np.zeros(flat_grid.shape, dtype=complex)
    with pytest.raises(GridError):
        flat_grid.d_real(data, 2)
    with pytest.raises(GridError):
        flat_grid.d_holo(data, 1)


def test_spectral_wirtinger_exact(flat_grid):
    """d/dz and d/dzbar of a trigonometric polynomial match the symbolic ones to roundoff."""
    f = analytic_preset("mode_mix", 1)
    values = f.evaluate(flat_grid)
    np.testing.assert_allclose(flat_grid.d_holo(values, 0), f.d_holo(0).evaluate(flat_grid), atol=1e-12)
    np.testing.assert_allclose(flat_grid.d_anti(values, 0), f.d_anti(0).evaluate(flat_grid), atol=1e-12)


def test_wirtinger_of_plane_waves(flat_grid):
    """Plane waves along x and y: d/dz = (d_x - i d_y) / 2, d/dzbar = (d_x + i d_y) / 2."""
    x, y = flat_grid.coordinates()
    f = np.exp(1j * x)
    np.testing.assert_allclose(flat_grid.d_holo(f, 0), 0.5j * f, atol=1e-12)
    np.testing.assert_allclose(flat_grid.d_anti(f, 0), 0.5j * f, atol=1e-12)
    g = np.exp(1j * y)
    np.testing.assert_allclose(flat_grid.d_holo(g, 0), 0.5 * g, atol=1e-12)
    np.testing.assert_allclose(flat_grid.d_anti(g, 0), -0.5 * g, atol=1e-12)


def test_fd4_convergence_order():
    rows = convergence_probe("sin_cos", modes=(FD4,), resolutions=(16, 32, 64))
    orders = [r.order for r in rows if r.ratio is not None]
    assert len(orders) == 2
    for order in orders:
        assert order > 3.5


def test_spectral_probe_at_roundoff():
    rows = convergence_probe("mode_mix", modes=(SPECTRAL,), resolutions=(16, 32))
    for row in rows:
        assert row.mode == SPECTRAL
        assert row.error < 1e-12


def test_probe_rejects_unknown_preset():
    with pytest.raises(ValueError):
        convergence_probe("nope")


def test_random_field_is_band_limited(flat_grid, rng):
    field = flat_grid.random_field(rng, max_mode=2, amplitude=0.5, extra=(1,))
    assert field.shape == flat_grid.shape + (1,)
    assert np.max(np.abs(field)) == pytest.approx(0.5)
    spectrum = np.abs(np.fft.fftn(field[..., 0]))
    freq = np.abs(np.fft.fftfreq(16, d=1.0 / 16))
    high = (freq[:, None] > 2) | (freq[None, :] > 2)
    assert np.max(spectrum[high]) < 1e-10 * np.max(spectrum)
    real = flat_grid.random_field(rng, max_mode=1, real=True)
    assert not np.iscomplexobj(real)
    with pytest.raises(GridError):
        flat_grid.random_field(rng, max_mode=8)


def test_tensor_field_signature_and_immutability(flat_grid, rng):
    data = flat_grid.random_field(rng, max_mode=1, extra=(1, 1))
    t = TensorField(flat_grid, (Slot.LOWER, Slot.UPPER_BAR), data)
    assert t.rank == 2
    assert t.conj().signature == (Slot.LOWER_BAR, Slot.UPPER)
    np.testing.assert_array_equal(t.conj().data, np.conj(data))
    with pytest.raises(ValueError):
        t.data[0, 0, 0, 0] = 1.0
    with pytest.raises(SignatureError):
        TensorField(flat_grid, ("lower",), data[..., 0])
    with pytest.raises(GridError):
        TensorField(flat_grid, (Slot.LOWER,), data)
    with pytest.raises(SignatureError):
        t * t


def test_permute_and_trace():
    grid = TorusGrid(2, 8)
    rng = np.random.default_rng(0)
    data = rng.standard_normal(grid.shape + (2, 2, 2)) + 1j * rng.standard_normal(grid.shape + (2, 2, 2))
    t = TensorField(grid, (Slot.LOWER, Slot.UPPER, Slot.LOWER_BAR), data)
    p = t.permute((2, 0, 1))
    assert p.signature == (Slot.LOWER_BAR, Slot.LOWER, Slot.UPPER)
    np.testing.assert_array_equal(p.data[..., 1, 0, 1], data[..., 0, 1, 1])

    direct = t.trace(0, 1)
    assert direct.signature == (Slot.LOWER_BAR,)
    np.testing.assert_allclose(direct.data, np.einsum('...aab->...b', data))

    ginv = MetricField.flat(grid).inverse()
    metric = t.trace(0, 2, ginv)
    assert metric.signature == (Slot.UPPER,)
    np.testing.assert_allclose(metric.data, np.einsum('...aba->...b', data))

    with pytest.raises(SignatureError):
        t.trace(0, 2)
    with pytest.raises(SignatureError):
        t.trace(1, 2, ginv)
    with pytest.raises(SignatureError):
        t.permute((0, 0, 1))


def test_field_arithmetic(flat_grid, rng):
    a = TensorField(flat_grid, (Slot.LOWER,), flat_grid.random_field(rng, extra=(1,)))
    b = TensorField(flat_grid, (Slot.LOWER,), flat_grid.random_field(rng, extra=(1,)))
    np.testing.assert_allclose((a + b - a).data, b.data, atol=1e-15)
    np.testing.assert_allclose((2 * a).data, 2 * a.data)
    np.testing.assert_allclose((-a).data, -a.data)
    with pytest.raises(SignatureError):
        a + a.conj()
    with pytest.raises(GridError):
        a + TensorField(TorusGrid(1, 8), (Slot.LOWER,), np.zeros((8, 8, 1)))


def test_partial_derivatives_keep_signature(flat_grid):
    f = analytic_preset("sin_cos", 1)
    t = TensorField(flat_grid, (Slot.LOWER,), f.evaluate(flat_grid)[..., None])
    d = partial_holo(t, 0)
    assert d.signature == t.signature
    np.testing.assert_allclose(d.data[..., 0], f.d_holo(0).evaluate(flat_grid), atol=1e-12)
    np.testing.assert_allclose(partial_anti(t, 0).data[..., 0], f.d_anti(0).evaluate(flat_grid), atol=1e-12)
    with pytest.raises(GridError):
        partial_holo(t, 0, grid=TorusGrid(1, 8))


def test_metric_field_helpers():
    grid = TorusGrid(2, 8)
    x = grid.coordinates()[0]
    data = np.zeros(grid.shape + (2, 2), dtype=complex)
    data[..., 0, 0] = 2.0 + np.cos(x)
    data[..., 1, 1] = 1.0
    data[..., 0, 1] = 0.25j
    data[..., 1, 0] = -0.25j
    metric = MetricField.from_array(grid, data)
    assert metric.hermitian_defect() == 0.0
    inv = metric.inverse().data
    # inverse()[k, l] = g^{k lbar} so that g^{k lbar} g_{j lbar} = delta
    np.testing.assert_allclose(np.einsum('...kl,...jl->...kj', inv, data),
                               np.broadcast_to(np.eye(2), data.shape), atol=1e-14)
    np.testing.assert_allclose(metric.log_det(), np.log(np.real(np.linalg.det(data))), atol=1e-13)
    low, point = metric.min_eigenvalue()
    assert low == pytest.approx(np.min(np.linalg.eigvalsh(data)))
    assert len(point) == 4
    with pytest.raises(SignatureError):
        MetricField(TensorField(grid, (Slot.LOWER, Slot.LOWER), data))
    flat = MetricField.flat(grid)
    assert np.all(flat.log_det() == 0.0)
    assert flat.scaled(2.0).min_eigenvalue()[0] == pytest.approx(2.0)


def test_symmetrized_is_hermitian(flat_grid, rng):
    data = 1.0 + 0.1 * flat_grid.random_field(rng, extra=(1, 1))
    metric = MetricField.from_array(flat_grid, data).symmetrized()
    assert metric.hermitian_defect() == 0.0
    np.testing.assert_allclose(metric.data.imag, 0.0, atol=1e-15)


def test_scalar_laplacian_flat(flat_grid):
    x, y = flat_grid.coordinates()
    f = np.cos(x) * np.sin(2 * y)
    ginv = MetricField.flat(flat_grid).inverse().data
    # g^{r sbar} d_r d_sbar = (d_xx + d_yy) / 4
    expected = -0.25 * (1 + 4) * f
    np.testing.assert_allclose(flat_grid.laplacian(f.astype(complex), ginv), expected, atol=1e-12)


def test_custom_periods_scale_derivatives():
    grid = TorusGrid(1, 16, periods=(math.pi, 4 * math.pi))
    f = TrigPoly.cos(1, 0, 1, grid.periods) + TrigPoly.sin(1, 1, 1, grid.periods)
    np.testing.assert_allclose(grid.d_holo(f.evaluate(grid), 0), f.d_holo(0).evaluate(grid), atol=1e-12)
