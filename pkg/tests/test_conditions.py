"""Pointwise curvature conditions on synthetic tensors and on grid fields."""

import numpy as np
import pytest
import scipy.linalg

from hcflab import chern, conditions
from hcflab.common import NumericalError
from hcflab.grid import TorusGrid
from hcflab.presets import build_preset, build_synthetic, synthetic_minus_b


@pytest.mark.parametrize("n, expected", [(1, -2.0), (2, -1.0), (3, -1.0)])
def test_griffiths_of_minus_b(n, expected):
    synth = synthetic_minus_b(n)
    report = conditions.griffiths_extremum(synth.rm, synth.g, samples=64)
    assert report.global_max == pytest.approx(expected, abs=1e-9)
    assert report.all_converged
    assert report.argmax == ()
    assert np.all(report.sampled_max <= report.value + 1e-12)


def test_griffiths_kappa_of_minus_b():
    synth = synthetic_minus_b(2)
    kappa = conditions.griffiths_kappa(synth.rm, synth.g)
    assert kappa.global_max == pytest.approx(-1.0, abs=1e-9)
    report = conditions.griffiths_extremum(synth.rm, synth.g, with_kappa=True)
    assert float(np.max(report.kappa_bound)) == pytest.approx(-1.0, abs=1e-9)


def test_griffiths_of_diagonal():
    synth = build_synthetic("synthetic_diagonal", 3)
    report = conditions.griffiths_extremum(synth.rm, synth.g)
    assert report.global_max == pytest.approx(-1.0, abs=1e-9)
    # the maximizing pair is (e_0, e_0) up to phases
    assert abs(report.X[0]) == pytest.approx(1.0)
    assert abs(report.Y[0]) == pytest.approx(1.0)


def test_griffiths_witness_is_consistent():
    rng = np.random.default_rng(3)
    synth = synthetic_minus_b(2)
    a = rng.standard_normal((2,) * 4) + 1j * rng.standard_normal((2,) * 4)
    # perturbation with the conjugation symmetry
    a = a + np.conj(np.transpose(a, (1, 0, 3, 2)))
    rm = synth.rm + 0.1 * a
    report = conditions.griffiths_extremum(rm, synth.g, samples=500, seed=1)
    assert report.global_max >= float(report.sampled_max) - 1e-12
    np.testing.assert_allclose(conditions.norm_sq(report.X, synth.g), 1.0)
    np.testing.assert_allclose(conditions.norm_sq(report.Y, synth.g), 1.0)
    assert float(conditions.griffiths_form(rm, report.X, report.Y)) == pytest.approx(report.global_max, abs=1e-10)


def test_griffiths_requires_conjugation_symmetry():
    rm = np.zeros((2, 2, 2, 2), dtype=complex)
    rm[0, 1, 0, 0] = 1.0
    with pytest.raises(NumericalError):
        conditions.griffiths_extremum(rm, np.eye(2))


def test_griffiths_projects_small_conjugation_defects():
    synth = synthetic_minus_b(2)
    rm = synth.rm.astype(complex).copy()
    # coarse-grid aliasing breaks the symmetry at this level
    rm[0, 1, 1, 1] += 3e-7
    projected, defect = conditions.hermitian_project(rm)
    assert defect == pytest.approx(3e-7)
    assert conditions.conjugation_defect(projected) < 1e-15
    report = conditions.griffiths_extremum(rm, synth.g, seed=2)
    assert report.conjugation_defect == pytest.approx(3e-7)
    reference = conditions.griffiths_extremum(projected, synth.g, seed=2)
    assert report.global_max == pytest.approx(reference.global_max, abs=1e-12)
    assert report.global_max == pytest.approx(-1.0, abs=1e-6)


def test_ricci_spectrum_of_minus_b():
    synth = synthetic_minus_b(2)
    ric = np.einsum('kl,ijkl->ij', conditions.inverse_metric(synth.g), synth.rm)
    spectrum = conditions.ricci_spectrum(ric, synth.g)
    np.testing.assert_allclose(spectrum.eigenvalues, [-3.0, -3.0])
    assert spectrum.max_value == pytest.approx(-3.0)
    summary = conditions.classify(conditions.griffiths_extremum(synth.rm, synth.g), spectrum)
    assert summary.griffiths_nonpositive
    assert summary.ricci_nonpositive
    assert summary.ricci_quasi_negative
    assert summary.griffiths_point == []


def test_generalized_eigh_stack_matches_scipy():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    a = a + np.conj(np.swapaxes(a, -1, -2))
    c = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    b = c @ np.conj(np.swapaxes(c, -1, -2)) + np.eye(3)
    w, v = conditions.generalized_eigh(a, b)
    for k in range(5):
        np.testing.assert_allclose(w[k], scipy.linalg.eigh(a[k], b[k], eigvals_only=True), atol=1e-10)
        np.testing.assert_allclose(a[k] @ v[k], b[k] @ v[k] * w[k], atol=1e-10)


def test_eps_shift_and_trace():
    synth = synthetic_minus_b(2)
    shift = conditions.eps_shift(synth.rm, synth.g, 0.1)
    np.testing.assert_allclose(shift.R_eps, -1.1 * conditions.b_form(synth.g))
    ric = np.einsum('kl,ijkl->ij', conditions.inverse_metric(synth.g), synth.rm)
    np.testing.assert_allclose(shift.ricci(), ric - 0.1 * 3 * synth.g)
    with pytest.raises(ValueError):
        conditions.eps_shift(synth.rm, synth.g, -0.1)


def test_pinching_of_minus_b():
    synth = synthetic_minus_b(2)
    shift = conditions.eps_shift(synth.rm, synth.g, 0.01)
    pinch = conditions.pinch_margin(shift, 0.0, 0.0, samples=256)
    assert pinch.holds
    assert pinch.reason is None
    # Ric(u) Ric(v) = 9 (1 + eps)^2 and |R(u, vbar, x, xbar)|^2 <= 4 (1 + eps)^2
    assert pinch.min_margin >= 5 * 1.01 ** 2 - 1e-9
    assert pinch.min_cs_margin >= -1e-12


def test_pinching_saturates_in_dimension_one():
    synth = synthetic_minus_b(1)
    shift = conditions.eps_shift(synth.rm, synth.g, 0.01)
    pinch = conditions.pinch_margin(shift, 0.0, 0.0, samples=64)
    assert abs(pinch.min_margin) < 1e-12
    assert bool(np.all(pinch.ricci_negative))


def test_pinching_fails_for_positive_ricci():
    synth = synthetic_minus_b(2)
    shift = conditions.eps_shift(-synth.rm, synth.g, 0.0)
    pinch = conditions.pinch_margin(shift, 0.0, 0.0, samples=16)
    assert not pinch.holds
    assert "not negative" in pinch.reason


def test_initial_conditions_of_minus_b():
    synth = synthetic_minus_b(2)
    report = conditions.initial_conditions(synth.rm, synth.g, 0.01)
    # Ric^eps + eps g = -3 (1 + eps) + eps
    assert report.ricci_margin == pytest.approx(-3 * 1.01 + 0.01)
    assert report.ricci_below
    assert report.holds


def test_ricci_eps_margin_decays_with_time():
    synth = synthetic_minus_b(2)
    ric = np.einsum('kl,ijkl->ij', conditions.inverse_metric(synth.g), synth.rm)
    early = conditions.ricci_eps_margin(ric, synth.g, 0.1, 1.0, 0.0)
    late = conditions.ricci_eps_margin(ric, synth.g, 0.1, 1.0, 5.0)
    assert early == pytest.approx(-3.0 - 0.3 + 0.1)
    assert late < early


def test_polarization_ratio_of_minus_b():
    synth = synthetic_minus_b(2)
    shift = conditions.eps_shift(synth.rm, synth.g, 0.0)
    ratio = conditions.polarization_ratio(shift, samples=512, seed=2)
    # |B(a, bbar, c, dbar)| <= 2 while Ric(a) Ric(b) = 9
    assert 0.0 < ratio <= 4.0 / 9.0 + 1e-12


def test_point_subsets_report_full_locations():
    grid = TorusGrid(1, 8)
    preset = build_preset("conformal", grid, amplitude=0.2, seed=1)
    pkg = chern.chern_package(preset.metric)
    points = conditions.select_points(grid.shape, 10, seed=4)
    assert len(points) == 10
    np.testing.assert_array_equal(points, conditions.select_points(grid.shape, 10, seed=4))
    assert conditions.select_points(grid.shape, 1000) is None
    subset = conditions.griffiths_extremum(pkg.Rm_lowered.data, preset.metric.data, points=points)
    full = conditions.griffiths_extremum(pkg.Rm_lowered.data, preset.metric.data)
    assert subset.value.shape == (10,)
    assert full.value.shape == grid.shape
    assert len(subset.argmax) == 2
    assert subset.global_max <= full.global_max + 1e-12
    # in dimension one the form is R_{1 1bar 1 1bar} / g^2 at every point
    expected = np.real(pkg.Rm_lowered.data[..., 0, 0, 0, 0]) / np.real(preset.metric.data[..., 0, 0]) ** 2
    np.testing.assert_allclose(full.value, expected, atol=1e-12)


def test_random_unit_vectors_are_normalized():
    rng = np.random.default_rng(0)
    g = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    x = conditions.random_unit(rng, (7,), g)
    np.testing.assert_allclose(conditions.norm_sq(x, g), 1.0)
    y = conditions.random_unit(rng, (7,), g)
    np.testing.assert_allclose(conditions.b_value(g, x, x), 2.0)
    assert np.all(conditions.b_value(g, x, y) <= 2.0 + 1e-12)
