"""Residual suites: identities, evolution oracles, condition algebra and the check driver."""

import dataclasses
import json
import os

import numpy as np
import pytest

from hcflab import chern, verify
from hcflab.config import parse_config
from hcflab.flow import FlowState
from hcflab.grid import MetricField, TorusGrid
from hcflab.presets import build_preset, build_synthetic, synthetic_minus_b


def test_flat_identities_vanish():
    pkg = chern.chern_package(MetricField.flat(TorusGrid(2, 8)))
    residuals = verify.identity_residuals(pkg)
    assert "commutator_upper" in residuals and "bianchi_second_anti" in residuals
    for name, value in residuals.items():
        assert value < 1e-12, name


def test_conformal_identities(conformal_1d):
    pkg = chern.chern_package(conformal_1d.metric)
    suite = verify.identity_suite(pkg, tolerance=1e-8)
    failed = [r.name for r in suite.records if not r.passed]
    assert not failed
    suite = verify.preset_suite(conformal_1d, pkg, tolerance=1e-8)
    names = {r.name for r in suite.records}
    assert {"conformal_christoffel", "conformal_curvature", "conformal_first_ricci", "conformal_second_ricci",
            "kahler_torsion"} <= names
    assert all(r.passed for r in suite.records)


def test_non_kahler_identities(non_kahler_2d):
    pkg = chern.chern_package(non_kahler_2d.metric)
    suite = verify.identity_suite(pkg, tolerance=1e-6)
    failed = [(r.name, r.value) for r in suite.records if not r.passed]
    assert not failed
    preset = verify.preset_suite(non_kahler_2d, pkg, tolerance=1e-6)
    torsion = [r for r in preset.records if r.name == "kahler_torsion"][0]
    assert torsion.passed and torsion.value > 0 and torsion.note


def test_identities_detect_broken_curvature(non_kahler_2d):
    """Perturbing R by a tensor without the symmetries must show up in the Bianchi residuals."""
    pkg = chern.chern_package(non_kahler_2d.metric)
    data = pkg.Rm_lowered.data.copy()
    data[..., 0, 0, 1, 0] += 1e-3
    broken = dataclasses.replace(pkg, Rm_lowered=pkg.Rm_lowered.with_data(data))
    residuals = verify.bianchi_residuals(broken)
    assert residuals["bianchi_first_holo"] > 1e-4


def test_spectral_floor(conformal_1d):
    assert verify.spectral_floor(MetricField.flat(TorusGrid(1, 16))) < 1e-15
    assert verify.spectral_floor(conformal_1d.metric) < 1e-12


def test_conformal_rates_match_oracle(conformal_1d):
    suite = verify.conformal_evolution_suite(conformal_1d, tolerance=1e-8)
    assert [r.name for r in suite.records] == ["conformal_velocity", "conformal_curvature_rate",
                                               "conformal_ricci_rate"]
    assert all(r.passed for r in suite.records)


def test_laplacian_conventions_agree(conformal_1d, non_kahler_2d):
    for preset, tol in ((conformal_1d, 1e-9), (non_kahler_2d, 1e-6)):
        pkg = chern.chern_package(preset.metric)
        symmetric = verify.rhs_rm_evolution(pkg, chern.SYMMETRIC).total()
        holo_outer = verify.rhs_rm_evolution(pkg, chern.HOLO_OUTER).total()
        assert np.max(np.abs(symmetric - holo_outer)) < tol
        ric_sym = verify.rhs_ricci_evolution(pkg, chern.SYMMETRIC).total()
        ric_ho = verify.rhs_ricci_evolution(pkg, chern.HOLO_OUTER).total()
        assert np.max(np.abs(ric_sym - ric_ho)) < tol
    with pytest.raises(ValueError):
        verify.rhs_rm_evolution(pkg, "average")


def test_ricci_trace_consistency(conformal_1d, non_kahler_2d):
    assert verify.ricci_trace_consistency(chern.chern_package(conformal_1d.metric)) < 1e-9
    assert verify.ricci_trace_consistency(chern.chern_package(non_kahler_2d.metric)) < 1e-6


def test_kahler_torsion_terms_are_exactly_zero():
    preset = build_preset("kahler_potential", TorusGrid(2, 16), amplitude=0.02, max_mode=1, seed=2)
    pkg = chern.chern_package(preset.metric)
    for terms in (verify.rhs_rm_evolution(pkg), verify.rhs_ricci_evolution(pkg)):
        assert not np.any(terms.torsion_gradient)
        assert not np.any(terms.torsion_quadratic)
        assert np.any(terms.curvature_quadratic)
        assert set(terms.as_dict()) == set(terms.names)


def test_evolution_converges_at_second_order():
    preset = build_preset("conformal", TorusGrid(1, 32), amplitude=0.3, max_mode=1, seed=6)
    state = FlowState(0.0, preset.metric)
    for which in (verify.RM, verify.RICCI):
        for convention in (chern.SYMMETRIC, chern.HOLO_OUTER):
            study = verify.evolution_study(state, which, (4e-3, 2e-3, 1e-3), convention)
            assert study.deltas == pytest.approx([4e-3, 2e-3, 1e-3])
            for order in study.orders():
                assert order is not None and order > 1.5, (which, convention, study.sups)
            assert study.constant() > 0


def test_evolution_non_kahler_first_order_pair():
    preset = build_preset("non_kahler", TorusGrid(2, 16), amplitude=0.05, max_mode=1, seed=5)
    study = verify.evolution_study(FlowState(0.0, preset.metric), verify.RM, (4e-3, 2e-3, 1e-3))
    assert study.orders()[0] >= 1.5, study.sups
    residual = study.residuals[0]
    assert set(residual.terms) == {"laplacian", "torsion_gradient", "torsion_quadratic",
                                   "curvature_quadratic", "second_ricci"}
    assert np.max(np.abs(residual.terms["torsion_gradient"])) > 0


def test_metric_velocity_residual(conformal_1d):
    trajectory = verify.record_trajectory(FlowState(0.0, conformal_1d.metric), 1e-3)
    assert len(trajectory) == 3
    residual = verify.evolution_residual(trajectory, verify.METRIC, 1e-3)
    assert residual.sup < 1e-6
    with pytest.raises(ValueError):
        verify.fd_time_derivative(trajectory, verify.METRIC, 0.0)
    with pytest.raises(ValueError):
        verify.record_trajectory(FlowState(0.0, conformal_1d.metric), 1e-3, t_star=1.5e-3)


def test_evolution_suite_records(conformal_1d):
    suite = verify.evolution_suite(FlowState(0.0, conformal_1d.metric), (4e-3, 2e-3, 1e-3), tolerance=1e-8,
                                   conventions=(chern.SYMMETRIC,))
    names = [r.name for r in suite.records]
    assert names == ["full_curvature_symmetric", "first_ricci_symmetric", "ricci_trace_consistency"]
    assert all(r.passed for r in suite.records)
    for record in suite.records[:2]:
        # the configured tolerance, never the measured constant
        assert record.tolerance == pytest.approx(1e-5)
        assert record.value <= record.tolerance
        assert record.order >= 1.5 or record.value <= 1e-8
        assert record.note.startswith("C=")


def test_evolution_suite_rejects_wrong_right_hand_side(monkeypatch):
    preset = build_preset("non_kahler", TorusGrid(2, 16), amplitude=0.05, max_mode=1, seed=5)
    state = FlowState(0.0, preset.metric)
    deltas = (4e-3, 2e-3, 1e-3)
    assert np.max(np.abs(verify.rhs_rm_evolution(chern.chern_package(preset.metric)).torsion_quadratic)) > 0

    def full_curvature(suite):
        return [r for r in suite.records if r.name == "full_curvature_symmetric"][0]

    right = full_curvature(verify.evolution_suite(state, deltas, evolution_tolerance=1e-4,
                                                  conventions=(chern.SYMMETRIC,)))
    assert right.passed, (right.value, right.order)

    correct = verify.rhs_rm_evolution

    def without_torsion_quadratic(pkg, convention=chern.SYMMETRIC):
        terms = correct(pkg, convention)
        return dataclasses.replace(terms, torsion_quadratic=np.zeros_like(terms.torsion_quadratic))

    monkeypatch.setattr(verify, "rhs_rm_evolution", without_torsion_quadratic)
    wrong = full_curvature(verify.evolution_suite(state, deltas, evolution_tolerance=1e-4,
                                                  conventions=(chern.SYMMETRIC,)))
    assert not wrong.passed
    assert wrong.order < 1.5
    assert wrong.value > right.value


@pytest.mark.parametrize("n", [1, 2])
def test_conditions_suite_minus_b(n):
    synth = synthetic_minus_b(n)
    suite, summary = verify.conditions_suite(synth.rm, synth.g, 0.01, 512, seed=0,
                                             expected=verify.synthetic_expectations(synth))
    failed = [(r.name, r.value) for r in suite.records if not r.passed]
    assert not failed
    assert summary.griffiths_nonpositive and summary.ricci_quasi_negative
    names = {r.name for r in suite.records}
    assert {"griffiths_closed_form", "ricci_closed_form", "pinch_margin_positive", "cauchy_schwarz_equality",
            "initial_ricci_margin"} <= names


def test_conditions_suite_diagonal():
    synth = build_synthetic("synthetic_diagonal", 2)
    expected = verify.synthetic_expectations(synth)
    assert expected == {"griffiths": -1.0}
    suite, _ = verify.conditions_suite(synth.rm, synth.g, 0.01, 256, expected=expected)
    closed = [r for r in suite.records if r.name == "griffiths_closed_form"][0]
    assert closed.passed


def test_heat_suite():
    suite = verify.heat_suite(TorusGrid(1, 16))
    assert [r.name for r in suite.records] == ["heat_constant_stationary", "heat_single_mode_decay",
                                               "a_eps_arithmetic"]
    assert all(r.passed for r in suite.records)


def test_run_checks_flat(tmp_path):
    cfg = parse_config("grid: {n: 1, resolution: 8}\nchecks: {which: [identities, evolution]}")
    report = verify.run_checks(cfg, config_hash="abc")
    assert report.passed, [(r.name, r.value) for r in report.failures]
    assert report.config_hash == "abc"
    tags = {r.tag for r in report.records}
    assert {"commutation", "bianchi", "evolution", "resolution"} <= tags
    path = verify.write_report(report, str(tmp_path))
    with open(path) as f:
        data = json.load(f)
    assert os.path.basename(path) == "verification.json"
    assert len(data["records"]) == len(report.records)


def test_run_checks_synthetic_skips_grid_suites():
    cfg = parse_config("preset: {name: synthetic_minus_b}\ngrid: {n: 2, resolution: 8}\n"
                       "checks: {which: [identities, conditions, heat], condition_samples: 512}")
    report = verify.run_checks(cfg)
    assert report.passed, [(r.name, r.value) for r in report.failures]
    assert report.preset == "synthetic_minus_b"
    assert not any(r.tag == "commutation" for r in report.records)
    assert any(r.name == "pinch_margin_positive" for r in report.records)


def test_run_checks_reports_failures():
    cfg = parse_config("preset: {name: conformal, amplitude: 0.1}\ngrid: {n: 1, resolution: 8}\n"
                       "checks: {tolerance: 1.0e-300, spectral_tail: false}")
    report = verify.run_checks(cfg, ["identities"])
    assert not report.passed
    assert all(r.value > r.tolerance for r in report.failures)
