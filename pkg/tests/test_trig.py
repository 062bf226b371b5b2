import math

import numpy as np
import pytest

from hcflab.grid import TorusGrid
from hcflab.trig import ANALYTIC_PRESETS, TrigPoly, analytic_preset, random_trig


@pytest.fixture
def grid():
    return TorusGrid(1, 16)


def test_products_sample_pointwise(grid):
    f = analytic_preset("mode_mix", 1)
    g = analytic_preset("sin_cos", 1)
    np.testing.assert_allclose((f * g).evaluate(grid), f.evaluate(grid) * g.evaluate(grid), atol=1e-13)
    np.testing.assert_allclose((f + 2.0).evaluate(grid), f.evaluate(grid) + 2.0, atol=1e-13)
    np.testing.assert_allclose((1.0 - f).evaluate(grid), 1.0 - f.evaluate(grid), atol=1e-13)
    np.testing.assert_allclose(f.conj().evaluate(grid), np.conj(f.evaluate(grid)), atol=1e-13)


def test_evaluate_at_matches_grid(grid):
    f = analytic_preset("mode_mix", 1) * TrigPoly.exp_mode(1, (1, -2), 0.5j)
    np.testing.assert_allclose(f.evaluate_at(grid.coordinates()), f.evaluate(grid), atol=1e-13)


def test_unresolved_modes_fold(grid):
    f = TrigPoly.exp_mode(1, (17, 0))
    x, _ = grid.coordinates()
    np.testing.assert_allclose(f.evaluate(grid), np.exp(17j * x), atol=1e-12)
    assert f.max_frequency == 17


def test_trig_identities(grid):
    s = TrigPoly.sin(1, 0)
    c = TrigPoly.cos(1, 0)
    one = s * s + c * c
    assert one.coeffs == {(0, 0): 1.0}
    np.testing.assert_allclose(s.d_real(0).evaluate(grid), c.evaluate(grid), atol=1e-13)
    # d/dz sin x = cos x / 2
    np.testing.assert_allclose(s.d_holo(0).evaluate(grid), 0.5 * c.evaluate(grid), atol=1e-13)


def test_periods_must_match():
    a = TrigPoly.cos(1, 0)
    b = TrigPoly.cos(1, 0, periods=(math.pi, math.pi))
    with pytest.raises(ValueError):
        a + b
    with pytest.raises(ValueError):
        TrigPoly(1, {(1, 0, 0): 1.0})
    with pytest.raises(ValueError):
        a.evaluate(TorusGrid(2, 8))


def test_random_trig_real_and_scaled(grid):
    rng = np.random.default_rng(7)
    f = random_trig(1, rng, max_mode=2, amplitude=0.3)
    assert sum(abs(c) for c in f.coeffs.values()) == pytest.approx(0.3)
    assert f.max_frequency <= 2
    assert (0, 0) not in f.coeffs
    np.testing.assert_allclose(f.evaluate(grid).imag, 0.0, atol=1e-15)


def test_analytic_presets_registered():
    assert set(ANALYTIC_PRESETS) == {"zero", "sin_cos", "mode_mix"}
    assert analytic_preset("zero", 2).coeffs == {}
    assert analytic_preset("mode_mix", 2).n == 2
    with pytest.raises(ValueError):
        analytic_preset("gaussian")
