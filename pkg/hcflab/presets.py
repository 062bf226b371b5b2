"""Named initial data: metric presets, synthetic pointwise tensors and heat bumps."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .common import ConfigError
from .grid import MetricField, TorusGrid
from .trig import TrigPoly, random_trig

logger = logging.getLogger(__name__)

FLAT = "flat"
CONFORMAL = "conformal"
KAHLER_POTENTIAL = "kahler_potential"
NON_KAHLER = "non_kahler"
SYNTHETIC_MINUS_B = "synthetic_minus_b"
SYNTHETIC_DIAGONAL = "synthetic_diagonal"

COSINE_BUMP = "cosine"
COMPACT_BUMP = "compact"


@dataclass(frozen=True, eq=False)
class Preset:
    """A metric on a grid together with the closed forms it was built from.

    `symbols` maps names to trigonometric polynomials: "u" for the conformal
    factor exponent, "phi" for a Kähler potential, and ("g", i, j) for
    metric entries that are themselves polynomials.
    """
    name: str
    grid: TorusGrid
    metric: MetricField
    kahler: bool
    params: dict = field(default_factory=dict)
    symbols: dict = field(default_factory=dict)

    def entry(self, i, j):
        return self.symbols[("g", i, j)]


@dataclass(frozen=True, eq=False)
class SyntheticTensors:
    """Pointwise curvature data that bypasses the grid."""
    name: str
    n: int
    rm: np.ndarray
    g: np.ndarray


def _rng(seed):
    return np.random.default_rng(seed)


def _metric_from_entries(grid, entries):
    n = grid.n
    data = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            data[..., i, j] = entries[("g", i, j)].evaluate(grid)
    return MetricField.from_array(grid, data).symmetrized()


def _check(preset):
    value, point = preset.metric.min_eigenvalue()
    if not value > 0:
        raise ConfigError("preset {0!r} with parameters {1} is not positive definite at grid point {2} "
                          "(minimum eigenvalue {3:.4g}); lower the amplitude".format(
                              preset.name, preset.params, point, value), field="preset.amplitude")
    logger.debug("Preset %s: minimum eigenvalue %.6g", preset.name, value)
    return preset


def flat(grid, **_):
    n = grid.n
    entries = {("g", i, j): TrigPoly.constant(n, 1.0 if i == j else 0.0, grid.periods)
               for i in range(n) for j in range(n)}
    return Preset(FLAT, grid, MetricField.flat(grid), True, {}, entries)


def conformal(grid, amplitude=0.1, max_mode=1, seed=0, **_):
    """g = exp(u) delta with u a real random trigonometric polynomial.

    Kähler only in dimension one (or when u is constant).
    """
    u = random_trig(grid.n, _rng(seed), max_mode, amplitude, real=True, periods=grid.periods)
    factor = np.exp(np.real(u.evaluate(grid)))
    data = factor[..., None, None] * np.eye(grid.n)
    metric = MetricField.from_array(grid, data)
    params = {"amplitude": amplitude, "max_mode": max_mode, "seed": seed}
    return _check(Preset(CONFORMAL, grid, metric, grid.n == 1, params, {"u": u}))


def kahler_potential(grid, amplitude=0.1, max_mode=1, seed=0, **_):
    """g_{i jbar} = delta_{ij} + d_i d_jbar phi."""
    n = grid.n
    phi = random_trig(n, _rng(seed), max_mode, amplitude, real=True, periods=grid.periods)
    entries = {}
    for i in range(n):
        for j in range(n):
            entries[("g", i, j)] = phi.d_anti(j).d_holo(i) + (1.0 if i == j else 0.0)
    params = {"amplitude": amplitude, "max_mode": max_mode, "seed": seed}
    symbols = dict(entries, phi=phi)
    return _check(Preset(KAHLER_POTENTIAL, grid, _metric_from_entries(grid, entries), True, params, symbols))


def non_kahler(grid, amplitude=0.1, max_mode=1, seed=0, **_):
    """g_{i jbar} = delta_{ij} + amplitude/2 [(d_i f)(d_jbar h) + (d_i h)(d_jbar f)] for real f != h.

    The lowered torsion of this metric is the polynomial
    T_{ik lbar} = d_i g_{k lbar} - d_k g_{i lbar}.
    """
    n = grid.n
    rng = _rng(seed)
    f = random_trig(n, rng, max_mode, 1.0, real=True, periods=grid.periods)
    h = random_trig(n, rng, max_mode, 1.0, real=True, periods=grid.periods)
    entries = {}
    for i in range(n):
        for j in range(n):
            cross = f.d_holo(i) * h.d_anti(j) + h.d_holo(i) * f.d_anti(j)
            entries[("g", i, j)] = cross * (0.5 * amplitude) + (1.0 if i == j else 0.0)
    params = {"amplitude": amplitude, "max_mode": max_mode, "seed": seed}
    symbols = dict(entries, f=f, h=h)
    metric = _metric_from_entries(grid, entries)
    return _check(Preset(NON_KAHLER, grid, metric, n == 1 or amplitude == 0, params, symbols))


def torsion_oracle(preset):
    """Lowered torsion d_i g_{k lbar} - d_k g_{i lbar} sampled on the preset's grid."""
    grid = preset.grid
    n = grid.n
    out = np.zeros(grid.shape + (n, n, n), dtype=complex)
    for i in range(n):
        for k in range(n):
            for l in range(n):
                poly = preset.entry(k, l).d_holo(i) - preset.entry(i, l).d_holo(k)
                out[..., i, k, l] = poly.evaluate(grid)
    return out


METRIC_PRESETS = {
    FLAT: flat,
    CONFORMAL: conformal,
    KAHLER_POTENTIAL: kahler_potential,
    NON_KAHLER: non_kahler,
}


def build_preset(name, grid, **params):
    """Construct a registered metric preset on `grid`."""
    try:
        builder = METRIC_PRESETS[name]
    except KeyError:
        raise ConfigError("unknown metric preset {0!r}; known: {1}".format(
            name, ", ".join(sorted(METRIC_PRESETS))), field="preset.name")
    return builder(grid, **params)


def b_form(g):
    """B_{i jbar k lbar} = g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar} for arrays [..., n, n]."""
    return np.einsum('...ij,...kl->...ijkl', g, g) + np.einsum('...il,...kj->...ijkl', g, g)


def synthetic_minus_b(n, g=None):
    """R = -B at a single point."""
    g = np.eye(n, dtype=complex) if g is None else np.asarray(g, dtype=complex)
    return SyntheticTensors(SYNTHETIC_MINUS_B, n, -b_form(g), g)


def synthetic_diagonal(c):
    """R_{i ibar k kbar} = c[i, k] and zero elsewhere, with g = delta.

    Over g-unit pairs the Griffiths form is sum c_ik |X^i|^2 |Y^k|^2, whose
    maximum is max c_ik.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rm = np.zeros((n, n, n, n), dtype=complex)
    for i in range(n):
        for k in range(n):
            rm[i, i, k, k] = c[i, k]
    return SyntheticTensors(SYNTHETIC_DIAGONAL, n, rm, np.eye(n, dtype=complex))


SYNTHETIC_PRESETS = {
    SYNTHETIC_MINUS_B: lambda n, **_: synthetic_minus_b(n),
    SYNTHETIC_DIAGONAL: lambda n, **_: synthetic_diagonal(-1.0 - np.add.outer(np.arange(n), 2 * np.arange(n))),
}


def is_synthetic(name):
    return name in SYNTHETIC_PRESETS


def build_synthetic(name, n, **params):
    try:
        return SYNTHETIC_PRESETS[name](n, **params)
    except KeyError:
        raise ConfigError("unknown synthetic preset {0!r}".format(name), field="preset.name")


def _periodic_distance(grid, center):
    coords = grid.coordinates()
    total = np.zeros(grid.shape)
    for x, c, period in zip(coords, center, grid.periods):
        d = np.abs(x - c) % period
        total = total + np.minimum(d, period - d) ** 2
    return np.sqrt(total)


def cosine_bump(grid, center=None, power=4, scale=1.0):
    """prod_axes ((1 + cos(x - c)) / 2)^power.

    Band-limited with modes up to `power`, so on a flat metric the spectral
    heat flow of it stays nonnegative.
    """
    if power >= grid.resolution // 2:
        raise ConfigError("bump power {0} is not resolved at resolution {1}".format(power, grid.resolution),
                          field="monitors.bump_power")
    center = (0.0,) * grid.ndim if center is None else center
    phi = np.ones(grid.shape)
    for x, c, period in zip(grid.coordinates(), center, grid.periods):
        phi = phi * ((1.0 + np.cos(2 * np.pi * (x - c) / period)) / 2.0) ** power
    return _normalized(phi, scale)


def compact_bump(grid, center=None, radius=1.0, scale=1.0):
    """exp(-1 / (1 - r^2)) inside the periodic ball of `radius`, zero outside."""
    center = (0.0,) * grid.ndim if center is None else center
    r = _periodic_distance(grid, center) / radius
    phi = np.zeros(grid.shape)
    inside = r < 1.0
    phi[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return _normalized(phi, scale)


def _normalized(phi, scale):
    if not 0 <= scale <= 1:
        raise ConfigError("bump scale must lie in [0, 1], got {0}".format(scale), field="monitors.bump_scale")
    top = np.max(phi)
    return phi * (scale / top) if top > 0 else phi


HEAT_BUMPS = {
    COSINE_BUMP: cosine_bump,
    COMPACT_BUMP: compact_bump,
}


def heat_bump(name, grid, **params):
    try:
        builder = HEAT_BUMPS[name]
    except KeyError:
        raise ConfigError("unknown heat bump {0!r}; known: {1}".format(name, ", ".join(sorted(HEAT_BUMPS))),
                          field="monitors.bump")
    return builder(grid, **params)
