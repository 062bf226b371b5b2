"""Residual suites: commutation and Bianchi identities, evolution equations, condition algebra.

Every check produces a ResidualRecord; a suite collects them and logs each
verdict. The evolution oracles compare centered time differences of
curvature recomputed from stored metrics against the analytic right-hand
sides assembled from the curvature package.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from . import chern, conditions
from .chern import ANTI, HOLO, HOLO_OUTER, SYMMETRIC
from .common import LogMixin, StorageError
from .flow import FlowState, Trajectory, assemble_a_eps, heat_step, step_hcf
from .grid import MetricField, Slot, TensorField, TorusGrid
from .presets import (CONFORMAL, FLAT, SYNTHETIC_DIAGONAL, SYNTHETIC_MINUS_B, b_form, build_preset, build_synthetic,
                      is_synthetic, synthetic_minus_b, torsion_oracle)

logger = logging.getLogger(__name__)

RM = "full_curvature"
RICCI = "first_ricci"
METRIC = "metric"
QUANTITIES = (RM, RICCI, METRIC)

KAHLER_TORSION_TOL = 1e-12


class ResidualRecord(BaseModel):
    name: str
    tag: str
    value: float
    tolerance: float
    passed: bool
    order: Optional[float] = None
    note: Optional[str] = None


class VerificationReport(BaseModel):
    config_hash: str = ""
    seed: int = 0
    preset: str = ""
    records: List[ResidualRecord] = []

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    @property
    def failures(self):
        return [r for r in self.records if not r.passed]


class Suite(LogMixin):
    """Collects residual records under a dotted name such as check.identities."""

    def __init__(self, name):
        self._fullname = "check." + name
        self.records = []

    def add(self, name, tag, value, tolerance, passed=None, order=None, note=None):
        value = float(value)
        if passed is None:
            passed = bool(value <= tolerance)
        record = ResidualRecord(name=name, tag=tag, value=value, tolerance=float(tolerance),
                                passed=bool(passed), order=order, note=note)
        self.records.append(record)
        if record.passed:
            self._log_info("%-28s %.3e (tol %.1e) PASS", name, value, tolerance)
        else:
            self._log_error("%-28s %.3e (tol %.1e) FAIL", name, value, tolerance)
        return record


def _sup(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def spectral_floor(metric):
    """Largest Fourier coefficient of g beyond a quarter of the resolution, relative to the largest overall."""
    grid = metric.grid
    axes = tuple(range(grid.ndim))
    spectrum = np.abs(np.fft.fftn(metric.data, axes=axes))
    freq = np.abs(np.fft.fftfreq(grid.resolution, d=1.0 / grid.resolution))
    outer = np.zeros(grid.shape, dtype=bool)
    for a in axes:
        shape = [1] * grid.ndim
        shape[a] = grid.resolution
        outer = outer | (freq >= grid.resolution // 4).reshape(shape)
    top = float(np.max(spectrum))
    if top == 0:
        return 0.0
    return float(np.max(spectrum[outer])) / top


# curvature action of [nabla_i, nabla_jbar] on one slot, indexed [..., i, j, rest]
def _commutator(t, pkg):
    ha = chern.covariant_derivative(chern.covariant_derivative(t, pkg, ANTI), pkg, HOLO).data
    ah = chern.covariant_derivative(chern.covariant_derivative(t, pkg, HOLO), pkg, ANTI).data
    nd = t.grid.ndim
    return ha - np.swapaxes(ah, nd, nd + 1)


def _predicted_commutator(t, pkg):
    rmix = pkg.Rm_mixed.data
    slot = t.signature[0]
    if slot is Slot.UPPER:
        return np.einsum('...ijkl,...k->...ijl', rmix, t.data)
    if slot is Slot.LOWER:
        return -np.einsum('...ijkl,...l->...ijk', rmix, t.data)
    if slot is Slot.UPPER_BAR:
        return -np.einsum('...jikl,...k->...ijl', np.conj(rmix), t.data)
    return np.einsum('...jikl,...l->...ijk', np.conj(rmix), t.data)


def commutator_residuals(pkg, seed=0, max_mode=1):
    """sup |[nabla_i, nabla_jbar] t - curvature action| for random one-slot fields of each type."""
    grid = pkg.grid
    rng = np.random.default_rng(seed)
    out = {}
    for slot in (Slot.UPPER, Slot.LOWER, Slot.UPPER_BAR, Slot.LOWER_BAR):
        data = grid.random_field(rng, max_mode=max_mode, extra=(grid.n,))
        t = TensorField(grid, (slot,), data)
        out["commutator_" + slot.name.lower()] = _sup(_commutator(t, pkg) - _predicted_commutator(t, pkg))
    return out


def bianchi_residuals(pkg):
    """Torsion-corrected symmetries and second Bianchi identities of the Chern curvature."""
    R = pkg.Rm_lowered.data
    t_low = pkg.T_lowered
    t_bar = t_low.conj()
    nd = pkg.grid.ndim

    def perm(a, order):
        return np.transpose(a, tuple(range(nd)) + tuple(nd + p for p in order))

    # [..., j, i, k, l] = nabla_jbar T_{i k lbar}
    dbar_t = chern.covariant_derivative(t_low, pkg, ANTI).data
    # [..., i, j, l, k] = nabla_i T_{jbar lbar k}
    d_tbar = chern.covariant_derivative(t_bar, pkg, HOLO).data
    nabla_jbar_T = perm(dbar_t, (1, 0, 2, 3))           # [i, j, k, l]
    nabla_i_Tbar = perm(d_tbar, (0, 1, 3, 2))           # [i, j, k, l]: nabla_i T_{jbar lbar k}
    nabla_k_Tbar = perm(d_tbar, (3, 1, 0, 2))           # nabla_k T_{jbar lbar i}
    nabla_lbar_T = perm(dbar_t, (1, 3, 2, 0))           # nabla_lbar T_{i k jbar}

    out = {
        "bianchi_first_holo": _sup(R - perm(R, (2, 1, 0, 3)) + nabla_jbar_T),
        "bianchi_first_anti": _sup(R - perm(R, (0, 3, 2, 1)) + nabla_i_Tbar),
        "bianchi_pair_swap": _sup(R - perm(R, (2, 3, 0, 1)) + nabla_jbar_T + nabla_k_Tbar),
        "bianchi_pair_swap_alt": _sup(R - perm(R, (2, 3, 0, 1)) + nabla_i_Tbar + nabla_lbar_T),
    }
    t_mix = pkg.T_mixed.data
    dR = chern.covariant_derivative(pkg.Rm_lowered, pkg, HOLO).data     # [p, i, j, k, l]
    dbarR = chern.covariant_derivative(pkg.Rm_lowered, pkg, ANTI).data  # [q, i, j, k, l]
    second = dR - perm(dR, (1, 0, 2, 3, 4)) + np.einsum('...pir,...rjkl->...pijkl', t_mix, R)
    # nabla_qbar R_{i jbar k lbar} - nabla_jbar R_{i qbar k lbar} + conj(T^s_{qj}) R_{i sbar k lbar}
    swapped = perm(dbarR, (2, 1, 0, 3, 4))
    second_bar = dbarR - swapped + np.einsum('...qjs,...iskl->...qijkl', np.conj(t_mix), R)
    out["bianchi_second_holo"] = _sup(second)
    out["bianchi_second_anti"] = _sup(second_bar)
    return out


def identity_residuals(pkg, seed=0, max_mode=1):
    """Every exact identity of the package as name -> sup residual."""
    grid = pkg.grid
    n = grid.n
    nd = grid.ndim
    R = pkg.Rm_lowered.data
    g = pkg.metric.data
    out = {}
    out.update(commutator_residuals(pkg, seed, max_mode))
    out.update(bianchi_residuals(pkg))
    conj_R = np.conj(np.transpose(R, tuple(range(nd)) + (nd + 1, nd, nd + 3, nd + 2)))
    out["conjugation_symmetry"] = _sup(R - conj_R)
    out["ricci_trace_vs_logdet"] = _sup(pkg.Ric_first.data - chern.first_ricci_logdet(pkg.metric).data)
    out["metric_parallel_holo"] = _sup(chern.covariant_derivative(pkg.metric.g, pkg, HOLO).data)
    out["metric_parallel_anti"] = _sup(chern.covariant_derivative(pkg.metric.g, pkg, ANTI).data)
    b_trace = np.einsum('...kl,...ijkl->...ij', pkg.g_inverse.data, b_form(g))
    out["b_trace"] = _sup(b_trace - (n + 1) * g)
    rng = np.random.default_rng(seed)
    x = grid.random_field(rng, max_mode=1, extra=(n,)) + 1.0
    y = grid.random_field(rng, max_mode=1, extra=(n,)) - 1.0
    value = np.einsum('...ijkl,...i,...j,...k,...l->...', R, x, np.conj(x), y, np.conj(y))
    out["griffiths_form_real"] = float(np.max(np.abs(value.imag)))
    return out


IDENTITY_TAGS = {
    "commutator": "commutation",
    "bianchi": "bianchi",
    "conjugation": "symmetry",
    "ricci": "ricci",
    "metric": "metric",
    "b_trace": "algebra",
    "griffiths": "symmetry",
}


def _tag(name):
    for prefix, tag in IDENTITY_TAGS.items():
        if name.startswith(prefix):
            return tag
    return "identity"


def identity_suite(pkg, tolerance=1e-7, seed=0, suite=None, max_mode=1):
    """Run identity_residuals and judge each one against `tolerance` scaled by max(1, sup |Rm|).

    Returns: the Suite holding one record per identity.
    """
    suite = Suite("identities") if suite is None else suite
    scale = max(1.0, pkg.Rm_lowered.max_abs())
    for name, value in identity_residuals(pkg, seed, max_mode).items():
        suite.add(name, _tag(name), value, tolerance * scale)
    return suite


def preset_suite(preset, pkg, tolerance=1e-7, suite=None):
    """Closed-form oracles a preset carries: torsion polynomials, Kähler flag, conformal formulas."""
    suite = Suite("identities") if suite is None else suite
    scale = max(1.0, pkg.Rm_lowered.max_abs())
    if all(("g", i, j) in preset.symbols for i in range(preset.grid.n) for j in range(preset.grid.n)):
        suite.add("torsion_vs_oracle", "torsion", _sup(pkg.T_lowered.data - torsion_oracle(preset)),
                  tolerance * scale)
    if preset.kahler:
        suite.add("kahler_torsion", "torsion", pkg.T_lowered.max_abs(), tolerance * scale)
    else:
        suite.add("kahler_torsion", "torsion", pkg.T_lowered.max_abs(), 0.0, passed=True,
                  note="non-Kähler preset; torsion reported only")
    if preset.name == CONFORMAL and preset.grid.n == 1:
        oracle = conformal_oracle(preset)
        for key, numeric in (("christoffel", pkg.Gamma.data[..., 0, 0, 0]),
                             ("curvature", pkg.Rm_lowered.data[..., 0, 0, 0, 0]),
                             ("first_ricci", pkg.Ric_first.data[..., 0, 0]),
                             ("second_ricci", pkg.Ric_second.data[..., 0, 0])):
            suite.add("conformal_" + key, "oracle", _sup(numeric - oracle[key]), tolerance * scale)
    return suite


def conformal_oracle(preset):
    """Closed forms for g = exp(u) in dimension one, w = d dbar u.

    Gamma = du, R = -exp(u) w, Ric = S = -w,
    dR/dt = -d dbar w + du dbar w + dbar u dw - w |du|^2,
    dRic/dt = -exp(-u) (d dbar w - du dbar w - dbar u dw + w |du|^2 - w^2).
    """
    if preset.name != CONFORMAL or preset.grid.n != 1:
        raise ValueError("the conformal oracle needs a dimension-one conformal preset")
    grid = preset.grid
    u = preset.symbols["u"]
    w_poly = u.d_anti(0).d_holo(0)

    def ev(p):
        return p.evaluate(grid)

    eu = np.exp(np.real(ev(u)))
    du, dbu = ev(u.d_holo(0)), ev(u.d_anti(0))
    w = ev(w_poly)
    dw, dbw = ev(w_poly.d_holo(0)), ev(w_poly.d_anti(0))
    ddw = ev(w_poly.d_anti(0).d_holo(0))
    inner = ddw - du * dbw - dbu * dw + w * du * dbu - w ** 2
    return {
        "christoffel": du,
        "curvature": -eu * w,
        "first_ricci": -w,
        "second_ricci": -w,
        "velocity": w,
        "curvature_rate": -ddw + du * dbw + dbu * dw - w * du * dbu,
        "ricci_rate": -inner / eu,
    }


@dataclass(frozen=True, eq=False)
class EvolutionTerms:
    """Right-hand side of an evolution equation, split into named terms."""
    laplacian: np.ndarray
    torsion_gradient: np.ndarray
    torsion_quadratic: np.ndarray
    curvature_quadratic: np.ndarray
    second_ricci: np.ndarray
    convention: str = SYMMETRIC

    @property
    def names(self):
        return ("laplacian", "torsion_gradient", "torsion_quadratic", "curvature_quadratic", "second_ricci")

    def total(self):
        return sum(getattr(self, name) for name in self.names)

    def as_dict(self):
        return {name: getattr(self, name) for name in self.names}


def _torsion(pkg):
    """Mixed torsion, snapped to exact zero when it is below roundoff of a Kähler metric."""
    t = pkg.T_mixed.data
    scale = max(1.0, _sup(pkg.Gamma.data))
    if _sup(t) <= KAHLER_TORSION_TOL * scale:
        return np.zeros_like(t)
    return t


def _second_ricci_raised(pkg):
    """(S_i^p as [..., i, p], S^qbar_jbar as [..., j, q])."""
    S = pkg.Ric_second.data
    ginv = pkg.g_inverse.data
    return np.einsum('...pq,...iq->...ip', ginv, S), np.einsum('...mq,...mj->...jq', ginv, S)


def rhs_rm_evolution(pkg, convention=SYMMETRIC):
    """Analytic d/dt R_{i jbar k lbar} along d/dt g = -S as EvolutionTerms.

    SYMMETRIC pairs the symmetrized Laplacian with the four half-weighted
    S terms; HOLO_OUTER pairs g^{r sbar} nabla_r nabla_sbar with the two
    antiholomorphic S terms at full weight. Both sum to the same tensor.
    """
    R = pkg.Rm_lowered.data
    rmix = pkg.Rm_mixed.data
    ginv = pkg.g_inverse.data
    T = _torsion(pkg)
    Tb = np.conj(T)
    if not np.any(T):
        zero = np.zeros_like(R)
        grad, quad_t = zero, zero.copy()
    else:
        dR = chern.covariant_derivative(pkg.Rm_lowered, pkg, HOLO).data
        dbarR = chern.covariant_derivative(pkg.Rm_lowered, pkg, ANTI).data
        grad = (np.einsum('...rs,...rip,...spjkl->...ijkl', ginv, T, dbarR, optimize=True)
                + np.einsum('...rs,...sjq,...riqkl->...ijkl', ginv, Tb, dR, optimize=True))
        quad_t = np.einsum('...rs,...rip,...sjq,...pqkl->...ijkl', ginv, T, Tb, R, optimize=True)
    quad = (np.einsum('...rs,...ijrp,...pskl->...ijkl', ginv, rmix, R, optimize=True)
            + np.einsum('...rs,...rjkp,...ispl->...ijkl', ginv, rmix, R, optimize=True)
            - np.einsum('...rs,...rjpl,...iskp->...ijkl', ginv, R, rmix, optimize=True))
    s_up, s_bar = _second_ricci_raised(pkg)
    anti = np.einsum('...jq,...iqkl->...ijkl', s_bar, R) + np.einsum('...lq,...ijkq->...ijkl', s_bar, R)
    if convention == SYMMETRIC:
        holo = np.einsum('...ip,...pjkl->...ijkl', s_up, R) + np.einsum('...kp,...ijpl->...ijkl', s_up, R)
        s_terms = -0.5 * (holo + anti)
    elif convention == HOLO_OUTER:
        s_terms = -anti
    else:
        raise ValueError("unknown Laplacian convention {0!r}".format(convention))
    lap = chern.laplacian(pkg.Rm_lowered, pkg, convention).data
    return EvolutionTerms(lap, grad, quad_t, quad, s_terms, convention)


def rhs_ricci_evolution(pkg, convention=SYMMETRIC):
    """Analytic d/dt R_{i jbar} (first Ricci) as EvolutionTerms."""
    ric = pkg.Ric_first.data
    ginv = pkg.g_inverse.data
    T = _torsion(pkg)
    Tb = np.conj(T)
    if not np.any(T):
        grad = np.zeros_like(ric)
        quad_t = np.zeros_like(ric)
    else:
        d_ric = chern.covariant_derivative(pkg.Ric_first, pkg, HOLO).data
        dbar_ric = chern.covariant_derivative(pkg.Ric_first, pkg, ANTI).data
        grad = (np.einsum('...rs,...rip,...spj->...ij', ginv, T, dbar_ric, optimize=True)
                + np.einsum('...rs,...sjq,...riq->...ij', ginv, Tb, d_ric, optimize=True))
        quad_t = np.einsum('...rs,...rip,...sjq,...pq->...ij', ginv, T, Tb, ric, optimize=True)
    rmix = pkg.Rm_mixed.data
    # R_{i jbar k}^p R_p^k with R_p^k = g^{k sbar} R_{p sbar}
    ric_up = np.einsum('...ks,...ps->...pk', ginv, ric)
    quad = np.einsum('...ijkp,...pk->...ij', rmix, ric_up)
    s_up, s_bar = _second_ricci_raised(pkg)
    anti = np.einsum('...jq,...iq->...ij', s_bar, ric)
    if convention == SYMMETRIC:
        s_terms = -0.5 * (np.einsum('...ip,...pj->...ij', s_up, ric) + anti)
    elif convention == HOLO_OUTER:
        s_terms = -anti
    else:
        raise ValueError("unknown Laplacian convention {0!r}".format(convention))
    lap = chern.laplacian(pkg.Ric_first, pkg, convention).data
    return EvolutionTerms(lap, grad, quad_t, quad, s_terms, convention)


def ricci_trace_consistency(pkg):
    """sup |g^{k lbar} RHS_Rm + S^{k lbar} R_{i jbar k lbar} - RHS_Ric|."""
    ginv = pkg.g_inverse.data
    S = pkg.Ric_second.data
    # S^{k lbar} = g^{k bbar} g^{a lbar} S_{a bbar}
    s_upper = np.einsum('...kb,...al,...ab->...kl', ginv, ginv, S)
    traced = np.einsum('...kl,...ijkl->...ij', ginv, rhs_rm_evolution(pkg).total())
    traced = traced + np.einsum('...kl,...ijkl->...ij', s_upper, pkg.Rm_lowered.data)
    return _sup(traced - rhs_ricci_evolution(pkg).total())


def record_trajectory(state, delta, t_star=None):
    """Integrate with fixed steps of `delta` and keep the states at t* - delta, t*, t* + delta.

    t* defaults to state.t + delta and must lie a whole number of steps
    past state.t.
    """
    t_star = state.t + delta if t_star is None else t_star
    steps = int(round((t_star - state.t) / delta))
    if steps < 1 or abs(state.t + steps * delta - t_star) > 1e-9 * max(1.0, t_star):
        raise ValueError("t*={0} is not a positive whole number of steps {1} past t={2}".format(
            t_star, delta, state.t))
    trajectory = Trajectory(state.grid)
    current = FlowState(state.t, state.metric, state.step_count)
    for k in range(steps + 1):
        if k >= steps - 1:
            trajectory.append(state.t + k * delta, current.metric)
        current = step_hcf(current, delta)
    trajectory.append(state.t + (steps + 1) * delta, current.metric)
    return trajectory


def _quantity(metric, which):
    if which == METRIC:
        return metric.data
    pkg = chern.chern_package(metric)
    if which == RM:
        return pkg.Rm_lowered.data
    if which == RICCI:
        return pkg.Ric_first.data
    raise ValueError("unknown quantity {0!r}; expected one of {1}".format(which, QUANTITIES))


def fd_time_derivative(trajectory, which, t_star):
    """(Q(t* + delta) - Q(t* - delta)) / (2 delta) from recomputed curvature.

    Returns: (derivative array, delta).
    """
    try:
        i = trajectory.index(t_star, tol=1e-9)
    except KeyError:
        raise ValueError("trajectory has no state at t*={0}".format(t_star))
    if i == 0 or i == len(trajectory) - 1:
        raise ValueError("trajectory does not bracket t*={0}".format(t_star))
    times = trajectory.times
    before, after = t_star - times[i - 1], times[i + 1] - t_star
    if abs(before - after) > 1e-9 * max(before, after):
        raise ValueError("states around t*={0} are not symmetric ({1} vs {2})".format(t_star, before, after))
    delta = 0.5 * (before + after)
    lhs = (_quantity(trajectory.metrics[i + 1], which) - _quantity(trajectory.metrics[i - 1], which)) / (2 * delta)
    return lhs, delta


@dataclass(frozen=True, eq=False)
class EvolutionResidual:
    which: str
    lhs: np.ndarray
    rhs: np.ndarray
    sup: float
    mean: float
    delta: float
    resolution: int
    convention: str = SYMMETRIC
    terms: Dict[str, np.ndarray] = field(default_factory=dict)


def evolution_residual(trajectory, which, t_star, convention=SYMMETRIC):
    """Compare fd_time_derivative with the analytic right-hand side at t*."""
    lhs, delta = fd_time_derivative(trajectory, which, t_star)
    metric = trajectory.metrics[trajectory.index(t_star, tol=1e-9)]
    if which == METRIC:
        rhs = -chern.second_ricci_field(metric).data
        terms = {}
    else:
        pkg = chern.chern_package(metric)
        assembled = rhs_rm_evolution(pkg, convention) if which == RM else rhs_ricci_evolution(pkg, convention)
        rhs = assembled.total()
        terms = assembled.as_dict()
    diff = np.abs(lhs - rhs)
    return EvolutionResidual(which, lhs, rhs, float(np.max(diff)), float(np.mean(diff)), delta,
                             trajectory.grid.resolution, convention, terms)


@dataclass(frozen=True, eq=False)
class EvolutionStudy:
    """Residuals over decreasing delta at a common t*."""
    which: str
    convention: str
    residuals: List[EvolutionResidual]

    @property
    def deltas(self):
        return [r.delta for r in self.residuals]

    @property
    def sups(self):
        return [r.sup for r in self.residuals]

    def orders(self):
        """Observed orders between consecutive delta levels."""
        out = []
        for a, b in zip(self.residuals, self.residuals[1:]):
            if a.sup > 0 and b.sup > 0:
                out.append(math.log(a.sup / b.sup) / math.log(a.delta / b.delta))
            else:
                out.append(None)
        return out

    def constant(self):
        """max residual / delta^2, the C of tol = C (delta^2 + floor)."""
        return max(r.sup / r.delta ** 2 for r in self.residuals)


def evolution_study(state, which=RM, deltas=(1e-3, 5e-4, 2.5e-4), convention=SYMMETRIC, t_star=None):
    """Run evolution_residual for every delta at t* = state.t + max(deltas) unless given."""
    deltas = sorted(deltas, reverse=True)
    t_star = state.t + deltas[0] if t_star is None else t_star
    residuals = []
    for delta in deltas:
        trajectory = record_trajectory(state, delta, t_star)
        residuals.append(evolution_residual(trajectory, which, t_star, convention))
    study = EvolutionStudy(which, convention, residuals)
    logger.info("Evolution study %s (%s): residuals %s, orders %s, C=%.3g", which, convention,
                ", ".join("{0:.2e}".format(s) for s in study.sups),
                ", ".join("-" if o is None else "{0:.2f}".format(o) for o in study.orders()),
                study.constant())
    return study


def evolution_suite(state, deltas=(1e-3, 5e-4, 2.5e-4), tolerance=1e-7, evolution_tolerance=1e-5, suite=None,
                    conventions=(SYMMETRIC, HOLO_OUTER)):
    """Order-2 decay of both evolution oracles, for both Laplacian conventions.

    A study passes when its smallest-delta residual is below
    `evolution_tolerance` times the curvature scale and either the last
    observed order is at least 1.5 or the residual already sits below the
    floor `tolerance` times the curvature scale. The measured C of
    C delta^2 is reported in the note only.
    """
    suite = Suite("evolution") if suite is None else suite
    scale = max(1.0, chern.chern_package(state.metric).Rm_lowered.max_abs())
    floor = tolerance * scale
    limit = evolution_tolerance * scale
    for which in (RM, RICCI):
        for convention in conventions:
            study = evolution_study(state, which, deltas, convention)
            orders = [o for o in study.orders() if o is not None]
            last = study.residuals[-1]
            order = orders[-1] if orders else None
            converging = order is not None and order >= 1.5
            passed = last.sup <= limit and (converging or last.sup <= floor)
            suite.add("{0}_{1}".format(which, convention), "evolution", last.sup, limit, passed=passed,
                      order=order, note="C={0:.3g} floor={1:.3g}".format(study.constant(), floor))
    pkg = chern.chern_package(state.metric)
    suite.add("ricci_trace_consistency", "evolution", ricci_trace_consistency(pkg), floor)
    return suite


def conformal_evolution_suite(preset, tolerance=1e-6, suite=None):
    """Dimension-one conformal oracles for the flow velocity and both curvature rates."""
    suite = Suite("evolution") if suite is None else suite
    pkg = chern.chern_package(preset.metric)
    oracle = conformal_oracle(preset)
    rm = rhs_rm_evolution(pkg).total()[..., 0, 0, 0, 0]
    ric = rhs_ricci_evolution(pkg).total()[..., 0, 0]
    velocity = -pkg.Ric_second.data[..., 0, 0]
    scale = max(1.0, _sup(oracle["curvature_rate"]))
    suite.add("conformal_velocity", "oracle", _sup(velocity - oracle["velocity"]), tolerance * scale)
    suite.add("conformal_curvature_rate", "oracle", _sup(rm - oracle["curvature_rate"]), tolerance * scale)
    suite.add("conformal_ricci_rate", "oracle", _sup(ric - oracle["ricci_rate"]), tolerance * scale)
    return suite


def conditions_suite(rm, g, epsilon=0.01, samples=10000, seed=0, tolerance=1e-8, expected=None,
                     suite=None, points=None):
    """Condition algebra on pointwise data.

    `expected` may carry closed-form values: "griffiths" (kappa hat) and
    "ricci" (the uniform Ricci eigenvalue).
    """
    suite = Suite("conditions") if suite is None else suite
    expected = expected or {}
    rm = np.asarray(rm)
    g = np.broadcast_to(np.asarray(g), rm.shape[:-4] + np.shape(g)[-2:])
    griffiths = conditions.griffiths_extremum(rm, g, seed=seed, points=points, samples=min(samples, 512))
    spectrum = conditions.ricci_spectrum(np.einsum('...kl,...ijkl->...ij', conditions.inverse_metric(g), rm), g,
                                         points)
    summary = conditions.classify(griffiths, spectrum, tolerance)
    suite.add("griffiths_nonpositive", "griffiths", griffiths.global_max, tolerance)
    suite.add("griffiths_converged", "griffiths", 0.0 if griffiths.all_converged else 1.0, 0.0,
              passed=True, note="fixed point reached" if griffiths.all_converged else "iteration cap hit")
    if "griffiths" in expected:
        suite.add("griffiths_closed_form", "griffiths", abs(griffiths.global_max - expected["griffiths"]), tolerance)
    if "ricci" in expected:
        suite.add("ricci_closed_form", "ricci", float(np.max(np.abs(spectrum.eigenvalues - expected["ricci"]))),
                  tolerance)
    shift = conditions.eps_shift(rm, g, epsilon)
    pinch = conditions.pinch_margin(shift, 0.0, 0.0, samples, seed, points)
    applicable = summary.griffiths_nonpositive and epsilon > 0
    note = None if applicable else "Griffiths condition fails; margin reported only"
    passed = pinch.holds if applicable else True
    if applicable and rm.shape[-1] == 1:
        # a single direction makes u = v = x, where the margin vanishes identically
        scale = max(1.0, float(np.max(np.abs(shift.R_eps))) ** 2)
        passed = bool(np.all(pinch.ricci_negative)) and pinch.min_margin >= -tolerance * scale
        note = "dimension one: margin saturates at zero"
    suite.add("pinch_margin_positive", "pinching", -pinch.min_margin, 0.0, passed=passed, note=note)
    zero = conditions.eps_shift(rm, g, 0.0)
    witness = _diagonal_cs_margin(zero, seed)
    suite.add("cauchy_schwarz_equality", "pinching", witness, 1e-9)
    initial = conditions.initial_conditions(rm, g, epsilon, min(samples, 1024), seed, points)
    suite.add("initial_ricci_margin", "pinching", initial.ricci_margin, 0.0,
              passed=(initial.ricci_below if applicable else True))
    suite.add("polarization_ratio", "pinching", conditions.polarization_ratio(shift, 256, seed, points), 0.0,
              passed=True, note="empirical constant, logged only")
    return suite, summary


def _diagonal_cs_margin(shift, seed=0, count=16):
    """max |cs margin| over random triples u = v = x; exactly zero in exact arithmetic."""
    rm = shift.R_eps.reshape((-1,) + shift.R_eps.shape[-4:])
    g = np.broadcast_to(shift.g, shift.R_eps.shape[:-4] + shift.g.shape[-2:]).reshape((-1,) + shift.g.shape[-2:])
    rng = np.random.default_rng(seed)
    u = conditions.random_unit(rng, (count, rm.shape[0]), g)
    value = conditions.griffiths_form(rm, u, u)
    cs = value * value - np.abs(np.einsum('...ijkl,...i,...j,...k,...l->...', rm, u, np.conj(u), u, np.conj(u))) ** 2
    return float(np.max(np.abs(cs)))


def heat_suite(grid, tolerance=1e-10, suite=None):
    """Closed-form checks of the heat companion on flat metrics and of A^eps arithmetic."""
    suite = Suite("heat") if suite is None else suite
    flat = MetricField.flat(grid)
    phi = np.ones(grid.shape)
    suite.add("heat_constant_stationary", "heat", _sup(heat_step(phi, flat, 0.01) - 1.0), 1e-12)
    x = grid.coordinates()[0]
    phi = 1.0 + 0.5 * np.cos(x)
    dt, steps = 0.01, 10
    for _ in range(steps):
        phi = heat_step(phi, flat, dt)
    exact = 1.0 + 0.5 * np.exp(-0.25 * dt * steps) * np.cos(x)
    suite.add("heat_single_mode_decay", "heat", _sup(phi - exact), 1e-8)
    synth = synthetic_minus_b(grid.n)
    ric = np.einsum('kl,ijkl->ij', np.linalg.inv(synth.g).T, synth.rm)
    a = assemble_a_eps(ric, synth.g, 0.5, 0.0, 1.0, 1.0, 0.1)
    expected = (-(grid.n + 1) + 0.25 - 0.1) * synth.g
    suite.add("a_eps_arithmetic", "heat", _sup(a - expected), tolerance)
    return suite


def synthetic_expectations(tensors):
    """Closed-form Griffiths maximum and Ricci eigenvalue of a synthetic tensor, when known."""
    n = tensors.n
    if tensors.name == SYNTHETIC_MINUS_B:
        return {"griffiths": -2.0 if n == 1 else -1.0, "ricci": -(n + 1.0)}
    if tensors.name == SYNTHETIC_DIAGONAL:
        c = np.real(np.einsum('iikk->ik', tensors.rm))
        return {"griffiths": float(np.max(c))}
    return {}


def _advance(state, t_target, dt):
    """Fixed-step flow from state.t to t_target (dt shrunk to land exactly)."""
    if t_target <= state.t:
        return state
    steps = int(math.ceil((t_target - state.t) / dt - 1e-12))
    h = (t_target - state.t) / steps
    for _ in range(steps):
        state = step_hcf(state, h)
    return state


def run_checks(config, which=None, config_hash=""):
    """Run the selected suites for a configuration.

    Returns: VerificationReport; the caller decides what a failure means.
    """
    cc = config.checks
    which = list(cc.which if which is None else which)
    gc, pc = config.grid, config.preset
    report = VerificationReport(config_hash=config_hash, seed=config.seed, preset=pc.name)
    grid = TorusGrid(gc.n, gc.resolution, gc.periods, gc.derivative_mode)
    seed = config.seed
    if is_synthetic(pc.name):
        tensors = build_synthetic(pc.name, gc.n)
        skipped = [w for w in which if w not in ("conditions", "heat")]
        if skipped:
            logger.warning("Synthetic preset %s bypasses the grid; skipping %s", pc.name, ", ".join(skipped))
        if "conditions" in which:
            suite, _ = conditions_suite(tensors.rm, tensors.g, config.monitors.epsilon, cc.condition_samples, seed,
                                        expected=synthetic_expectations(tensors))
            report.records.extend(suite.records)
        if "heat" in which:
            report.records.extend(heat_suite(grid).records)
        return report

    preset = build_preset(pc.name, grid, amplitude=pc.amplitude, max_mode=pc.max_mode, seed=config.preset_seed)
    pkg = chern.chern_package(preset.metric)
    tolerance = cc.flat_tolerance if preset.name == FLAT else cc.tolerance
    if "identities" in which:
        suite = Suite("identities")
        if cc.spectral_tail:
            floor = spectral_floor(preset.metric)
            suite.add("spectral_tail", "resolution", floor, tolerance, passed=True,
                      note="relative Fourier energy above a quarter of the resolution")
        identity_suite(pkg, tolerance, seed, suite, max_mode=cc.field_modes)
        preset_suite(preset, pkg, tolerance, suite)
        report.records.extend(suite.records)
    if "evolution" in which:
        suite = Suite("evolution")
        state = _advance(FlowState(0.0, preset.metric), cc.evolution_t, min(cc.deltas))
        evolution_suite(state, cc.deltas, tolerance, cc.evolution_tolerance, suite)
        if preset.name == CONFORMAL and grid.n == 1 and state.t == 0.0:
            conformal_evolution_suite(preset, max(tolerance, 1e-8), suite)
        report.records.extend(suite.records)
    if "conditions" in which:
        mc = config.monitors
        points = conditions.select_points(grid.shape, mc.pinch_points, seed)
        suite, summary = conditions_suite(pkg.Rm_lowered.data, preset.metric.data, mc.epsilon,
                                          cc.condition_samples, seed, mc.nonpositive_tol, points=points)
        logger.info("Conditions: Griffiths nonpositive %s (max %.4g), Ricci nonpositive %s (max %.4g)",
                    summary.griffiths_nonpositive, summary.griffiths_max,
                    summary.ricci_nonpositive, summary.ricci_max)
        report.records.extend(suite.records)
    if "heat" in which:
        report.records.extend(heat_suite(grid).records)
    return report


def write_report(report, directory):
    """Write verification.json under `directory`.

    Returns: the path.
    """
    path = os.path.join(directory, "verification.json")
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(report.model_dump_json(indent=2))
    except OSError as err:
        raise StorageError("cannot write verification report {0}: {1}".format(path, err))
    logger.info("Verification report written to %s (%d records, %d failed)",
                path, len(report.records), len(report.failures))
    return path
