"""Time integration of d/dt g = -S(g) with its monitors.

The stepper is classical RK4 on the metric array, followed by
re-symmetrization and a positivity check. The step size follows
dt = safety * c1 / K_now, clipped to [min_dt, max_dt] and to the explicit
stability limit of the parabolic operator. A scalar heat equation
d/dt phi = g^{r sbar} d_r d_sbar phi can be carried along to drive the
strong maximum principle monitor.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from . import chern, conditions
from .checkpoint import CheckpointData, MonitorSnapshot, save_checkpoint
from .conditions import ConditionSummary
from .common import LogMixin, NumericalError, OverflowFlowError, PositivityError, StorageError
from .grid import FD4, MetricField, TorusGrid
from .presets import build_preset, heat_bump
from .recorder import default_recorder

logger = logging.getLogger(__name__)

# RK4 is stable on the negative real axis up to about 2.785
RK4_STABILITY = 2.5
HEAT_NEGATIVE_TOL = 1e-12


def velocity(metric):
    """-S(g) as an array."""
    return -chern.second_ricci_field(metric).data


@dataclass(eq=False)
class FlowState:
    """Metric at time t; the curvature package is computed on demand."""
    t: float
    metric: MetricField
    step_count: int = 0
    phi: Optional[np.ndarray] = None
    report: Optional["CurvatureReport"] = None
    _pkg: Optional[chern.ChernPackage] = field(default=None, repr=False)

    @property
    def grid(self):
        return self.metric.grid

    @property
    def pkg(self):
        if self._pkg is None:
            self._pkg = chern.chern_package(self.metric)
        return self._pkg

    @classmethod
    def from_checkpoint(cls, data):
        metric = MetricField.from_array(data.grid, data.metric)
        return cls(data.t, metric, data.step, None if data.phi is None else np.array(data.phi))


def check_metric(metric, t=None):
    """Abort on non-finite entries or loss of positive definiteness."""
    if not np.all(np.isfinite(metric.data)):
        bad = np.argwhere(~np.isfinite(metric.data))[0]
        raise OverflowFlowError("non-finite metric entry at grid point {0} (t={1})".format(
            tuple(int(i) for i in bad[:metric.grid.ndim]), t))
    value, point = metric.min_eigenvalue()
    if not value > 0:
        raise PositivityError(
            "metric lost positivity at grid point {0}: minimum eigenvalue {1:.6g} (t={2})".format(point, value, t),
            point=point, eigenvalue=value, t=t)


def step_hcf(state, dt):
    """One RK4 step of d/dt g = -S(g); every stage recomputes S."""
    if not dt > 0:
        raise ValueError("dt must be positive, got {0}".format(dt))
    grid = state.grid
    g0 = state.metric.data

    def stage(g):
        return velocity(MetricField.from_array(grid, g))

    k1 = stage(g0)
    k2 = stage(g0 + 0.5 * dt * k1)
    k3 = stage(g0 + 0.5 * dt * k2)
    k4 = stage(g0 + dt * k3)
    g1 = g0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    metric = MetricField.from_array(grid, g1).symmetrized()
    t = state.t + dt
    check_metric(metric, t)
    return FlowState(t, metric, state.step_count + 1, state.phi)


def max_wavenumber(grid, axis):
    """Largest |symbol| of the first derivative along `axis`."""
    h = grid.spacing[axis]
    if grid.derivative_mode == FD4:
        return 1.3722 / h
    return (grid.resolution // 2 - 1) * 2 * math.pi / grid.periods[axis]


def stiffness(metric):
    """Spectral radius estimate of g^{r sbar} d_r d_sbar on the grid."""
    grid = metric.grid
    top = 1.0 / float(np.min(np.linalg.eigvalsh(metric.data)[..., 0]))
    return 0.25 * top * sum(max_wavenumber(grid, a) ** 2 for a in range(grid.ndim))


@dataclass
class StepController:
    """dt = safety * c1 / K_now clipped to [min_dt, max_dt] and the stiffness limit."""
    c1: float = 0.5
    safety: float = 0.5
    max_dt: float = 0.05
    min_dt: float = 1e-8
    stiffness_cap: bool = True
    fixed_dt: Optional[float] = None

    def propose(self, K_now, metric=None, remaining=None):
        if self.fixed_dt is not None:
            dt = self.fixed_dt
        else:
            dt = self.max_dt if K_now <= 0 else min(self.max_dt, self.safety * self.c1 / K_now)
            if self.stiffness_cap and metric is not None:
                dt = min(dt, RK4_STABILITY / stiffness(metric))
        if remaining is not None and remaining < dt:
            return remaining
        if dt < self.min_dt:
            raise NumericalError("step size {0:.3g} fell below min_dt {1:.3g} (K_now={2:.4g})".format(
                dt, self.min_dt, K_now))
        return dt

    def respects_rule(self, dt, K_now):
        return dt * K_now <= self.safety * self.c1 * (1 + 1e-12)


class DoublingReport(BaseModel):
    K0: float
    window: float
    holds: bool
    max_ratio: float
    c0: float
    envelope_holds: bool
    envelope_factor: float
    envelope_within_factor_2: bool
    pde_residual_max: Optional[float] = None


class DoublingMonitor:
    """Sup-norm series for the doubling-time estimate.

    The envelope is (K0^{-1} - c0 (t - t0))^{-2} with t0 the first recorded
    time and c0 >= 0 the smallest constant that makes it dominate F inside
    the window t - t0 <= c1 / K0. Since F <= K^2 pointwise the envelope
    starts at or above sup F(t0); `envelope_factor` is max(bound / F) over
    the window and measures how far it overshoots.
    """

    def __init__(self, K0, c1):
        self.K0 = K0
        self.c1 = c1
        self.times = []
        self.K_series = []
        self.F_series = []

    @property
    def window(self):
        return self.c1 / self.K0 if self.K0 > 0 else math.inf

    def record(self, t, K, F):
        if self.times and t <= self.times[-1]:
            raise ValueError("doubling series must advance in time")
        self.times.append(float(t))
        self.K_series.append(float(K))
        self.F_series.append(max(float(F), 0.0))

    def rows(self):
        """(t, K, F) table of the recorded series."""
        return np.array([self.times, self.K_series, self.F_series], dtype=float).T.reshape(-1, 3)

    @classmethod
    def from_rows(cls, K0, c1, rows):
        monitor = cls(K0, c1)
        for t, K, F in np.asarray(rows, dtype=float).reshape(-1, 3):
            monitor.record(t, K, F)
        return monitor

    def _inside(self):
        t0 = self.times[0] if self.times else 0.0
        return [(t, K, F) for t, K, F in zip(self.times, self.K_series, self.F_series)
                if t - t0 <= self.window * (1 + 1e-12)]

    def holds(self):
        return all(K <= 2 * self.K0 * (1 + 1e-12) for _, K, _ in self._inside())

    def max_ratio(self):
        inside = [K for _, K, _ in self._inside()]
        return max(inside) / self.K0 if self.K0 > 0 and inside else 0.0

    def fit_c0(self):
        if self.K0 <= 0 or not self.times:
            return 0.0
        t0 = self.times[0]
        best = 0.0
        for t, _, F in self._inside():
            if t > t0 and F > 0:
                best = max(best, (1.0 / self.K0 - F ** -0.5) / (t - t0))
        return best

    def bound(self, t, c0=None):
        """(K0^{-1} - c0 (t - t0))^{-2}, infinite past the blow-up time."""
        if self.K0 <= 0:
            return 0.0
        c0 = self.fit_c0() if c0 is None else c0
        t0 = self.times[0] if self.times else 0.0
        gap = 1.0 / self.K0 - c0 * (t - t0)
        return math.inf if gap <= 0 else gap ** -2

    def envelope_factor(self, c0=None):
        """max(bound / F) over the window, ignoring F = 0."""
        c0 = self.fit_c0() if c0 is None else c0
        ratios = [self.bound(t, c0) / F for t, _, F in self._inside() if F > 0]
        return max(ratios) if ratios else 1.0

    def report(self, pde_residual_max=None):
        c0 = self.fit_c0()
        inside = self._inside()
        envelope = all(F <= self.bound(t, c0) * (1 + 1e-9) for t, _, F in inside)
        factor = self.envelope_factor(c0)
        return DoublingReport(
            K0=self.K0, window=self.window, holds=self.holds(), max_ratio=self.max_ratio(),
            c0=c0, envelope_holds=envelope, envelope_factor=factor, envelope_within_factor_2=factor <= 2.0,
            pde_residual_max=pde_residual_max)


class Trajectory:
    """Recorded metrics (and heat fields) in increasing time."""

    def __init__(self, grid):
        self.grid = grid
        self.times = []
        self.metrics = []
        self.phis = []

    def append(self, t, metric, phi=None):
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(float(t))
        self.metrics.append(metric)
        self.phis.append(phi)

    def __len__(self):
        return len(self.times)

    def index(self, t, tol=1e-12):
        for i, s in enumerate(self.times):
            if abs(s - t) <= tol * max(1.0, abs(t)):
                return i
        raise KeyError(t)


def doubling_check(trajectory, c1=0.5, K0=None):
    """Recompute sup norms along a trajectory and judge the doubling estimate.

    The pointwise residual (d/dt - Delta) F - 2 c0 F^{3/2} uses centered
    differences at interior states and is reported, never asserted.
    """
    if len(trajectory) < 3:
        raise ValueError("doubling_check needs at least 3 recorded states, got {0}".format(len(trajectory)))
    norms = [chern.tensor_norms(chern.chern_package(m)) for m in trajectory.metrics]
    K0 = norms[0].K_sup if K0 is None else K0
    monitor = DoublingMonitor(K0, c1)
    for t, nm in zip(trajectory.times, norms):
        monitor.record(t, nm.K_sup, nm.F_sup)
    c0 = monitor.fit_c0()
    grid = trajectory.grid
    worst = -math.inf
    for i in range(1, len(trajectory) - 1):
        span = trajectory.times[i + 1] - trajectory.times[i - 1]
        dF = (norms[i + 1].F - norms[i - 1].F) / span
        ginv = trajectory.metrics[i].inverse().data
        lap = np.real(grid.laplacian(norms[i].F.astype(complex), ginv))
        residual = dF - lap - 2 * c0 * norms[i].F ** 1.5
        worst = max(worst, float(np.max(residual)))
    report = monitor.report(pde_residual_max=worst)
    logger.info("Doubling check: K0=%.4g window=%.4g holds=%s c0=%.4g pde residual max=%.3g",
                report.K0, report.window, report.holds, report.c0, worst)
    return report


def heat_rhs(phi, ginv, grid):
    return np.real(grid.laplacian(phi.astype(complex), ginv))


def heat_step(phi, metric, dt, metric_next=None):
    """One RK4 step of d/dt phi = g^{r sbar} d_r d_sbar phi.

    The inverse metric is interpolated linearly between `metric` and
    `metric_next` across the stages. Steps beyond the stability limit are
    subcycled.
    """
    grid = metric.grid
    g0 = metric.inverse().data
    g1 = g0 if metric_next is None else metric_next.inverse().data
    limit = RK4_STABILITY / max(stiffness(metric), stiffness(metric_next or metric))
    count = max(1, int(math.ceil(dt / limit - 1e-12)))
    h = dt / count
    for sub in range(count):
        a = sub / count

        def ginv(c):
            s = a + c / count
            return g0 if g1 is g0 else (1 - s) * g0 + s * g1

        k1 = heat_rhs(phi, ginv(0.0), grid)
        k2 = heat_rhs(phi + 0.5 * h * k1, ginv(0.5), grid)
        k3 = heat_rhs(phi + 0.5 * h * k2, ginv(0.5), grid)
        k4 = heat_rhs(phi + h * k3, ginv(1.0), grid)
        phi = phi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    low = float(np.min(phi))
    if not np.all(np.isfinite(phi)):
        raise OverflowFlowError("heat solution became non-finite")
    if low < -HEAT_NEGATIVE_TOL:
        point = tuple(int(i) for i in np.unravel_index(np.argmin(phi), phi.shape))
        raise PositivityError("heat solution went negative ({0:.3g}) at grid point {1}; dt too large".format(low, point),
                              point=point, eigenvalue=low)
    return phi


def assemble_a_eps(ric, g, phi, t, k, B, eps):
    """A^eps = Ric + exp(-k t) phi^2 g - eps exp(B t) g for arrays [..., n, n]."""
    ric = np.asarray(getattr(ric, "data", ric))
    g = np.asarray(getattr(g, "data", g))
    phi = np.asarray(phi, dtype=float)
    weight = np.exp(-k * t) * phi ** 2 - eps * np.exp(B * t)
    return ric + np.asarray(weight)[..., None, None] * g


def smp_value(ric, g, phi, t, k, B, eps):
    """Largest generalized eigenvalue of A^eps over all points."""
    ric = np.asarray(getattr(ric, "data", ric))
    g = np.asarray(getattr(g, "data", g))
    a = assemble_a_eps(ric, g, phi, t, k, B, eps)
    return conditions.ricci_spectrum(a, np.broadcast_to(g, a.shape)).max_value


class SmpMonitor(LogMixin):
    """Tracks max eig A^eps along a run.

    Assertion mode is on only when the initial data satisfies
    Ric + phi0^2 g <= 0; violations are then logged as errors.
    """
    _fullname = "run.smp"

    def __init__(self, phi0, k, B, eps, tol=1e-8):
        self.phi0 = np.asarray(phi0, dtype=float)
        self.k = k
        self.B = B
        self.eps = eps
        self.tol = tol
        self.assertion_mode = False
        self.times = []
        self.values = []
        self.violated_at = None

    def arm(self, ric, g):
        """Decide the assertion mode from the hypothesis at t = 0."""
        hypothesis = smp_value(ric, g, self.phi0, 0.0, 0.0, 0.0, 0.0)
        self.assertion_mode = hypothesis <= self.tol
        self._log_info("Heat hypothesis max eig(Ric + phi0^2 g) = %.4g; assertion mode %s",
                       hypothesis, "on" if self.assertion_mode else "off")
        return self.assertion_mode

    def check(self, state, phi):
        if phi is None or phi.shape != state.grid.shape:
            raise ValueError("heat field is not synchronized with the flow state")
        value = smp_value(state.pkg.Ric_first, state.metric, phi, state.t, self.k, self.B, self.eps)
        self.times.append(state.t)
        self.values.append(value)
        if self.assertion_mode and value > self.tol and self.violated_at is None:
            self.violated_at = state.t
            self._log_error("max eig A^eps = %.4g > 0 at t=%.6g", value, state.t)
        return value


def smp_monitor(state, phi, k, B, eps):
    """max eig A^eps for one synchronized (state, phi) pair."""
    if phi is None or phi.shape != state.grid.shape:
        raise ValueError("heat field is not synchronized with the flow state")
    return smp_value(state.pkg.Ric_first, state.metric, phi, state.t, k, B, eps)


@dataclass(eq=False)
class CurvatureReport:
    """Monitor readings of one state; attribute names double as CSV columns."""
    step: int
    t: float
    dt: float
    K: float
    rm_sup: float
    t_sq_sup: float
    nabla_t_sup: float
    F_sup: float
    ricci_max: float
    ricci_min_of_max: float
    griffiths_max: float
    kappa_max: float
    pinch_margin: float
    pinch_margin_eps0: float
    cs_margin: float
    ricci_eps_margin: float
    kahler_torsion: float
    polarization: float
    phi_min: float = float('nan')
    smp_max_eig: float = float('nan')
    conditions: ConditionSummary = None

    @property
    def monitored_hold(self):
        """Griffiths and Ricci nonpositive with the shifted pinching intact."""
        c = self.conditions
        return bool(c is not None and c.griffiths_nonpositive and c.ricci_nonpositive
                    and self.pinch_margin > 0 and self.ricci_eps_margin < 0)


def observe(state, monitors, seed=0, K_time=None):
    """Build the CurvatureReport of a state."""
    pkg = state.pkg
    norms = chern.tensor_norms(pkg)
    rm, g = pkg.Rm_lowered.data, state.metric.data
    shape = state.grid.shape
    gpts = conditions.select_points(shape, monitors.griffiths_points, seed)
    ppts = conditions.select_points(shape, monitors.pinch_points, seed)
    griffiths = conditions.griffiths_extremum(rm, g, monitors.restarts, monitors.max_iter, seed=seed,
                                              points=gpts, with_kappa=True)
    spectrum = conditions.ricci_spectrum(pkg.Ric_first, g)
    summary = conditions.classify(griffiths, spectrum, monitors.nonpositive_tol)
    t = state.t if K_time is None else K_time
    shift = conditions.eps_shift(rm, g, monitors.epsilon)
    pinch = conditions.pinch_margin(shift, monitors.K, t, monitors.pinch_samples, seed, ppts)
    pinch0 = conditions.pinch_margin(conditions.eps_shift(rm, g, 0.0), monitors.K, t,
                                     monitors.pinch_samples, seed, ppts)
    return CurvatureReport(
        step=state.step_count, t=state.t, dt=float('nan'), K=norms.K_sup,
        rm_sup=norms.rm_sup, t_sq_sup=norms.t_sq_sup, nabla_t_sup=norms.nabla_t_sup, F_sup=norms.F_sup,
        ricci_max=spectrum.max_value, ricci_min_of_max=spectrum.min_of_max,
        griffiths_max=griffiths.global_max, kappa_max=float(np.max(griffiths.kappa_bound)),
        pinch_margin=pinch.min_margin, pinch_margin_eps0=pinch0.min_margin, cs_margin=pinch.min_cs_margin,
        ricci_eps_margin=conditions.ricci_eps_margin(pkg.Ric_first, g, monitors.epsilon, monitors.K, t),
        kahler_torsion=pkg.T_lowered.max_abs(),
        polarization=conditions.polarization_ratio(shift, monitors.polarization_samples, seed, ppts),
        conditions=summary,
    )


class RunSummary(BaseModel):
    name: str
    config_hash: str
    seed: int
    t_final: float
    steps: int
    abort_reason: Optional[str] = None
    exit_code: int = 0
    K0: float
    doubling: Optional[DoublingReport] = None
    conditions: Optional[ConditionSummary] = None
    conditions_held_until: Optional[float] = None
    smp_assertion_mode: bool = False
    smp_violated_at: Optional[float] = None
    kahler_torsion_max: float = 0.0
    dt_rule_respected: bool = True
    checkpoints: List[str] = []


@dataclass
class FlowResult:
    state: FlowState
    reports: list
    summary: RunSummary
    trajectory: Optional[Trajectory] = None


class FlowRunner(LogMixin):
    """Drives step_hcf, the monitors, the recorder and the checkpoints of one run."""
    _fullname = "run.flow"

    def __init__(self, config, state, config_hash="", K0=None, directory=None, keep_reports=True, monitors=None):
        self.config = config
        self.state = state
        self.config_hash = config_hash
        self.directory = directory
        self.keep_reports = keep_reports
        fc = config.flow
        self.controller = StepController(fc.c1, fc.safety, fc.max_dt, fc.min_dt, fc.stiffness_cap, fc.dt)
        self.K0 = K0
        self.reports = []
        self.trajectory = Trajectory(state.grid) if fc.trajectory_every else None
        self.recorder = None
        self.smp = None
        self.doubling = None
        self.checkpoints = []
        self._executor = None
        self._pending = []
        self._held_until = None
        self._held_broken = False
        self._dt_ok = True
        self._torsion_max = 0.0
        self._restored = monitors

    @property
    def t_end(self):
        fc = self.config.flow
        if fc.t_end_k0 is not None:
            return fc.t_end_k0 / self.K0 if self.K0 > 0 else (fc.t_end or 1.0)
        return fc.t_end if fc.t_end is not None else 1.0

    def _prepare(self, resumed):
        mc = self.config.monitors
        if self.K0 is None:
            self.K0 = chern.tensor_norms(self.state.pkg).K_sup
        self._log_info("K0 = %.6g, horizon t_end = %.6g", self.K0, self.t_end)
        restored = self._restored if resumed else None
        if restored is not None:
            self.doubling = DoublingMonitor.from_rows(self.K0, self.config.flow.c1, restored.doubling)
            self._held_until = restored.held_until
            self._held_broken = restored.held_broken
            self._torsion_max = restored.torsion_max
            self._dt_ok = restored.dt_rule_respected
        else:
            if resumed:
                self._log_warning("Checkpoint carries no monitor state; the summary covers the resumed part only")
            self.doubling = DoublingMonitor(self.K0, self.config.flow.c1)
        if mc.heat:
            if self.state.phi is None:
                params = {"scale": mc.bump_scale}
                params.update({"power": mc.bump_power} if mc.bump == "cosine" else {"radius": mc.bump_radius})
                self.state.phi = heat_bump(mc.bump, self.state.grid, **params)
            k = mc.heat_k if mc.heat_k is not None else mc.heat_k_factor * self.K0
            self.smp = SmpMonitor(self.state.phi, k, mc.heat_B, mc.heat_eps, mc.nonpositive_tol)
            if restored is not None:
                self.smp.assertion_mode = restored.smp_assertion_mode
                self.smp.violated_at = restored.smp_violated_at
            elif not resumed:
                self.smp.arm(self.state.pkg.Ric_first, self.state.metric)
        if self.directory is not None and self.config.output.csv:
            self.recorder = default_recorder(os.path.join(self.directory, "timeseries.csv"),
                                             self.config_hash, self.config.seed)
            self.recorder.open(truncate_from=self.state.step_count + 1 if resumed else None)
        if self.directory is not None and self.config.output.checkpoints:
            self._executor = ThreadPoolExecutor(max_workers=1)

    def _observe(self, dt, record=True):
        """Build the report of the current state.

        With record=False the report is built but the run monitors are left
        alone; a resumed run uses this for the step its checkpoint already holds.
        """
        mc = self.config.monitors
        state = self.state
        report = observe(state, mc, self.config.seed)
        report.dt = dt
        if state.phi is not None:
            report.phi_min = float(np.min(state.phi))
        if self.smp is not None:
            if record:
                report.smp_max_eig = self.smp.check(state, state.phi)
            else:
                report.smp_max_eig = smp_monitor(state, state.phi, self.smp.k, self.smp.B, self.smp.eps)
        state.report = report
        if not record:
            return report
        self.doubling.record(state.t, report.K, report.F_sup)
        self._torsion_max = max(self._torsion_max, report.kahler_torsion)
        if report.monitored_hold and not self._held_broken:
            self._held_until = state.t
        else:
            self._held_broken = True
        self._log_info("t=%.6g shifted Ricci margin %.4g, polarization ratio %.4g, torsion %.3g",
                       state.t, report.ricci_eps_margin, report.polarization, report.kahler_torsion)
        return report

    def _snapshot(self):
        state = self.state
        path = os.path.join(self.directory, "checkpoints", "checkpoint-{0:08d}.hcfc".format(state.step_count))
        data = CheckpointData.from_state(state, self.config, self.config_hash, self.K0, self.monitor_snapshot())
        self._pending.append(self._executor.submit(save_checkpoint, path, data))
        self.checkpoints.append(path)
        self._log_info("Checkpoint at step %d (t=%.6g): %s", state.step_count, state.t, path)

    def monitor_snapshot(self):
        return MonitorSnapshot(
            self.doubling.rows(),
            smp_assertion_mode=bool(self.smp and self.smp.assertion_mode),
            smp_violated_at=None if self.smp is None else self.smp.violated_at,
            held_until=self._held_until, held_broken=self._held_broken,
            torsion_max=self._torsion_max, dt_rule_respected=self._dt_ok)

    def _drain(self):
        for future in self._pending:
            try:
                future.result()
            except OSError as err:
                raise StorageError("checkpoint write failed: {0}".format(err))
        self._pending = []

    def _done(self):
        t_end = self.t_end
        return (self.state.t >= t_end * (1 - 1e-12) or
                self.state.step_count >= self.config.flow.max_steps)

    def run(self, resumed=False):
        """Step until t_end, max_steps or an abort.

        Returns: FlowResult; NumericalError propagates after the summary is built.
        """
        self._prepare(resumed)
        start = self.state.step_count
        every = self.config.flow.checkpoint_every
        mc = self.config.monitors
        abort = None
        dt = float('nan')
        try:
            while True:
                state = self.state
                if state.step_count % mc.every == 0 or self._done():
                    replay = resumed and state.step_count == start
                    report = self._observe(dt, record=not (replay and self._restored is not None))
                    if self.recorder is not None and not replay:
                        self.recorder.write(report)
                    if self.keep_reports:
                        self.reports.append(report)
                K_now = state.report.K if state.report is not None else chern.tensor_norms(state.pkg).K_sup
                if self.trajectory is not None and state.step_count % self.config.flow.trajectory_every == 0:
                    self.trajectory.append(state.t, state.metric, state.phi)
                if (self._executor is not None and every and state.step_count % every == 0
                        and not (resumed and state.step_count == start)):
                    self._snapshot()
                if self._done():
                    break
                dt = self.controller.propose(K_now, state.metric, self.t_end - state.t)
                if not self.controller.respects_rule(dt, K_now):
                    self._dt_ok = False
                    self._log_warning("dt=%.4g violates dt*K_now <= safety*c1 (K_now=%.4g)", dt, K_now)
                new = step_hcf(state, dt)
                if state.phi is not None:
                    new.phi = heat_step(state.phi, state.metric, dt, new.metric)
                self._log_debug("step %d t=%.6g dt=%.4g K_now=%.4g", new.step_count, new.t, dt, K_now)
                self.state = new
        except NumericalError as err:
            abort = err
            self._log_error("Flow aborted at step %d (t=%.6g): %s", self.state.step_count, self.state.t, err)
        except ValueError as err:
            abort = NumericalError(str(err))
            abort.__cause__ = err
            self._log_error("Flow aborted at step %d (t=%.6g): %s", self.state.step_count, self.state.t, err)
        finally:
            if self.recorder is not None:
                self.recorder.close()
            if self._executor is not None:
                self._drain()
                self._executor.shutdown(wait=True)
        summary = self.summary(abort)
        self.write_summary(summary)
        result = FlowResult(self.state, self.reports, summary, self.trajectory)
        if abort is not None:
            abort.result = result
            raise abort
        return result

    def summary(self, abort=None):
        report = self.state.report
        doubling = self.doubling.report() if self.doubling is not None and self.doubling.times else None
        return RunSummary(
            name=self.config.name, config_hash=self.config_hash, seed=self.config.seed,
            t_final=self.state.t, steps=self.state.step_count,
            abort_reason=None if abort is None else "{0}: {1}".format(type(abort).__name__, abort),
            exit_code=0 if abort is None else abort.exit_code,
            K0=self.K0 or 0.0, doubling=doubling,
            conditions=None if report is None else report.conditions,
            conditions_held_until=self._held_until,
            smp_assertion_mode=bool(self.smp and self.smp.assertion_mode),
            smp_violated_at=None if self.smp is None else self.smp.violated_at,
            kahler_torsion_max=self._torsion_max,
            dt_rule_respected=self._dt_ok,
            checkpoints=list(self.checkpoints),
        )

    def write_summary(self, summary):
        if self.directory is None or not self.config.output.summary:
            return None
        path = os.path.join(self.directory, "summary.json")
        try:
            os.makedirs(self.directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as f:
                f.write(summary.model_dump_json(indent=2))
        except OSError as err:
            raise StorageError("cannot write summary {0}: {1}".format(path, err))
        self._log_info("Summary written to %s", path)
        return path


def initial_state(config):
    """FlowState at t = 0 from the configured preset."""
    gc, pc = config.grid, config.preset
    grid = TorusGrid(gc.n, gc.resolution, gc.periods, gc.derivative_mode)
    preset = build_preset(pc.name, grid, amplitude=pc.amplitude, max_mode=pc.max_mode, seed=config.preset_seed)
    return FlowState(0.0, preset.metric)


def run_flow(config, directory=None, state=None, config_hash="", K0=None, resumed=False, monitors=None):
    """Run the flow described by `config`; see FlowRunner.

    `monitors` is the MonitorSnapshot of the checkpoint a resumed run starts from.
    """
    state = initial_state(config) if state is None else state
    runner = FlowRunner(config, state, config_hash, K0, directory, monitors=monitors)
    return runner.run(resumed)
