"""Pointwise curvature conditions.

Every routine works on plain arrays whose trailing axes are the index slots
(R[..., i, j, k, l] = R_{i jbar k lbar}, g[..., i, j] = g_{i jbar}) and whose
leading axes enumerate points: the grid axes of a field, or nothing at all
for a single synthetic point. A (1,0)-vector X enters every Hermitian form
through v = conj(X), so R(X, Xbar, Y, Ybar) = v^H H_Y v with
H_Y[i, j] = R[i, j, k, l] Y^k conj(Y^l).
"""

import logging
from typing import List
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from pydantic import BaseModel

from .common import NumericalError, SingularMetricError
from .presets import b_form

logger = logging.getLogger(__name__)

NONPOSITIVE_TOL = 1e-8
RESTARTS = 8
MAX_ITER = 100
FIXED_POINT_TOL = 1e-10
# relative conjugation defect beyond which curvature data is rejected rather than projected
CONJUGATION_TOL = 1e-3


def _array(x):
    return np.asarray(getattr(x, "data", x))


def inverse_metric(g):
    """g^{k lbar} as [..., k, l]."""
    return np.swapaxes(np.linalg.inv(g), -1, -2)


def hermitian_part(a):
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def generalized_eigh(a, b):
    """Solve a v = w b v for Hermitian a and positive definite b.

    Stacks of matrices are reduced through the Cholesky factor of b; a
    single pair goes straight to LAPACK.

    Returns: ascending eigenvalues [..., n] and b-orthonormal eigenvectors
    stored as columns [..., n, n].
    """
    a = hermitian_part(np.asarray(a, dtype=complex))
    b = np.asarray(b, dtype=complex)
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    if int(np.prod(lead, dtype=int)) == 1:
        try:
            w, v = scipy.linalg.eigh(a.reshape(a.shape[-2:]), b.reshape(b.shape[-2:]))
        except np.linalg.LinAlgError as err:
            raise SingularMetricError("metric is not positive definite: {0}".format(err))
        return w.reshape(lead + w.shape), v.reshape(lead + v.shape)
    try:
        chol = np.linalg.cholesky(b)
    except np.linalg.LinAlgError:
        raise SingularMetricError("metric is not positive definite at some point")
    linv = np.linalg.inv(chol)
    linv_h = np.conj(np.swapaxes(linv, -1, -2))
    w, u = np.linalg.eigh(hermitian_part(linv @ a @ linv_h))
    return w, linv_h @ u


def norm_sq(x, g):
    """g(X, Xbar) = g_{i jbar} X^i conj(X^j)."""
    return np.real(np.einsum('...i,...ij,...j->...', x, g, np.conj(x)))


def normalize(x, g):
    return x / np.sqrt(norm_sq(x, g))[..., None]


def random_unit(rng, shape, g):
    """Complex Gaussian vectors of shape `shape` + (n,), normalized by g."""
    n = g.shape[-1]
    z = rng.standard_normal(tuple(shape) + (n,)) + 1j * rng.standard_normal(tuple(shape) + (n,))
    return normalize(z, g)


def conjugation_defect(rm):
    """max |R_{i jbar k lbar} - conj(R_{j ibar l kbar})|."""
    lead = rm.ndim - 4
    swapped = np.transpose(rm, tuple(range(lead)) + (lead + 1, lead, lead + 3, lead + 2))
    return float(np.max(np.abs(rm - np.conj(swapped)))) if rm.size else 0.0


def hermitian_project(rm):
    """Average R with conj(R_{j ibar l kbar}).

    Returns: (projected tensor, the defect it removed).
    """
    lead = rm.ndim - 4
    swapped = np.transpose(rm, tuple(range(lead)) + (lead + 1, lead, lead + 3, lead + 2))
    return 0.5 * (rm + np.conj(swapped)), conjugation_defect(rm)


def griffiths_form(rm, x, y):
    """R(X, Xbar, Y, Ybar); real for a tensor with the conjugation symmetry."""
    return np.real(np.einsum('...ijkl,...i,...j,...k,...l->...', rm, x, np.conj(x), y, np.conj(y)))


def b_value(g, x, y):
    """B(X, Xbar, Y, Ybar) = |X|^2 |Y|^2 + |g(X, Ybar)|^2."""
    cross = np.einsum('...i,...ij,...j->...', x, g, np.conj(y))
    return norm_sq(x, g) * norm_sq(y, g) + np.abs(cross) ** 2


def ricci_form(ric, x, y=None):
    y = x if y is None else y
    return np.einsum('...ij,...i,...j->...', ric, x, np.conj(y))


class PointSet:
    """Leading point axes of an array, optionally restricted to a subset.

    `ids` are flat indices into `shape`; analyses then run on the subset
    only and report locations back in the full index space.
    """

    def __init__(self, shape, ids=None):
        self.shape = tuple(shape)
        size = int(np.prod(self.shape, dtype=int))
        self.ids = np.arange(size) if ids is None else np.asarray(ids, dtype=int)
        self.subset = ids is not None

    @property
    def out_shape(self):
        return (len(self.ids),) if self.subset else self.shape

    def take(self, a, tail):
        flat = np.broadcast_to(a, self.shape + a.shape[a.ndim - tail:]).reshape((-1,) + a.shape[a.ndim - tail:])
        return flat[self.ids]

    def restore(self, a):
        return a.reshape(self.out_shape + a.shape[1:])

    def locate(self, k):
        """Full index of entry k of the flattened output."""
        flat = int(self.ids[k])
        if not self.shape:
            return ()
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))


def select_points(shape, max_points=None, seed=0):
    """Deterministic subset of flat point indices, or None for all points."""
    size = int(np.prod(shape, dtype=int))
    if max_points is None or max_points >= size:
        return None
    rng = np.random.default_rng([seed, size])
    return np.sort(rng.choice(size, size=max_points, replace=False))


@dataclass(frozen=True, eq=False)
class EpsilonShift:
    """R^eps = R - eps B with B_{i jbar k lbar} = g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar}."""
    epsilon: float
    g: np.ndarray
    B: np.ndarray
    R_eps: np.ndarray

    @property
    def n(self):
        return self.g.shape[-1]

    def ricci(self):
        """First Ricci trace of R^eps, which is Ric - eps (n + 1) g."""
        return np.einsum('...kl,...ijkl->...ij', inverse_metric(self.g), self.R_eps)


def b_trace_defect(b, g):
    """max |g^{k lbar} B_{i jbar k lbar} - (n + 1) g_{i jbar}|."""
    n = g.shape[-1]
    trace = np.einsum('...kl,...ijkl->...ij', inverse_metric(g), b)
    return float(np.max(np.abs(trace - (n + 1) * g)))


def eps_shift(rm, g, epsilon):
    """Assemble B and R^eps; the trace identity of B is asserted."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative, got {0}".format(epsilon))
    rm, g = _array(rm), _array(g)
    b = b_form(g)
    defect = b_trace_defect(b, g)
    scale = max(1.0, float(np.max(np.abs(g))))
    if defect > 1e-10 * scale:
        raise NumericalError("trace identity of B fails by {0:.3g}".format(defect))
    return EpsilonShift(float(epsilon), g, b, rm - epsilon * b)


@dataclass(frozen=True, eq=False)
class GriffithsReport:
    value: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    converged: np.ndarray
    restarts: int
    samples: int
    iterations: int
    points: PointSet
    sampled_max: np.ndarray = None
    kappa_bound: np.ndarray = None
    conjugation_defect: float = 0.0

    @property
    def global_max(self):
        return float(np.max(self.value))

    @property
    def argmax(self):
        return self.points.locate(int(np.argmax(self.value)))

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


def _bilinear_x(rm, y):
    return np.einsum('...ijkl,...k,...l->...ij', rm, y, np.conj(y))


def _bilinear_y(rm, x):
    return np.einsum('...ijkl,...i,...j->...kl', rm, x, np.conj(x))


def _b_matrix(g, y):
    # B as a Hermitian form in the other vector: g |Y|^2 + a a^H with a = g conj(Y)
    a = np.einsum('...il,...l->...i', g, np.conj(y))
    return g * norm_sq(y, g)[..., None, None] + np.einsum('...i,...j->...ij', a, np.conj(a))


def _ascend(rm, g, y, max_iter, tol, ratio):
    """Alternating top-eigenvector ascent; each half step cannot decrease the value."""
    value = np.full(y.shape[:-1], -np.inf)
    converged = np.zeros(y.shape[:-1], dtype=bool)
    x = y
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w, v = generalized_eigh(_bilinear_x(rm, y), _b_matrix(g, y) if ratio else g)
        x = np.conj(v[..., :, -1])
        w, v = generalized_eigh(_bilinear_y(rm, x), _b_matrix(g, x) if ratio else g)
        y = np.conj(v[..., :, -1])
        new = w[..., -1]
        converged = np.abs(new - value) <= tol * np.maximum(1.0, np.abs(new))
        value = new
        if np.all(converged):
            break
    return value, normalize(x, g), normalize(y, g), converged, iterations


def _extremize(rm, g, restarts, max_iter, tol, seed, points, samples, ratio):
    rm, g = _array(rm), _array(g)
    n = rm.shape[-1]
    pts = PointSet(rm.shape[:-4], points)
    rm_p = pts.take(rm, 4)
    g_p = pts.take(g, 2)
    count = rm_p.shape[0]
    seeds = np.empty((count, restarts, n), dtype=complex)
    pairs = np.empty((count, samples, 2, n), dtype=complex)
    for k, pid in enumerate(pts.ids):
        rng = np.random.default_rng([seed, int(pid)])
        seeds[k] = random_unit(rng, (restarts,), g_p[k])
        if samples:
            pairs[k] = random_unit(rng, (samples, 2), g_p[k])
    value, x, y, converged, iterations = _ascend(
        rm_p[:, None], g_p[:, None], seeds, max_iter, tol, ratio)
    best = np.argmax(value, axis=1)
    rows = np.arange(count)
    value, x, y = value[rows, best], x[rows, best], y[rows, best]
    converged = converged[rows, best]
    sampled = None
    if samples:
        sx, sy = pairs[:, :, 0], pairs[:, :, 1]
        sample_values = griffiths_form(rm_p[:, None], sx, sy)
        if ratio:
            sample_values = sample_values / b_value(g_p[:, None], sx, sy)
        top = np.argmax(sample_values, axis=1)
        sampled = sample_values[rows, top]
        better = sampled > value
        value = np.where(better, sampled, value)
        x = np.where(better[:, None], sx[rows, top], x)
        y = np.where(better[:, None], sy[rows, top], y)
    if not np.all(converged):
        logger.warning("Griffiths ascent hit the iteration cap (%d) at %d of %d points",
                       max_iter, int(np.sum(~converged)), count)
    return GriffithsReport(
        value=pts.restore(value), X=pts.restore(x), Y=pts.restore(y),
        converged=pts.restore(converged), restarts=restarts, samples=samples,
        iterations=iterations, points=pts,
        sampled_max=None if sampled is None else pts.restore(sampled))


def griffiths_extremum(rm, g, restarts=RESTARTS, max_iter=MAX_ITER, tol=FIXED_POINT_TOL, seed=0,
                       points=None, samples=0, with_kappa=False):
    """Per-point max of R(X, Xbar, Y, Ybar) over g-unit X and Y.

    Restart vectors at point p are drawn from default_rng([seed, p]). With
    samples > 0 the same generator also draws random unit pairs and the
    reported value dominates all of them. A value is a certified lower
    bound of the true maximum only.

    R is first averaged with its conjugate-swapped copy; the removed defect
    (aliasing on coarse grids) is reported as `conjugation_defect`. A defect
    above CONJUGATION_TOL relative to max |R| raises NumericalError.
    """
    rm, defect = hermitian_project(_array(rm))
    scale = max(1.0, float(np.max(np.abs(rm)))) if rm.size else 1.0
    if defect > CONJUGATION_TOL * scale:
        raise NumericalError("curvature data lacks the conjugation symmetry R_{{i jbar k lbar}} = conj(R_{{j ibar l kbar}}): "
                             "defect {0:.3g}".format(defect))
    if defect > 0:
        logger.debug("Projected out a conjugation defect of %.3g before the Griffiths ascent", defect)
    report = _extremize(rm, g, restarts, max_iter, tol, seed, points, samples, ratio=False)
    report = replace(report, conjugation_defect=defect)
    if with_kappa:
        kappa = griffiths_kappa(rm, g, restarts, max_iter, tol, seed, points)
        report = replace(report, kappa_bound=kappa.value)
    return report


def griffiths_kappa(rm, g, restarts=RESTARTS, max_iter=MAX_ITER, tol=FIXED_POINT_TOL, seed=0, points=None,
                    samples=0):
    """Per-point max of R(X, Xbar, Y, Ybar) / B(X, Xbar, Y, Ybar), the smallest admissible kappa."""
    return _extremize(rm, g, restarts, max_iter, tol, seed, points, samples, ratio=True)


def sample_griffiths(rm, g, samples, seed=0):
    """Max of the Griffiths form over `samples` random unit pairs per point."""
    rm, g = _array(rm), _array(g)
    g = np.broadcast_to(g, rm.shape[:-4] + g.shape[-2:])
    rng = np.random.default_rng(seed)
    x = random_unit(rng, (samples,) + rm.shape[:-4], g)
    y = random_unit(rng, (samples,) + rm.shape[:-4], g)
    return np.max(griffiths_form(rm, x, y), axis=0)


@dataclass(frozen=True, eq=False)
class RicciSpectrum:
    """Generalized eigenvalues of (Ric, g), ascending per point."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    points: PointSet

    @property
    def pointwise_max(self):
        return self.eigenvalues[..., -1]

    @property
    def max_value(self):
        return float(np.max(self.pointwise_max))

    @property
    def max_point(self):
        return self.points.locate(int(np.argmax(self.pointwise_max)))

    @property
    def min_of_max(self):
        return float(np.min(self.pointwise_max))

    @property
    def min_of_max_point(self):
        return self.points.locate(int(np.argmin(self.pointwise_max)))

    def directions(self):
        """Eigen-directions as (1,0)-vectors [..., k, n], ascending."""
        return np.conj(np.swapaxes(self.eigenvectors, -1, -2))


def ricci_spectrum(ric, g, points=None):
    ric, g = _array(ric), _array(g)
    pts = PointSet(ric.shape[:-2], points)
    w, v = generalized_eigh(pts.take(ric, 2), pts.take(g, 2))
    return RicciSpectrum(pts.restore(w), pts.restore(v), pts)


def ricci_eps_margin(ric, g, epsilon, K, t, points=None):
    """Largest generalized eigenvalue of Ric^eps + eps exp(-K t) g.

    Negative exactly when Ric^eps < -eps exp(-K t) g holds at every point.
    """
    ric, g = _array(ric), _array(g)
    n = g.shape[-1]
    shifted = ric - epsilon * (n + 1) * g + epsilon * np.exp(-K * t) * g
    return ricci_spectrum(shifted, g, points).max_value


@dataclass(frozen=True, eq=False)
class PinchReport:
    """Worst sampled margins per point.

    margin = (1 + K t) Ric^eps(u) Ric^eps(v) - |R^eps(u, vbar, x, xbar)|^2 and
    cs_margin = R^eps(u, ubar, x, xbar) R^eps(v, vbar, x, xbar) - |R^eps(u, vbar, x, xbar)|^2.
    """
    margin: np.ndarray
    cs_margin: np.ndarray
    ricci_negative: np.ndarray
    witness: tuple
    samples: int
    points: PointSet

    @property
    def min_margin(self):
        return float(np.min(self.margin))

    @property
    def min_cs_margin(self):
        return float(np.min(self.cs_margin))

    @property
    def holds(self):
        return bool(np.all(self.ricci_negative)) and self.min_margin > 0

    @property
    def reason(self):
        if not np.all(self.ricci_negative):
            bad = int(np.argmin(self.ricci_negative.reshape(-1)))
            return "first Ricci of R^eps is not negative at point {0}".format(self.points.locate(bad))
        if self.min_margin <= 0:
            return "pinching margin {0:.3g} <= 0 at point {1}".format(self.min_margin, self.witness[0])
        return None


def _eigen_triples(directions):
    """All triples (u, v, x) drawn from the Ricci eigen-directions: [P, n^3, 3, n]."""
    count, n = directions.shape[0], directions.shape[1]
    idx = np.array(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing='ij')).reshape(3, -1).T
    return directions[:, idx]


def pinch_margin(shift, K, t, samples=256, seed=0, points=None):
    """Sampled pinching margins of an EpsilonShift.

    Samples are random unit triples, random diagonal triples u = v = x, and
    every triple of Ricci eigen-directions of R^eps.
    """
    g = np.broadcast_to(shift.g, shift.R_eps.shape[:-4] + shift.g.shape[-2:])
    pts = PointSet(shift.R_eps.shape[:-4], points)
    rm = pts.take(shift.R_eps, 4)
    g_p = pts.take(g, 2)
    ric = pts.take(shift.ricci(), 2)
    count = rm.shape[0]
    w, v = generalized_eigh(ric, g_p)
    ricci_negative = w[:, -1] < 0
    eigen = _eigen_triples(normalize(np.conj(np.swapaxes(v, -1, -2)), g_p[:, None]))
    diagonal_count = max(samples // 4, 1)
    random = np.empty((count, samples + diagonal_count, 3, g.shape[-1]), dtype=complex)
    for k, pid in enumerate(pts.ids):
        rng = np.random.default_rng([seed, int(pid)])
        random[k, :samples] = random_unit(rng, (samples, 3), g_p[k])
        random[k, samples:] = random_unit(rng, (diagonal_count, 1), g_p[k])
    triples = np.concatenate([eigen, random], axis=1)
    u, vv, x = triples[:, :, 0], triples[:, :, 1], triples[:, :, 2]
    rm_b = rm[:, None]
    ruvxx = np.einsum('...ijkl,...i,...j,...k,...l->...', rm_b, u, np.conj(vv), x, np.conj(x), optimize=True)
    ruuxx = griffiths_form(rm_b, u, x)
    rvvxx = griffiths_form(rm_b, vv, x)
    ric_u = np.real(ricci_form(ric[:, None], u))
    ric_v = np.real(ricci_form(ric[:, None], vv))
    pinch = (1 + K * t) * ric_u * ric_v - np.abs(ruvxx) ** 2
    cs = ruuxx * rvvxx - np.abs(ruvxx) ** 2
    worst = np.argmin(pinch, axis=1)
    rows = np.arange(count)
    point = int(np.argmin(pinch[rows, worst]))
    witness = (pts.locate(point), triples[point, worst[point]])
    return PinchReport(
        margin=pts.restore(pinch[rows, worst]),
        cs_margin=pts.restore(np.min(cs, axis=1)),
        ricci_negative=pts.restore(ricci_negative),
        witness=witness,
        samples=triples.shape[1],
        points=pts,
    )


@dataclass(frozen=True, eq=False)
class InitialConditionReport:
    """Both initial-condition statements for a shifted tensor at t = 0."""
    ricci_margin: float
    ricci_below: bool
    pinch: PinchReport

    @property
    def pinching(self):
        return self.pinch.holds

    @property
    def holds(self):
        return self.ricci_below and self.pinching


def initial_conditions(rm, g, epsilon, samples=256, seed=0, points=None):
    """Check Ric^eps < -eps g and strict pinching of R^eps with K t = 0."""
    shift = eps_shift(rm, g, epsilon)
    g = np.broadcast_to(shift.g, shift.R_eps.shape[:-4] + shift.g.shape[-2:])
    margin = ricci_spectrum(shift.ricci() + epsilon * g, g, points).max_value
    pinch = pinch_margin(shift, 0.0, 0.0, samples, seed, points)
    return InitialConditionReport(margin, margin < 0, pinch)


def polarization_ratio(shift, samples=256, seed=0, points=None):
    """sup |R^eps(a, bbar, c, dbar)|^2 / (Ric^eps(a) Ric^eps(b)) over random unit vectors.

    Only samples where both Ricci values are negative enter; returns nan when
    none do.
    """
    g = np.broadcast_to(shift.g, shift.R_eps.shape[:-4] + shift.g.shape[-2:])
    pts = PointSet(shift.R_eps.shape[:-4], points)
    rm = pts.take(shift.R_eps, 4)[:, None]
    g_p = pts.take(g, 2)[:, None]
    ric = pts.take(shift.ricci(), 2)[:, None]
    rng = np.random.default_rng(seed)
    a, b, c, d = (random_unit(rng, (rm.shape[0], samples), g_p) for _ in range(4))
    value = np.einsum('...ijkl,...i,...j,...k,...l->...', rm, a, np.conj(b), c, np.conj(d), optimize=True)
    denom = np.real(ricci_form(ric, a)) * np.real(ricci_form(ric, b))
    usable = (np.real(ricci_form(ric, a)) < 0) & (np.real(ricci_form(ric, b)) < 0)
    if not np.any(usable):
        return float('nan')
    return float(np.max(np.abs(value[usable]) ** 2 / denom[usable]))


class ConditionSummary(BaseModel):
    griffiths_nonpositive: bool
    griffiths_max: float
    griffiths_point: List[int]
    ricci_nonpositive: bool
    ricci_max: float
    ricci_max_point: List[int]
    ricci_quasi_negative: bool
    ricci_min_of_max: float
    ricci_min_point: List[int]


def classify(griffiths, ricci, tol=NONPOSITIVE_TOL):
    """Condition booleans of one state with their witnesses."""
    nonpositive = ricci.max_value <= tol
    return ConditionSummary(
        griffiths_nonpositive=griffiths.global_max <= tol,
        griffiths_max=griffiths.global_max,
        griffiths_point=list(griffiths.argmax),
        ricci_nonpositive=nonpositive,
        ricci_max=ricci.max_value,
        ricci_max_point=list(ricci.max_point),
        ricci_quasi_negative=nonpositive and ricci.min_of_max < -tol,
        ricci_min_of_max=ricci.min_of_max,
        ricci_min_point=list(ricci.min_of_max_point),
    )
