"""Chern connection, torsion, curvature and Ricci tensors of a Hermitian metric.

Index layout of the arrays (after the grid axes):

    Gamma[..., i, j, k]      Gamma^k_{ij}
    T_mixed[..., i, j, k]    T^k_{ij}
    T_lowered[..., i, j, k]  T_{ij kbar}
    Rm_mixed[..., i, j, k, l]    R_{i jbar k}^l
    Rm_lowered[..., i, j, k, l]  R_{i jbar k lbar}
    g_inverse[..., k, l]     g^{k lbar}

Covariant derivatives put the new derivative slot first, so nabla_p R_{i jbar
k lbar} is stored at [..., p, i, j, k, l].
"""

import logging
from dataclasses import dataclass

import numpy as np

from .common import GridError, SignatureError, SingularMetricError
from .grid import MetricField, Slot, TensorField

logger = logging.getLogger(__name__)

HOLO = "holo"
ANTI = "anti"

SYMMETRIC = "symmetric"
HOLO_OUTER = "holo_outer"

_LETTERS = "abcdefghijklmnopqrstuvw"


def require_positive(metric, what="metric"):
    """Raise SingularMetricError naming the worst point if g is not positive definite."""
    value, point = metric.min_eigenvalue()
    if not value > 0:
        raise SingularMetricError(
            "{0} is not positive definite at grid point {1}: minimum eigenvalue {2:.6g}".format(
                what, point, value), point=point, eigenvalue=value)


@dataclass(frozen=True, eq=False)
class ChernPackage:
    metric: MetricField
    g_inverse: TensorField
    Gamma: TensorField
    T_mixed: TensorField
    T_lowered: TensorField
    Rm_mixed: TensorField
    Rm_lowered: TensorField
    Ric_first: TensorField
    Ric_second: TensorField

    @property
    def grid(self):
        return self.metric.grid

    @property
    def n(self):
        return self.metric.grid.n


def christoffel(metric, check=True):
    """Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}; no symmetry imposed in (i, j)."""
    if check:
        require_positive(metric)
    grid = metric.grid
    dg = grid.d_holo_all(metric.data)
    ginv = metric.inverse().data
    gamma = np.einsum('...kl,...ijl->...ijk', ginv, dg)
    return TensorField(grid, (Slot.LOWER, Slot.LOWER, Slot.UPPER), gamma)


def torsion(gamma, metric):
    """T^k_{ij} = Gamma^k_{ij} - Gamma^k_{ji} and T_{ij kbar} = g_{p kbar} T^p_{ij}."""
    if gamma.grid != metric.grid:
        raise GridError("Christoffel symbols and metric live on different grids")
    mixed = gamma.data - np.swapaxes(gamma.data, -3, -2)
    lowered = np.einsum('...pk,...ijp->...ijk', metric.data, mixed)
    return (TensorField(gamma.grid, (Slot.LOWER, Slot.LOWER, Slot.UPPER), mixed),
            TensorField(gamma.grid, (Slot.LOWER, Slot.LOWER, Slot.LOWER_BAR), lowered))


def curvature(metric, gamma=None, check=True):
    """R_{i jbar k}^l = -d_jbar Gamma^l_{ik} and R_{i jbar k lbar} = g_{p lbar} R_{i jbar k}^p."""
    if gamma is None:
        gamma = christoffel(metric, check=check)
    elif check:
        require_positive(metric)
    grid = metric.grid
    # dbar[..., j, i, k, l] = d_jbar Gamma^l_{ik}
    dbar = grid.d_anti_all(gamma.data)
    mixed = -np.moveaxis(dbar, grid.ndim, grid.ndim + 1)
    lowered = np.einsum('...pl,...ijkp->...ijkl', metric.data, mixed)
    return (TensorField(grid, (Slot.LOWER, Slot.LOWER_BAR, Slot.LOWER, Slot.UPPER), mixed),
            TensorField(grid, (Slot.LOWER, Slot.LOWER_BAR, Slot.LOWER, Slot.LOWER_BAR), lowered))


def first_ricci_trace(rm_lowered, g_inverse):
    """R_{i jbar} = g^{k lbar} R_{i jbar k lbar}."""
    return rm_lowered.trace(2, 3, g_inverse)


def first_ricci_logdet(metric):
    """R_{i jbar} = -d_i d_jbar log det g, never touching the connection."""
    grid = metric.grid
    try:
        logdet = metric.log_det()
    except np.linalg.LinAlgError:
        require_positive(metric)
        raise
    ric = -grid.d_holo_all(grid.d_anti_all(logdet.astype(complex)))
    # d_holo_all stacks i in front of jbar
    return TensorField(grid, (Slot.LOWER, Slot.LOWER_BAR), ric)


def second_ricci(rm_lowered, g_inverse):
    """S_{i jbar} = g^{k lbar} R_{k lbar i jbar}."""
    return rm_lowered.trace(0, 1, g_inverse)


def chern_package(metric, check=True):
    """Assemble the full curvature package of a metric."""
    if check:
        require_positive(metric)
    g_inverse = metric.inverse()
    gamma = christoffel(metric, check=False)
    t_mixed, t_lowered = torsion(gamma, metric)
    rm_mixed, rm_lowered = curvature(metric, gamma, check=False)
    return ChernPackage(
        metric=metric,
        g_inverse=g_inverse,
        Gamma=gamma,
        T_mixed=t_mixed,
        T_lowered=t_lowered,
        Rm_mixed=rm_mixed,
        Rm_lowered=rm_lowered,
        Ric_first=first_ricci_trace(rm_lowered, g_inverse),
        Ric_second=second_ricci(rm_lowered, g_inverse),
    )


def second_ricci_field(metric):
    """S_{i jbar} alone; the flow velocity is -S."""
    g_inverse = metric.inverse()
    _, rm_lowered = curvature(metric, check=False)
    return second_ricci(rm_lowered, g_inverse)


def _slot_correction(data, matrix, position, rank):
    """sum_b matrix[..., d, a, b] * data[..., b at position] -> [..., d, a at position]."""
    sub = _LETTERS[:rank]
    out = sub[:position] + 'y' + sub[position + 1:]
    return np.einsum('...zy{0},...{1}->...z{2}'.format(sub[position], sub, out), matrix, data)


def covariant_derivative(t, pkg, direction):
    """Chern covariant derivative with one new lower slot in front.

    Holomorphic direction: +Gamma per upper holomorphic slot, -Gamma per lower
    holomorphic slot, plain derivative on antiholomorphic slots. The
    antiholomorphic direction mirrors this with conjugated Gamma on the
    antiholomorphic slots.
    """
    if t.grid != pkg.grid:
        raise GridError("tensor and curvature package live on different grids")
    grid = t.grid
    gamma = pkg.Gamma.data
    if direction == HOLO:
        result = grid.d_holo_all(t.data)
        new_slot = Slot.LOWER
        lower = -gamma
        upper = np.swapaxes(gamma, -2, -1)
    elif direction == ANTI:
        result = grid.d_anti_all(t.data)
        new_slot = Slot.LOWER_BAR
        lower = -np.conj(gamma)
        upper = np.conj(np.swapaxes(gamma, -2, -1))
    else:
        raise SignatureError("direction must be {0!r} or {1!r}, got {2!r}".format(HOLO, ANTI, direction))
    for position, slot in enumerate(t.signature):
        if slot.holo != (direction == HOLO):
            continue
        matrix = upper if slot.upper else lower
        result = result + _slot_correction(t.data, matrix, position, t.rank)
    return TensorField(grid, (new_slot,) + t.signature, result)


def laplacian(t, pkg, convention=SYMMETRIC):
    """Tensor Laplacian.

    SYMMETRIC:  1/2 g^{r sbar} (nabla_r nabla_sbar + nabla_sbar nabla_r)
    HOLO_OUTER: g^{r sbar} nabla_r nabla_sbar
    """
    ginv = pkg.g_inverse.data
    sub = _LETTERS[:t.rank]
    # [..., r, s, rest] = nabla_r nabla_sbar t
    holo_outer = covariant_derivative(covariant_derivative(t, pkg, ANTI), pkg, HOLO).data
    first = np.einsum('...rs,...rs{0}->...{0}'.format(sub), ginv, holo_outer)
    if convention == HOLO_OUTER:
        return t.with_data(first)
    if convention != SYMMETRIC:
        raise ValueError("unknown Laplacian convention {0!r}".format(convention))
    # [..., s, r, rest] = nabla_sbar nabla_r t
    anti_outer = covariant_derivative(covariant_derivative(t, pkg, HOLO), pkg, ANTI).data
    second = np.einsum('...rs,...sr{0}->...{0}'.format(sub), ginv, anti_outer)
    return t.with_data(0.5 * (first + second))


def norm_sq(t, metric, g_inverse=None):
    """Pointwise |t|^2 with every slot contracted by g or g^{-1}.

    Returns a real array of shape grid.shape.
    """
    g = metric.data
    ginv = metric.inverse().data if g_inverse is None else g_inverse.data
    sub = _LETTERS[:t.rank]
    raised = t.data
    for position, slot in enumerate(t.signature):
        if slot.upper:
            pair = g if slot.holo else np.swapaxes(g, -1, -2)
        else:
            pair = ginv if slot.holo else np.swapaxes(ginv, -1, -2)
        out = sub[:position] + 'y' + sub[position + 1:]
        # B[..., y] = sum_x pair[x, y] t[..., x]
        raised = np.einsum('...{0}y,...{1}->...{2}'.format(sub[position], sub, out), pair, raised)
    total = np.einsum('...{0},...{0}->...'.format(sub), raised, np.conj(t.data))
    return np.real(total)


@dataclass(frozen=True, eq=False)
class TensorNorms:
    """Pointwise norms and their sup over the grid.

    K = |Rm| + |T|^2 + |nabla T| and F = |Rm|^2 + |T|^4 + |nabla T|^2.
    """
    rm: np.ndarray
    t_sq: np.ndarray
    nabla_t: np.ndarray
    F: np.ndarray
    K: np.ndarray

    @property
    def rm_sup(self):
        return float(np.max(self.rm))

    @property
    def t_sq_sup(self):
        return float(np.max(self.t_sq))

    @property
    def nabla_t_sup(self):
        return float(np.max(self.nabla_t))

    @property
    def F_sup(self):
        return float(np.max(self.F))

    @property
    def K_sup(self):
        return float(np.max(self.K))


def tensor_norms(pkg):
    """|Rm|, |T|^2, |nabla T| (both directions), F and K per point."""
    metric, ginv = pkg.metric, pkg.g_inverse
    rm_sq = np.maximum(norm_sq(pkg.Rm_lowered, metric, ginv), 0.0)
    t_sq = np.maximum(norm_sq(pkg.T_lowered, metric, ginv), 0.0)
    nabla_sq = (norm_sq(covariant_derivative(pkg.T_lowered, pkg, HOLO), metric, ginv)
                + norm_sq(covariant_derivative(pkg.T_lowered, pkg, ANTI), metric, ginv))
    nabla_sq = np.maximum(nabla_sq, 0.0)
    rm = np.sqrt(rm_sq)
    nabla_t = np.sqrt(nabla_sq)
    return TensorNorms(
        rm=rm,
        t_sq=t_sq,
        nabla_t=nabla_t,
        F=rm_sq + t_sq ** 2 + nabla_sq,
        K=rm + t_sq + nabla_t,
    )


def bisectional(rm_point, x, y):
    """R(X, Xbar, Y, Ybar) for pointwise arrays; real part of the form."""
    value = np.einsum('...ijkl,...i,...j,...k,...l->...', rm_point, x, np.conj(x), y, np.conj(y))
    return np.real(value)
