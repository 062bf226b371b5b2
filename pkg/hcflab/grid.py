"""Periodic discretization of the complex torus C^n / Lambda.

Real coordinates are ordered (x^1, y^1, x^2, y^2, ...) with z^a = x^a + i y^a,
so real axis 2a is x^{a+1} and axis 2a+1 is y^{a+1}. Field arrays carry the
2n grid axes first, in that order, followed by one axis of length n per index
slot; arrays are C-contiguous (row-major).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .common import GridError, SignatureError

SPECTRAL = "spectral"
FD4 = "fd4"
DERIVATIVE_MODES = (SPECTRAL, FD4)
PROBE_RESOLUTIONS = (16, 32, 64)


class Slot(Enum):
    """Index slot tag: holomorphy class and position."""
    LOWER = ("_", True, False)
    LOWER_BAR = ("_bar", False, False)
    UPPER = ("^", True, True)
    UPPER_BAR = ("^bar", False, True)

    def __init__(self, code, holo, upper):
        self.code = code
        self.holo = holo
        self.upper = upper

    @property
    def conjugate(self):
        """Slot obtained by complex conjugation (holomorphy flips)."""
        for slot in Slot:
            if slot.holo != self.holo and slot.upper == self.upper:
                return slot


def is_power_of_two(value):
    return value > 0 and value & (value - 1) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Rectangular periodic grid with `resolution` points per real axis."""
    n: int
    resolution: int
    periods: tuple = None
    derivative_mode: str = SPECTRAL

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise GridError("complex dimension n must be 1, 2 or 3, got {0}".format(self.n))
        if self.resolution < 8 or not is_power_of_two(self.resolution):
            raise GridError("resolution must be a power of two >= 8, got {0}".format(self.resolution))
        if self.derivative_mode not in DERIVATIVE_MODES:
            raise GridError("unknown derivative mode {0!r}".format(self.derivative_mode))
        periods = self.periods
        if periods is None:
            periods = (2 * math.pi,) * (2 * self.n)
        elif np.isscalar(periods):
            periods = (float(periods),) * (2 * self.n)
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 * self.n or min(periods) <= 0:
            raise GridError("need {0} positive periods, got {1}".format(2 * self.n, periods))
        object.__setattr__(self, "periods", periods)

    @property
    def ndim(self):
        """Number of real grid axes."""
        return 2 * self.n

    @property
    def shape(self):
        return (self.resolution,) * self.ndim

    @property
    def size(self):
        return self.resolution ** self.ndim

    @property
    def spacing(self):
        return tuple(p / self.resolution for p in self.periods)

    def with_mode(self, derivative_mode):
        return TorusGrid(self.n, self.resolution, self.periods, derivative_mode)

    def coordinates(self):
        """Meshgrid of the 2n real coordinates, each of shape `self.shape`."""
        axes = [np.arange(self.resolution) * h for h in self.spacing]
        return np.meshgrid(*axes, indexing='ij')

    def wavenumbers(self, axis):
        """Angular wavenumbers along real axis `axis` in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.resolution, d=self.spacing[axis])

    def check_field(self, data, rank=None):
        """Validate the grid part of a field array."""
        if data.shape[:self.ndim] != self.shape:
            raise GridError("field of shape {0} does not live on grid {1}".format(data.shape, self.shape))
        if rank is not None and data.shape[self.ndim:] != (self.n,) * rank:
            raise GridError("expected {0} index slots of extent {1}, got shape {2}".format(
                rank, self.n, data.shape[self.ndim:]))

    def d_real(self, data, axis):
        """Derivative along real axis `axis` of a field array."""
        if not 0 <= axis < self.ndim:
            raise GridError("real axis {0} out of range for n={1}".format(axis, self.n))
        self.check_field(data)
        if self.derivative_mode == SPECTRAL:
            k = self.wavenumbers(axis)
            # Nyquist mode of an odd derivative has no real counterpart
            k[self.resolution // 2] = 0.0
            shape = [1] * data.ndim
            shape[axis] = self.resolution
            spectrum = np.fft.fft(data, axis=axis)
            return np.fft.ifft(spectrum * (1j * k).reshape(shape), axis=axis)
        h = self.spacing[axis]
        return (-np.roll(data, -2, axis=axis) + 8 * np.roll(data, -1, axis=axis)
                - 8 * np.roll(data, 1, axis=axis) + np.roll(data, 2, axis=axis)) / (12 * h)

    def d_holo(self, data, a):
        """Wirtinger derivative d/dz^a = (d/dx^a - i d/dy^a) / 2."""
        self._check_axis(a)
        return 0.5 * (self.d_real(data, 2 * a) - 1j * self.d_real(data, 2 * a + 1))

    def d_anti(self, data, a):
        """Wirtinger derivative d/dzbar^a = (d/dx^a + i d/dy^a) / 2."""
        self._check_axis(a)
        return 0.5 * (self.d_real(data, 2 * a) + 1j * self.d_real(data, 2 * a + 1))

    def d_holo_all(self, data):
        """All holomorphic derivatives, stacked as a new first index slot."""
        return np.stack([self.d_holo(data, a) for a in range(self.n)], axis=self.ndim)

    def d_anti_all(self, data):
        """All antiholomorphic derivatives, stacked as a new first index slot."""
        return np.stack([self.d_anti(data, a) for a in range(self.n)], axis=self.ndim)

    def laplacian(self, data, g_inverse):
        """Function Laplacian g^{r sbar} d_r d_sbar of a scalar field array."""
        dd = self.d_holo_all(self.d_anti_all(data))
        return np.einsum('...rs,...rs->...', g_inverse, dd)

    def random_field(self, rng, max_mode=2, amplitude=1.0, extra=(), real=False):
        """Band-limited random field with Fourier modes |k_axis| <= max_mode."""
        if max_mode >= self.resolution // 2:
            raise GridError("max_mode {0} is not resolved at resolution {1}".format(max_mode, self.resolution))
        shape = self.shape + tuple(extra)
        spectrum = np.zeros(shape, dtype=complex)
        modes = [np.r_[0:max_mode + 1, -max_mode:0]] * self.ndim
        index = np.ix_(*modes)
        block = spectrum[index]
        block[...] = rng.standard_normal(block.shape) + 1j * rng.standard_normal(block.shape)
        spectrum[index] = block
        values = np.fft.ifftn(spectrum, axes=tuple(range(self.ndim))) * self.size
        if real:
            values = values.real
        scale = np.max(np.abs(values))
        return amplitude * values / scale if scale > 0 else values

    def _check_axis(self, a):
        if not 0 <= a < self.n:
            raise GridError("holomorphic axis {0} out of range for n={1}".format(a, self.n))


@dataclass(frozen=True, eq=False)
class TensorField:
    """Complex tensor field with an immutable typed index signature."""
    grid: TorusGrid
    signature: tuple
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        signature = tuple(self.signature)
        for slot in signature:
            if not isinstance(slot, Slot):
                raise SignatureError("signature entries must be Slot, got {0!r}".format(slot))
        data = np.array(self.data, dtype=complex, order='C')
        self.grid.check_field(data, rank=len(signature))
        data.flags.writeable = False
        object.__setattr__(self, "signature", signature)
        object.__setattr__(self, "data", data)

    @property
    def rank(self):
        return len(self.signature)

    def with_data(self, data, signature=None):
        return TensorField(self.grid, self.signature if signature is None else signature, data)

    def conj(self):
        """Complex conjugate; every slot changes holomorphy class."""
        return TensorField(self.grid, tuple(s.conjugate for s in self.signature), np.conj(self.data))

    def permute(self, order):
        """Reorder index slots: new slot p is old slot order[p]."""
        order = tuple(order)
        if sorted(order) != list(range(self.rank)):
            raise SignatureError("{0} is not a permutation of {1} slots".format(order, self.rank))
        nd = self.grid.ndim
        axes = tuple(range(nd)) + tuple(nd + p for p in order)
        return TensorField(self.grid, tuple(self.signature[p] for p in order),
                           np.transpose(self.data, axes))

    def trace(self, p, q, g_inverse=None):
        """Contract slots p and q.

        An upper slot pairs with a lower slot of the same holomorphy class
        directly; a lower holomorphic slot pairs with a lower antiholomorphic
        slot through g_inverse.
        """
        sp, sq = self.signature[p], self.signature[q]
        if p == q:
            raise SignatureError("cannot contract a slot with itself")
        if sp.holo == sq.holo and sp.upper != sq.upper:
            metric = None
        elif sp.holo != sq.holo and not sp.upper and not sq.upper:
            if g_inverse is None:
                raise SignatureError("contracting {0} with {1} needs the inverse metric".format(sp, sq))
            metric = g_inverse.data if isinstance(g_inverse, TensorField) else g_inverse
        else:
            raise SignatureError("slots {0} and {1} cannot be contracted".format(sp, sq))
        letters = "abcdefghijklmnop"[:self.rank]
        out = "".join(c for i, c in enumerate(letters) if i not in (p, q))
        if metric is None:
            sub = list(letters)
            sub[q] = letters[p]
            data = np.einsum('...' + "".join(sub) + '->...' + out, self.data)
        else:
            holo, anti = (p, q) if sp.holo else (q, p)
            data = np.einsum('...{0}{1},...{2}->...{3}'.format(letters[holo], letters[anti], letters, out),
                             metric, self.data)
        signature = tuple(s for i, s in enumerate(self.signature) if i not in (p, q))
        return TensorField(self.grid, signature, data)

    def _binary(self, other, op):
        if isinstance(other, TensorField):
            if other.grid != self.grid:
                raise GridError("fields live on different grids")
            if other.signature != self.signature:
                raise SignatureError("signature mismatch: {0} vs {1}".format(self.signature, other.signature))
            other = other.data
        return self.with_data(op(self.data, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            raise SignatureError("TensorField multiplies by scalars only")
        return self.with_data(self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_data(-self.data)

    def max_abs(self):
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


@dataclass(frozen=True, eq=False)
class MetricField:
    """Positive definite Hermitian field g_{i jbar}: data[..., i, j] = g_{i jbar}."""
    g: TensorField

    def __post_init__(self):
        if self.g.signature != (Slot.LOWER, Slot.LOWER_BAR):
            raise SignatureError("a metric has signature (LOWER, LOWER_BAR), got {0}".format(self.g.signature))

    @classmethod
    def from_array(cls, grid, array):
        return cls(TensorField(grid, (Slot.LOWER, Slot.LOWER_BAR), array))

    @classmethod
    def flat(cls, grid):
        eye = np.broadcast_to(np.eye(grid.n, dtype=complex), grid.shape + (grid.n, grid.n))
        return cls.from_array(grid, eye)

    @property
    def grid(self):
        return self.g.grid

    @property
    def data(self):
        return self.g.data

    def hermitian_defect(self):
        """max |g_{i jbar} - conj(g_{j ibar})| over the grid."""
        return float(np.max(np.abs(self.data - np.conj(np.swapaxes(self.data, -1, -2)))))

    def symmetrized(self):
        """Average with the conjugate transpose."""
        return MetricField.from_array(self.grid, 0.5 * (self.data + np.conj(np.swapaxes(self.data, -1, -2))))

    def min_eigenvalue(self):
        """Smallest eigenvalue over the grid and the grid index where it occurs."""
        eigs = np.linalg.eigvalsh(self.data)[..., 0]
        index = np.unravel_index(np.argmin(eigs), eigs.shape)
        return float(eigs[index]), tuple(int(i) for i in index)

    def inverse(self):
        """Inverse metric as a field with data[..., k, l] = g^{k lbar}."""
        inv = np.swapaxes(np.linalg.inv(self.data), -1, -2)
        return TensorField(self.grid, (Slot.UPPER, Slot.UPPER_BAR), inv)

    def log_det(self):
        """log det g per point from a Cholesky factorization."""
        chol = np.linalg.cholesky(self.data)
        return 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)

    def scaled(self, factor):
        return MetricField.from_array(self.grid, self.data * factor)


def _check_same_grid(f, grid):
    if grid is not None and f.grid != grid:
        raise GridError("fields live on different grids")


def partial_holo(f, a, grid=None):
    """Componentwise d/dz^a of a tensor field; the signature is unchanged."""
    _check_same_grid(f, grid)
    return f.with_data(f.grid.d_holo(f.data, a))


def partial_anti(f, a, grid=None):
    """Componentwise d/dzbar^a of a tensor field; the signature is unchanged."""
    _check_same_grid(f, grid)
    return f.with_data(f.grid.d_anti(f.data, a))


def scalar_field(grid, values):
    return TensorField(grid, (), values)


@dataclass(frozen=True)
class ProbeRow:
    mode: str
    resolution: int
    error: float
    ratio: float = None

    @property
    def order(self):
        """Observed order log2(ratio) between consecutive resolutions."""
        if self.ratio is None or self.ratio <= 0 or not np.isfinite(self.ratio):
            return None
        return math.log2(self.ratio)


def convergence_probe(preset, modes=DERIVATIVE_MODES, resolutions=PROBE_RESOLUTIONS, axis=0):
    """Max-norm error of d/dz^{axis+1} against the symbolic derivative.

    `preset` is a trigonometric polynomial (`hcflab.trig.TrigPoly`) or the
    name of a registered analytic preset.

    Returns: list of ProbeRow, one per (mode, resolution).
    """
    from .trig import TrigPoly, analytic_preset

    if isinstance(preset, str):
        preset = analytic_preset(preset)
    if not isinstance(preset, TrigPoly):
        raise GridError("preset {0!r} has no registered symbolic derivative".format(preset))
    exact = preset.d_holo(axis)
    rows = []
    for mode in modes:
        previous = None
        for resolution in resolutions:
            grid = TorusGrid(preset.n, resolution, preset.periods, mode)
            numeric = grid.d_holo(preset.evaluate(grid), axis)
            error = float(np.max(np.abs(numeric - exact.evaluate(grid))))
            ratio = None
            if previous is not None:
                ratio = previous / error if error > 0 else float('inf') if previous > 0 else None
            rows.append(ProbeRow(mode, resolution, error, ratio))
            previous = error
    return rows
