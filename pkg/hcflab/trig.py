"""Trigonometric polynomials on the torus.

A TrigPoly is a finite sum  sum_k c_k exp(i sum_a 2 pi k_a x_a / L_a)  over
integer frequency vectors k, one entry per real axis (x^1, y^1, x^2, ...).
The algebra is closed under products, conjugation and every real or
Wirtinger derivative, so closed forms built from it are exact oracles for
the grid derivatives.
"""

import math

import numpy as np


class TrigPoly:
    __slots__ = ["n", "periods", "coeffs"]

    def __init__(self, n, coeffs=None, periods=None):
        self.n = n
        if periods is None:
            periods = (2 * math.pi,) * (2 * n)
        self.periods = tuple(float(p) for p in periods)
        self.coeffs = {}
        for k, c in (coeffs or {}).items():
            k = tuple(int(x) for x in k)
            if len(k) != 2 * n:
                raise ValueError("frequency {0} needs {1} entries".format(k, 2 * n))
            if c != 0:
                self.coeffs[k] = self.coeffs.get(k, 0) + complex(c)

    @classmethod
    def constant(cls, n, value, periods=None):
        return cls(n, {(0,) * (2 * n): value}, periods)

    @classmethod
    def exp_mode(cls, n, k, value=1.0, periods=None):
        return cls(n, {tuple(k): value}, periods)

    @classmethod
    def cos(cls, n, axis, freq=1, periods=None):
        return cls._trig(n, axis, freq, periods, 0.5, 0.5)

    @classmethod
    def sin(cls, n, axis, freq=1, periods=None):
        return cls._trig(n, axis, freq, periods, -0.5j, 0.5j)

    @classmethod
    def _trig(cls, n, axis, freq, periods, plus, minus):
        k = [0] * (2 * n)
        k[axis] = freq
        q = [0] * (2 * n)
        q[axis] = -freq
        return cls(n, {tuple(k): plus, tuple(q): minus}, periods)

    def _like(self, coeffs):
        return TrigPoly(self.n, coeffs, self.periods)

    def _check(self, other):
        if other.n != self.n or other.periods != self.periods:
            raise ValueError("trigonometric polynomials live on different tori")

    def __add__(self, other):
        if np.isscalar(other):
            other = TrigPoly.constant(self.n, other, self.periods)
        self._check(other)
        coeffs = dict(self.coeffs)
        for k, c in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0) + c
        return self._like({k: c for k, c in coeffs.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return self._like({k: c * other for k, c in self.coeffs.items()})
        self._check(other)
        coeffs = {}
        for k1, c1 in self.coeffs.items():
            for k2, c2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                coeffs[k] = coeffs.get(k, 0) + c1 * c2
        return self._like({k: c for k, c in coeffs.items() if c != 0})

    __rmul__ = __mul__

    def conj(self):
        return self._like({tuple(-x for x in k): np.conj(c) for k, c in self.coeffs.items()})

    def d_real(self, axis):
        scale = 2 * math.pi / self.periods[axis]
        return self._like({k: c * 1j * scale * k[axis] for k, c in self.coeffs.items()})

    def d_holo(self, a):
        return (self.d_real(2 * a) - self.d_real(2 * a + 1) * 1j) * 0.5

    def d_anti(self, a):
        return (self.d_real(2 * a) + self.d_real(2 * a + 1) * 1j) * 0.5

    @property
    def max_frequency(self):
        return max((max(abs(x) for x in k) for k in self.coeffs), default=0)

    def evaluate(self, grid):
        """Sample on a TorusGrid; returns a complex array of shape grid.shape.

        Frequencies are folded modulo the resolution, which reproduces the
        exact point samples even for unresolved modes.
        """
        if grid.n != self.n or not np.allclose(grid.periods, self.periods):
            raise ValueError("grid does not match the torus of this polynomial")
        spectrum = np.zeros(grid.shape, dtype=complex)
        for k, c in self.coeffs.items():
            spectrum[tuple(x % grid.resolution for x in k)] += c
        return np.fft.ifftn(spectrum) * grid.size

    def evaluate_at(self, coords, shape=None):
        """Evaluate at real coordinates: a sequence of 2n broadcastable arrays."""
        coords = [np.asarray(x, dtype=float) for x in coords]
        if shape is None:
            shape = np.broadcast(*coords).shape
        out = np.zeros(shape, dtype=complex)
        for k, c in self.coeffs.items():
            phase = sum(2 * math.pi * ka / L * x for ka, L, x in zip(k, self.periods, coords) if ka)
            out = out + c * np.exp(1j * phase)
        return out


def _sin_cos(n=1):
    return TrigPoly.sin(n, 0) * TrigPoly.cos(n, 1)


def _mode_mix(n=1):
    f = TrigPoly.cos(n, 0) * 0.7 + TrigPoly.sin(n, 1, 2) * 0.2
    if n > 1:
        f = f + TrigPoly.cos(n, 2) * TrigPoly.sin(n, 3) * 0.3
    return f


ANALYTIC_PRESETS = {
    "zero": lambda n=1: TrigPoly(n),
    "sin_cos": _sin_cos,
    "mode_mix": _mode_mix,
}


def analytic_preset(name, n=1):
    """Registered analytic field by name."""
    try:
        return ANALYTIC_PRESETS[name](n)
    except KeyError:
        raise ValueError("no analytic preset named {0!r}; known: {1}".format(
            name, ", ".join(sorted(ANALYTIC_PRESETS))))


def random_trig(n, rng, max_mode=1, amplitude=1.0, real=True, periods=None):
    """Random trigonometric polynomial with frequencies |k_axis| <= max_mode.

    With real=True the coefficients are Hermitian-symmetric so the function
    is real valued; amplitude bounds the sum of coefficient moduli.
    """
    coeffs = {}
    for k in np.ndindex(*(2 * max_mode + 1,) * (2 * n)):
        k = tuple(x - max_mode for x in k)
        if not any(k):
            continue
        coeffs[k] = rng.standard_normal() + 1j * rng.standard_normal()
    if real:
        coeffs = {k: 0.5 * (c + np.conj(coeffs[tuple(-x for x in k)])) for k, c in coeffs.items()}
    total = sum(abs(c) for c in coeffs.values())
    poly = TrigPoly(n, coeffs, periods)
    return poly * (amplitude / total) if total > 0 else poly
