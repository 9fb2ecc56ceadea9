"""Uniform periodic grids on the 3-torus and the fields that live on them.

Storage convention (fixed, also used by the field file format): a field's
values are a C-ordered ``(n1, n2, n3)`` array indexed ``[i1, i2, i3]``, so the
flattened row-major order has x3 varying fastest.  Node ``i`` along axis ``a``
sits at ``x_a = i * h_a`` with ``h_a = L_a / n_a``; there is no staggering of
stored fields.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import GridMismatch, NotMeanZero

TWO_PI = 2.0 * math.pi
MEAN_ZERO_RTOL = 1e-12


@dataclasses.dataclass(frozen=True)
class GridSpec:
    n: tuple[int, int, int]
    L: tuple[float, float, float] = (TWO_PI, TWO_PI, TWO_PI)

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        L = tuple(float(v) for v in self.L)
        if len(n) != 3 or len(L) != 3:
            raise ValueError("GridSpec needs three sizes and three periods")
        if any(v < 4 for v in n):
            raise ValueError(f"every axis needs at least 4 points, got {n}")
        if any(not (v > 0 and math.isfinite(v)) for v in L):
            raise ValueError(f"periods must be positive and finite, got {L}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", L)

    @classmethod
    def cube(cls, n: int, L: float = TWO_PI) -> GridSpec:
        return cls((n, n, n), (L, L, L))

    @classmethod
    def column(cls, n3: int, n_h: int = 4, L: float = TWO_PI) -> GridSpec:
        """Thin grid for x3-only problems: ``n_h`` points horizontally."""
        return cls((n_h, n_h, n3), (L, L, L))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n

    @property
    def h(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.L, self.n))

    @property
    def dV(self) -> float:
        h1, h2, h3 = self.h
        return h1 * h2 * h3

    @property
    def volume(self) -> float:
        return self.L[0] * self.L[1] * self.L[2]

    @property
    def size(self) -> int:
        return self.n[0] * self.n[1] * self.n[2]

    def coords(self, axis: int) -> np.ndarray:
        """1D node coordinates along ``axis`` (1-based)."""
        a = axis - 1
        return np.arange(self.n[a]) * self.h[a]

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords(1), self.coords(2), self.coords(3), indexing="ij")

    def wavenumbers(self, axis: int) -> np.ndarray:
        a = axis - 1
        return TWO_PI / self.L[a] * np.fft.fftfreq(self.n[a], d=1.0 / self.n[a])


def _is_mean_zero(values: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 0.0)
    return abs(float(values.mean())) <= MEAN_ZERO_RTOL * scale


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a real function on a ``GridSpec``.

    ``mean_zero`` records membership of the zero-average subspace; setting it
    on data with a visible average raises ``NotMeanZero``.
    """

    grid: GridSpec
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise GridMismatch(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.mean_zero and not _is_mean_zero(v):
            raise NotMeanZero(f"field average {v.mean():.3e} is not zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: GridSpec) -> ScalarField:
        return cls(grid, np.zeros(grid.shape), mean_zero=True)

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(c)), mean_zero=(c == 0))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> ScalarField:
        """Sample ``fn(x1, x2, x3)`` (broadcasting) at the grid nodes."""
        x1, x2, x3 = grid.mesh()
        vals = np.broadcast_to(np.asarray(fn(x1, x2, x3), dtype=float), grid.shape)
        return cls(grid, np.array(vals))

    @classmethod
    def from_profile(cls, grid: GridSpec, values3: np.ndarray) -> ScalarField:
        """Extrude an x3 profile (length n3) along x1 and x2."""
        values3 = np.asarray(values3, dtype=float)
        if values3.shape != (grid.n[2],):
            raise GridMismatch(f"profile length {values3.shape} != n3={grid.n[2]}")
        return cls(grid, np.broadcast_to(values3, grid.shape).copy())

    def mean(self) -> float:
        return float(self.values.mean())

    def with_values(self, values: np.ndarray, mean_zero: bool | None = None) -> ScalarField:
        return ScalarField(self.grid, values, self.mean_zero if mean_zero is None else mean_zero)

    def check_grid(self, *others: ScalarField) -> None:
        for o in others:
            if o.grid != self.grid:
                raise GridMismatch(f"grid {o.grid} differs from {self.grid}")

    def _binary(self, other, op):
        if isinstance(other, ScalarField):
            self.check_grid(other)
            vals = op(self.values, other.values)
            mz = self.mean_zero and other.mean_zero and op in (np.add, np.subtract)
        else:
            vals = op(self.values, float(other))
            mz = self.mean_zero and op in (np.multiply, np.divide)
        return ScalarField(self.grid, vals, mean_zero=mz and _is_mean_zero(vals))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return ScalarField(self.grid, -self.values, self.mean_zero)

    def __repr__(self):
        return f"ScalarField(grid={self.grid.n}, mean={self.mean():.3e}, mean_zero={self.mean_zero})"


@dataclasses.dataclass(frozen=True, eq=False)
class VectorField:
    components: tuple[ScalarField, ScalarField, ScalarField]

    def __post_init__(self):
        if len(self.components) != 3:
            raise ValueError("VectorField needs three components")
        self.components[0].check_grid(*self.components[1:])

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    def __getitem__(self, axis: int) -> ScalarField:
        """1-based component access, matching the axis numbering elsewhere."""
        return self.components[axis - 1]

    def magnitude_squared(self) -> np.ndarray:
        return sum(c.values ** 2 for c in self.components)


def project_mean_zero(f: ScalarField) -> ScalarField:
    """Subtract the grid average so the field lies in the zero-mean subspace."""
    vals = f.values - f.values.mean()
    # a second pass removes the rounding residue of the first
    vals = vals - vals.mean()
    return ScalarField(f.grid, vals, mean_zero=True)


def random_field(grid: GridSpec, rng: np.random.Generator, kmax: float = 4.0,
                 amplitude: float = 1.0, decay: float = 1.0) -> ScalarField:
    """Band-limited, mean-zero spectral noise.

    Fourier modes with ``0 < |k| <= kmax`` (in units of the fundamental
    wavenumber of each axis) get Gaussian coefficients scaled by
    ``|k|**-decay``; the result is rescaled to unit RMS times ``amplitude``.
    """
    ks = [np.fft.fftfreq(n, d=1.0 / n) for n in grid.n]
    k1, k2, k3 = np.meshgrid(ks[0], ks[1], ks[2], indexing="ij")
    kk = np.sqrt(k1 ** 2 + k2 ** 2 + k3 ** 2)
    mask = (kk > 0) & (kk <= kmax)
    for k, n in zip((k1, k2, k3), grid.n):
        mask &= np.abs(k) < n / 2  # keep Nyquist modes empty
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    spec = np.where(mask, spec / np.where(kk > 0, kk, 1.0) ** decay, 0.0)
    vals = np.fft.ifftn(spec).real
    rms = float(np.sqrt(np.mean(vals ** 2)))
    if rms > 0:
        vals *= amplitude / rms
    return project_mean_zero(ScalarField(grid, vals))
