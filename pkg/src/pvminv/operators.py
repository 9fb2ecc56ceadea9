"""Discrete differential operators, inner products and norms on periodic grids.

Two discretizations share one interface, selected by ``mode``:

``"fd"``
    Second-order finite differences.  ``diff`` is the centered first
    difference at nodes.  ``grad`` returns one-sided forward differences, which
    live on cell faces (x + h_a/2 e_a); this makes ``-laplacian`` equal to
    ``grad^T grad`` for the compact 7-point Laplacian, so the H1 seminorm, the
    Laplacian and the inverse Laplacian are mutually consistent and the H1
    seminorm has no kernel besides constants.
``"spectral"``
    Exact Fourier derivatives.  First derivatives drop the Nyquist mode (its
    derivative vanishes on the nodes); the Laplacian uses the full symbol
    ``-|k|^2``.

All inner products are volume weighted: ``<f, g> = h1 h2 h3 * sum(f g)``.
"""

from __future__ import annotations

import functools

import numpy as np

from .errors import NotMeanZero
from .grid import GridSpec, ScalarField, VectorField, project_mean_zero

MODES = ("fd", "spectral")
DEFAULT_MODE = "fd"


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown discretization mode {mode!r}; expected one of {MODES}")
    return mode


# ---------------------------------------------------------------------------
# array-level kernels (axis is 1-based throughout)

def _shift(a: np.ndarray, axis: int, s: int) -> np.ndarray:
    """Return ``a(x + s h e_axis)`` on the periodic grid."""
    return np.roll(a, -s, axis=axis - 1)


def _forward(a, grid, axis):
    return (_shift(a, axis, 1) - a) / grid.h[axis - 1]


def _backward(a, grid, axis):
    return (a - _shift(a, axis, -1)) / grid.h[axis - 1]


def _centered(a, grid, axis):
    return (_shift(a, axis, 1) - _shift(a, axis, -1)) / (2.0 * grid.h[axis - 1])


@functools.lru_cache(maxsize=64)
def _deriv_symbol(n: int, L: float) -> np.ndarray:
    k = 2.0 * np.pi / L * np.fft.rfftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[-1] = 0.0
    out = 1j * k
    out.setflags(write=False)
    return out


def _spectral_deriv(a, grid, axis, order=1):
    ax = axis - 1
    n, L = grid.n[ax], grid.L[ax]
    ahat = np.fft.rfft(a, axis=ax)
    shape = [1, 1, 1]
    shape[ax] = -1
    if order == 1:
        sym = _deriv_symbol(n, L)
    else:
        k = 2.0 * np.pi / L * np.fft.rfftfreq(n, d=1.0 / n)
        sym = -(k ** 2)
    return np.fft.irfft(ahat * sym.reshape(shape), n=n, axis=ax)


@functools.lru_cache(maxsize=32)
def laplacian_symbol(grid: GridSpec, mode: str) -> np.ndarray:
    """Symbol of ``-laplacian`` in ``rfftn`` layout (zero at k = 0)."""
    parts = []
    for a in range(3):
        n, L, h = grid.n[a], grid.L[a], grid.h[a]
        k = 2.0 * np.pi / L * (np.fft.rfftfreq(n, 1.0 / n) if a == 2 else np.fft.fftfreq(n, 1.0 / n))
        if mode == "fd":
            s = (2.0 / h * np.sin(0.5 * k * h)) ** 2
        else:
            s = k ** 2
        shape = [1, 1, 1]
        shape[a] = -1
        parts.append(s.reshape(shape))
    sym = parts[0] + parts[1] + parts[2]
    sym.setflags(write=False)
    return sym


def first_derivative(a: np.ndarray, grid: GridSpec, axis: int, mode: str, kind: str = "centered") -> np.ndarray:
    """Array kernel for first derivatives; ``kind`` only matters for ``fd``."""
    if mode == "spectral":
        return _spectral_deriv(a, grid, axis)
    return {"centered": _centered, "forward": _forward, "backward": _backward}[kind](a, grid, axis)


def gradient_arrays(a: np.ndarray, grid: GridSpec, mode: str) -> tuple[np.ndarray, ...]:
    """The discrete gradient ``D`` used by every energy (faces in fd mode)."""
    kind = "forward" if mode == "fd" else "centered"
    return tuple(first_derivative(a, grid, ax, mode, kind) for ax in (1, 2, 3))


def gradient_adjoint(g: np.ndarray, grid: GridSpec, axis: int, mode: str) -> np.ndarray:
    """``D_axis^T g`` with respect to the volume-weighted inner product.

    For fd this is minus the backward difference; for spectral it is minus the
    spectral derivative.
    """
    if mode == "fd":
        return -_backward(g, grid, axis)
    return -_spectral_deriv(g, grid, axis)


def to_vertical_faces(a: np.ndarray, grid: GridSpec, mode: str) -> np.ndarray:
    """Move node data to where ``D_3`` lives: the x3 faces in fd mode."""
    if mode == "fd":
        return 0.5 * (a + _shift(a, 3, 1))
    return a


def inverse_laplacian_array(a: np.ndarray, grid: GridSpec, mode: str) -> np.ndarray:
    sym = laplacian_symbol(grid, mode)
    ahat = np.fft.rfftn(a)
    safe = np.where(sym > 0, sym, 1.0)
    uhat = np.where(sym > 0, ahat / safe, 0.0)
    return np.fft.irfftn(uhat, s=grid.shape, axes=(0, 1, 2))


def filter_nyquist(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Remove every Fourier mode that sits at the Nyquist index of some axis."""
    ahat = np.fft.fftn(a)
    for ax, n in enumerate(grid.n):
        if n % 2 == 0:
            idx = [slice(None)] * 3
            idx[ax] = n // 2
            ahat[tuple(idx)] = 0.0
    return np.fft.ifftn(ahat).real


# ---------------------------------------------------------------------------
# field-level operators

def _wrap(f: ScalarField, vals: np.ndarray) -> ScalarField:
    if f.mean_zero:
        return project_mean_zero(ScalarField(f.grid, vals))
    return ScalarField(f.grid, vals)


def diff(f: ScalarField, axis: int, mode: str = DEFAULT_MODE) -> ScalarField:
    """First derivative along ``axis`` at the nodes (centered or spectral)."""
    check_mode(mode)
    return _wrap(f, first_derivative(f.values, f.grid, axis, mode, "centered"))


def diff2(f: ScalarField, axis: int, mode: str = DEFAULT_MODE) -> ScalarField:
    """Second derivative along ``axis``: compact 3-point stencil or ``-k^2``."""
    check_mode(mode)
    a, g = f.values, f.grid
    if mode == "fd":
        vals = (_shift(a, axis, 1) - 2.0 * a + _shift(a, axis, -1)) / g.h[axis - 1] ** 2
    else:
        vals = _spectral_deriv(a, g, axis, order=2)
    return _wrap(f, vals)


def grad(f: ScalarField, mode: str = DEFAULT_MODE) -> VectorField:
    check_mode(mode)
    comps = gradient_arrays(f.values, f.grid, mode)
    return VectorField(tuple(_wrap(f, c) for c in comps))


def grad_h(f: ScalarField, mode: str = DEFAULT_MODE) -> VectorField:
    """Horizontal gradient (x1, x2 components; the x3 component is zero)."""
    g = grad(f, mode)
    return VectorField((g[1], g[2], ScalarField.zeros(f.grid)))


def laplacian(f: ScalarField, mode: str = DEFAULT_MODE) -> ScalarField:
    check_mode(mode)
    out = diff2(f, 1, mode).values + diff2(f, 2, mode).values + diff2(f, 3, mode).values
    return _wrap(f, out)


def laplacian_h(f: ScalarField, mode: str = DEFAULT_MODE) -> ScalarField:
    check_mode(mode)
    return _wrap(f, diff2(f, 1, mode).values + diff2(f, 2, mode).values)


def finite_difference(f: ScalarField, axis: int, shift_cells: int) -> ScalarField:
    """``f(x + s h e_axis) - f(x)`` with periodic wrap-around."""
    vals = _shift(f.values, axis, int(shift_cells)) - f.values
    return ScalarField(f.grid, vals)


def _require_mean_zero(f: ScalarField, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(f.values))))
    if abs(f.mean()) > 1e-10 * scale:
        raise NotMeanZero(f"{what} needs a mean-zero field; average is {f.mean():.3e}")


def inverse_laplacian(f: ScalarField, mode: str = DEFAULT_MODE) -> ScalarField:
    """Mean-zero solution ``u`` of ``-laplacian(u) = f`` (zero mode excluded)."""
    check_mode(mode)
    _require_mean_zero(f, "inverse_laplacian")
    return project_mean_zero(ScalarField(f.grid, inverse_laplacian_array(f.values, f.grid, mode)))


def inner_L2(f: ScalarField, g: ScalarField) -> float:
    f.check_grid(g)
    return f.grid.dV * float(np.sum(f.values * g.values))


def norm_L2(f: ScalarField) -> float:
    return float(np.sqrt(f.grid.dV * np.sum(f.values ** 2)))


def norm_H1(f: ScalarField, mode: str = DEFAULT_MODE) -> float:
    """``||grad f||_{L2}``, a norm on mean-zero fields."""
    check_mode(mode)
    comps = gradient_arrays(f.values, f.grid, mode)
    return float(np.sqrt(f.grid.dV * sum(np.sum(c ** 2) for c in comps)))


def norm_Hneg1(f: ScalarField, mode: str = DEFAULT_MODE) -> float:
    """``||grad((-laplacian)^{-1} f)||_{L2}``, the dual norm of ``norm_H1``."""
    check_mode(mode)
    _require_mean_zero(f, "norm_Hneg1")
    u = inverse_laplacian_array(f.values - f.values.mean(), f.grid, mode)
    return norm_H1(ScalarField(f.grid, u), mode)
