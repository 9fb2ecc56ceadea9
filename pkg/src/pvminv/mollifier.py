"""Mollifier profiles and the smoothed minimum built from them.

A profile ``phi`` lives on ``(-1, 1)``; the width-``eps`` family is
``phi_eps(y) = phi(y / eps) / eps``.  Everything needed downstream reduces to
three running moments of ``phi``,

    Phi_j(x) = int_{-1}^{x} y**j phi(y) dy,   j = 0, 1, 2,

evaluated by composite Gauss-Legendre quadrature of fixed order.  In those
terms the smoothed minimum on the band is ``eps * F(x / eps)`` with

    F(x)  = x (1 - Phi_0(x)) + Phi_1(x) - m_1 / 2,
    F'(x) = 1 - Phi_0(x),     F''(x) = -phi(x),

which for a centered profile (``m_1 = 0``) is the symmetrized convolution
integral written out term by term.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import NotCentered, PropertyViolated

CENTER_TOL = 1e-10
_PANELS = 64
_ORDER = 20
_CHUNK = 1 << 15


def _bump_raw(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi * yi))
    return out


def _cubic_bspline(y):
    # triangle convolved with triangle, rescaled onto (-1, 1)
    t = np.abs(2.0 * np.asarray(y, dtype=float))
    out = np.where(t < 1.0, (4.0 - 6.0 * t ** 2 + 3.0 * t ** 3) / 6.0,
                   np.where(t < 2.0, (2.0 - t) ** 3 / 6.0, 0.0))
    return 2.0 * out


class MollifierProfile:
    """A nonnegative profile on (-1, 1) with its quadrature tables.

    The raw callable is normalized to unit mass on construction.  Tables are
    built once and never mutated, so instances may be shared across threads.
    """

    def __init__(self, name: str, fn: Callable[[np.ndarray], np.ndarray], breakpoints=None):
        self.name = name
        edges = np.linspace(-1.0, 1.0, _PANELS + 1)
        if breakpoints is not None:
            edges = np.union1d(edges, np.clip(np.asarray(breakpoints, dtype=float), -1.0, 1.0))
        self._edges = edges
        self._xi, self._wi = np.polynomial.legendre.leggauss(_ORDER)
        self._raw = fn
        mass = self._panel_moments(fn)[:, 0].sum()
        if not mass > 0:
            raise ValueError(f"profile {name!r} has no mass")
        self._scale = 1.0 / mass
        pm = self._panel_moments(self.phi)
        self._cum = np.vstack([np.zeros(3), np.cumsum(pm, axis=0)])
        self.m0, self.m1, self.m2 = self._cum[-1]
        self.C_phi = float(self._abs_moment())

    def phi(self, y):
        return self._scale * self._raw(np.asarray(y, dtype=float))

    def _panel_moments(self, fn):
        a, b = self._edges[:-1, None], self._edges[1:, None]
        y = 0.5 * (b - a) * self._xi[None, :] + 0.5 * (a + b)
        w = 0.5 * (b - a) * self._wi[None, :]
        v = fn(y) * w
        return np.stack([v.sum(1), (v * y).sum(1), (v * y * y).sum(1)], axis=1)

    def _abs_moment(self):
        a, b = self._edges[:-1, None], self._edges[1:, None]
        y = 0.5 * (b - a) * self._xi[None, :] + 0.5 * (a + b)
        w = 0.5 * (b - a) * self._wi[None, :]
        return float(np.sum(np.abs(y) * self.phi(y) * w))

    @property
    def centered(self) -> bool:
        return abs(self.m1) <= CENTER_TOL

    def moments(self, x):
        """Running moments ``(Phi_0, Phi_1, Phi_2)`` at ``x`` (clipped to [-1, 1])."""
        x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        flat = x.ravel()
        out = np.empty((flat.size, 3))
        for s in range(0, flat.size, _CHUNK):
            xs = flat[s:s + _CHUNK]
            k = np.clip(np.searchsorted(self._edges, xs, side="right") - 1, 0, len(self._edges) - 2)
            a = self._edges[k]
            half = 0.5 * (xs - a)
            y = half[:, None] * (self._xi[None, :] + 1.0) + a[:, None]
            v = self.phi(y) * (half[:, None] * self._wi[None, :])
            out[s:s + _CHUNK, 0] = self._cum[k, 0] + v.sum(1)
            out[s:s + _CHUNK, 1] = self._cum[k, 1] + (v * y).sum(1)
            out[s:s + _CHUNK, 2] = self._cum[k, 2] + (v * y * y).sum(1)
        return tuple(out[:, j].reshape(x.shape) for j in range(3))

    # unit-width (eps = 1) building blocks, valid on [-1, 1]
    def F(self, x):
        x = np.asarray(x, dtype=float)
        P0, P1, _ = self.moments(x)
        return x * (1.0 - P0) + P1 - 0.5 * self.m1

    def dF(self, x):
        P0, _, _ = self.moments(x)
        return 1.0 - P0

    def f1(self, x):
        """``(1/2 min(., 0)^2) * phi`` at unit width."""
        x = np.asarray(x, dtype=float)
        P0, P1, P2 = self.moments(x)
        return 0.5 * (x * x * (1.0 - P0) - 2.0 * x * (self.m1 - P1) + (self.m2 - P2))

    def __repr__(self):
        return f"MollifierProfile({self.name!r}, C_phi={self.C_phi:.6g})"


@functools.lru_cache(maxsize=None)
def named_profile(name: str) -> MollifierProfile:
    if name == "bump":
        return MollifierProfile("bump", _bump_raw)
    if name in ("triangular-smoothed", "bspline"):
        return MollifierProfile("triangular-smoothed", _cubic_bspline, breakpoints=(-0.5, 0.0, 0.5))
    raise ValueError(f"unknown mollifier profile {name!r}")


def tabulated_profile(y, values, name: str = "tabulated") -> MollifierProfile:
    """Profile from samples ``(y, phi(y))``, linearly interpolated, zero outside."""
    y = np.asarray(y, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(y)
    y, values = y[order], values[order]
    if np.any(values < -1e-12):
        raise ValueError("tabulated mollifier must be nonnegative")
    if y[0] < -1.0 - 1e-12 or y[-1] > 1.0 + 1e-12:
        raise ValueError("tabulated mollifier must be supported in [-1, 1]")
    values = np.maximum(values, 0.0)

    def fn(t):
        return np.interp(t, y, values, left=0.0, right=0.0)

    bps = y if y.size <= 4096 else None
    return MollifierProfile(name, fn, breakpoints=bps)


def load_profile_csv(path) -> MollifierProfile:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns y,phi")
    return tabulated_profile(data[:, 0], data[:, 1], name=str(path))


@dataclasses.dataclass(frozen=True)
class MollifierSpec:
    """A profile together with a width.  ``eps == 0`` means no smoothing."""

    profile: MollifierProfile
    eps: float

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"mollifier width must be >= 0, got {self.eps}")

    @classmethod
    def named(cls, name: str = "bump", eps: float = 0.1) -> MollifierSpec:
        return cls(named_profile(name), float(eps))

    @property
    def C_phi(self) -> float:
        return self.profile.C_phi

    @property
    def centered(self) -> bool:
        return self.profile.centered

    def with_eps(self, eps: float) -> MollifierSpec:
        return dataclasses.replace(self, eps=float(eps))

    def require_centered(self) -> None:
        if not self.centered:
            raise NotCentered(f"profile {self.profile.name!r} has first moment {self.profile.m1:.3e}")


def min0(x):
    return np.minimum(x, 0.0)


def min_eps(x, m: MollifierSpec):
    """Mollified ``min(x, 0)``: ``x`` below ``-eps``, ``0`` above ``eps``, ``eps F(x/eps)`` between."""
    m.require_centered()
    x = np.asarray(x, dtype=float)
    if m.eps == 0:
        return np.minimum(x, 0.0)
    out = np.array(np.minimum(x, 0.0))
    band = np.abs(x) < m.eps
    if np.any(band):
        out[band] = m.eps * m.profile.F(x[band] / m.eps)
    return out[()]


def dmin_eps(x, m: MollifierSpec):
    m.require_centered()
    x = np.asarray(x, dtype=float)
    if m.eps == 0:
        return (x < 0).astype(float)
    out = np.array(x <= -m.eps, dtype=float)
    band = np.abs(x) < m.eps
    if np.any(band):
        out[band] = m.profile.dF(x[band] / m.eps)
    return out[()]


def f_eps(s, m: MollifierSpec):
    """``(1/2 min(., 0)^2) * phi_eps``; its derivative is ``min_eps``."""
    m.require_centered()
    s = np.asarray(s, dtype=float)
    if m.eps == 0:
        return 0.5 * np.minimum(s, 0.0) ** 2
    eps = m.eps
    out = np.where(s <= -eps, 0.5 * (s * s + eps * eps * m.profile.m2), 0.0)
    band = np.abs(s) < eps
    if np.any(band):
        out[band] = eps * eps * m.profile.f1(s[band] / eps)
    return out[()]


# ---------------------------------------------------------------------------
# reversibility: F  <->  phi

@dataclasses.dataclass
class FPropertyReport:
    checks: dict  # name -> (passed, measured value)

    @property
    def ok(self) -> bool:
        return all(p for p, _ in self.checks.values())

    @property
    def failed(self) -> list:
        return [k for k, (p, _) in self.checks.items() if not p]


def _second_derivative(x, dF):
    """Differentiate tabulated F' once more; 4th order on uniform tables."""
    h = np.diff(x)
    if x.size >= 7 and np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        h0 = h[0]
        d = np.gradient(dF, h0, edge_order=2)
        d[2:-2] = (dF[:-4] - 8 * dF[1:-3] + 8 * dF[3:-1] - dF[4:]) / (12 * h0)
        return d
    return np.gradient(dF, x, edge_order=2)


def check_F_properties(x, F, dF, tol: float = 1e-6) -> FPropertyReport:
    """Check a tabulated ``F`` on ``[-1, 1]`` against the conditions that make
    ``-F''`` a standard centered mollifier.

    Besides the endpoint values and ``F'' <= 0`` this checks that ``F''``
    vanishes at the endpoints and that the tabulated ``F''`` is continuous at
    the table resolution (a kink in ``F`` shows up as an isolated spike).
    """
    x, F, dF = (np.asarray(a, dtype=float) for a in (x, F, dF))
    if not (abs(x[0] + 1) < 1e-12 and abs(x[-1] - 1) < 1e-12):
        raise ValueError("F must be tabulated on [-1, 1] including both endpoints")
    d2 = _second_derivative(x, dF)
    peak = max(float(np.max(np.abs(d2))), 1e-300)
    jump = float(np.max(np.abs(np.diff(d2))))
    checks = {
        "F(-1) = -1": (abs(F[0] + 1) <= tol, float(F[0])),
        "F'(-1) = 1": (abs(dF[0] - 1) <= tol, float(dF[0])),
        "F(1) = 0": (abs(F[-1]) <= tol, float(F[-1])),
        "F'(1) = 0": (abs(dF[-1]) <= tol, float(dF[-1])),
        "F'' <= 0": (float(np.max(d2)) <= tol, float(np.max(d2))),
        "supp F'' in (-1, 1)": (max(abs(d2[0]), abs(d2[-1])) <= tol * max(1.0, peak), float(max(abs(d2[0]), abs(d2[-1])))),
        "F is C2": (jump <= 0.25 * peak, jump / peak),
    }
    return FPropertyReport(checks)


def mollifier_from_F(x, F, dF, eps: float = 1.0, tol: float = 1e-6) -> MollifierSpec:
    """Recover the mollifier ``phi = -F''`` from a tabulated ``F``."""
    report = check_F_properties(x, F, dF, tol)
    if not report.ok:
        raise PropertyViolated(report.failed)
    x = np.asarray(x, dtype=float)
    phi = np.maximum(-_second_derivative(x, np.asarray(dF, dtype=float)), 0.0)
    mass = float(integrate.trapezoid(phi, x))
    if abs(mass - 1.0) > 10 * tol:
        raise PropertyViolated([f"normalization (mass {mass:.3e})"])
    prof = tabulated_profile(x, phi, name="from-F")
    spec = MollifierSpec(prof, float(eps))
    spec.require_centered()
    return spec


def tabulate_F(profile: MollifierProfile, n: int = 4001):
    """Tabulate ``F`` and ``F'`` on a uniform grid of ``[-1, 1]``."""
    x = np.linspace(-1.0, 1.0, n)
    return x, profile.F(x), profile.dF(x)
