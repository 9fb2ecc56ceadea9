"""Closed-form solutions depending on x3 only.

If the data depend on x3 alone, the inversion reduces to
``(phi_M(p'))' = PV`` with ``phi_m(x) = x + min0(m - x)/2``.  Integrating once
with ``A' = PV`` gives ``p' = phi_M^{-1}(A) + const``; the constant is forced by
periodicity of ``p``, and absorbing it into the data turns ``M`` into ``M - c``.
For general constants the same recipe runs with
``psi_m(x) = x/N_s^2 + a min0(m - x)`` and ``m = kappa M``.

Profiles are sampled at ``x = j h`` for ``j = 0..n-1`` on ``[0, 2 pi)``, the
same nodes as the 3D grid; ``x_wrapped`` maps them to ``(-pi, pi]``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np

from .energy import InversionData, PhysicalConstants
from .errors import BadPeriod, GridMismatch, NonzeroMeanPV, SignConditionViolated
from .grid import TWO_PI, GridSpec, ScalarField, project_mean_zero

PERIOD_RTOL = 1e-12
MEAN_TOL = 1e-10


def phi(m, x):
    """``x + min(m - x, 0)/2``: equal to ``x`` below ``m`` and ``(x + m)/2`` above."""
    m, x = np.asarray(m, dtype=float), np.asarray(x, dtype=float)
    return x + 0.5 * np.minimum(m - x, 0.0)


def phi_inv(m, y):
    m, y = np.asarray(m, dtype=float), np.asarray(y, dtype=float)
    return y - np.minimum(m - y, 0.0)


def psi(m, x, constants: PhysicalConstants):
    c = constants
    return np.asarray(x) / c.N_s2 + c.a * np.minimum(np.asarray(m) - np.asarray(x), 0.0)


def psi_inv(m, y, constants: PhysicalConstants):
    """Inverse of ``psi(m, .)``; the kink sits at ``y = m / N_s^2``."""
    c = constants
    m, y = np.asarray(m, dtype=float), np.asarray(y, dtype=float)
    return np.where(y <= m / c.N_s2, y * c.N_s2, (y - c.a * m) * c.N_u2)


@dataclasses.dataclass(frozen=True, eq=False)
class Profile1D:
    """Samples of a 2 pi periodic function at ``x_j = j h``.

    ``smooth`` marks profiles known to be analytic, for which antiderivatives
    are taken spectrally; tabulated data use the trapezoid rule.
    """

    values: np.ndarray
    smooth: bool = False
    L: float = TWO_PI

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 4:
            raise ValueError("a profile needs a 1D array of at least 4 samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @property
    def x_wrapped(self) -> np.ndarray:
        x = self.x
        return np.where(x > 0.5 * self.L + 1e-12 * self.L, x - self.L, x)

    def mean(self) -> float:
        return float(self.values.mean())

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n: int, smooth: bool = True) -> Profile1D:
        x = np.arange(n) * (TWO_PI / n)
        return cls(np.broadcast_to(np.asarray(fn(x), dtype=float), (n,)).copy(), smooth)

    @classmethod
    def named(cls, name: str, n: int) -> Profile1D:
        """``zero``, ``sin``, ``cos``, ``sin+shift:a`` or ``const:a``."""
        name = name.strip()
        if name == "zero":
            return cls.from_function(lambda x: 0.0 * x, n)
        if name == "sin":
            return cls.from_function(np.sin, n)
        if name == "cos":
            return cls.from_function(np.cos, n)
        if name.startswith("sin+shift:"):
            a = float(name.split(":", 1)[1])
            return cls.from_function(lambda x: np.sin(x) + a, n)
        if name.startswith("cos+shift:"):
            a = float(name.split(":", 1)[1])
            return cls.from_function(lambda x: np.cos(x) + a, n)
        if name.startswith("const:"):
            a = float(name.split(":", 1)[1])
            return cls.from_function(lambda x: a + 0.0 * x, n)
        raise ValueError(f"unknown profile {name!r}")

    @classmethod
    def from_csv(cls, path) -> Profile1D:
        """One value per line, or two columns ``x3,value`` (the first is ignored)."""
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data[:, -1], smooth=False)

    def extrude(self, grid: GridSpec) -> ScalarField:
        if grid.n[2] != self.n:
            raise GridMismatch(f"profile has {self.n} samples but n3 = {grid.n[2]}")
        if abs(grid.L[2] - self.L) > PERIOD_RTOL * self.L:
            raise BadPeriod(f"x3 period {grid.L[2]} differs from profile period {self.L}")
        return ScalarField.from_profile(grid, self.values)


def antiderivative(f: Profile1D) -> np.ndarray:
    """Periodic antiderivative of a mean-zero profile with ``A(-pi) = 0``."""
    v = f.values - f.values.mean()
    n = f.n
    if f.smooth:
        k = TWO_PI / f.L * np.fft.rfftfreq(n, 1.0 / n)
        vh = np.fft.rfft(v)
        ah = np.zeros_like(vh)
        ah[1:] = vh[1:] / (1j * k[1:])
        if n % 2 == 0:
            ah[-1] = 0.0
        A = np.fft.irfft(ah, n=n)
        # value at x = L/2 from the series
        full = np.fft.fft(A)
        kk = np.fft.fftfreq(n, 1.0 / n)
        A_half = float(np.real(np.sum(full * np.exp(1j * np.pi * kk))) / n)
    else:
        A = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * f.h)])
        A_half = float(np.interp(0.5 * f.L, f.x, A))
    return A - A_half


@dataclasses.dataclass(frozen=True, eq=False)
class Exact1DSolution:
    """``p`` solves the inversion with data ``(PV, M_shifted)``.

    ``theta`` is ``p'``; ``c`` is the constant removed from ``phi_M^{-1}(A)``
    and ``M_shifted = M - c/kappa`` (``M - c`` for unit constants).
    """

    p: Profile1D
    theta: Profile1D
    c: float
    M: Profile1D
    M_shifted: Profile1D
    PV: Profile1D
    A: np.ndarray
    constants: PhysicalConstants = PhysicalConstants()

    def p_field(self, grid: GridSpec) -> ScalarField:
        return project_mean_zero(self.p.extrude(grid))

    def data(self, grid: GridSpec) -> InversionData:
        return InversionData(self.M_shifted.extrude(grid), self.PV.extrude(grid), self.constants)

    def first_integral(self) -> np.ndarray:
        """``psi_{kappa M_shifted}(p') - A/f``; constant for an exact solution."""
        k = self.constants
        return psi(k.kappa * self.M_shifted.values, self.theta.values, k) - self.A / k.f


def _integrate_periodic(dp: np.ndarray, h: float) -> np.ndarray:
    p = np.concatenate([[0.0], np.cumsum(0.5 * (dp[1:] + dp[:-1]) * h)])
    return p - p.mean()


def build_exact(PV: Profile1D, M: Profile1D, constants: Optional[PhysicalConstants] = None) -> Exact1DSolution:
    k = constants if constants is not None else PhysicalConstants()
    if PV.n != M.n:
        raise GridMismatch(f"PV has {PV.n} samples, M has {M.n}")
    scale = max(1.0, float(np.max(np.abs(PV.values))))
    if abs(PV.mean()) > MEAN_TOL * scale:
        raise NonzeroMeanPV(f"PV average {PV.mean():.3e} is not zero")
    A = antiderivative(PV)
    m = k.kappa * M.values
    theta_tilde = psi_inv(m, A / k.f, k)
    c = float(theta_tilde.mean())
    dp = theta_tilde - c
    dp = dp - dp.mean()
    p = _integrate_periodic(dp, M.h)
    return Exact1DSolution(
        p=Profile1D(p), theta=Profile1D(dp), c=c, M=M,
        M_shifted=Profile1D(M.values - c / k.kappa, smooth=M.smooth),
        PV=Profile1D(PV.values - PV.values.mean(), smooth=PV.smooth), A=A, constants=k,
    )


def _require_2pi(grid: GridSpec) -> None:
    if abs(grid.L[2] - TWO_PI) > PERIOD_RTOL * TWO_PI:
        raise BadPeriod(f"x3 period must be 2 pi, got {grid.L[2]}")


def baseball_cap_profile(x) -> np.ndarray:
    """Closed-form mean-zero solution for ``M = sin x3 - 1/pi``, ``PV = 0``."""
    x = np.asarray(x, dtype=float)
    xw = np.mod(x + math.pi, TWO_PI) - math.pi
    xw = np.where(xw == -math.pi, math.pi, xw)
    p = np.where(xw <= 0.0, -xw / math.pi + np.cos(xw), -xw / math.pi + 1.0)
    return p - 0.5


def baseball_cap_dp(x) -> np.ndarray:
    return -np.minimum(np.sin(x), 0.0) - 1.0 / math.pi


def baseball_cap(grid: GridSpec) -> tuple[InversionData, ScalarField]:
    """Data ``M = sin x3 - 1/pi``, ``PV = 0`` and the exact solution on ``grid``."""
    _require_2pi(grid)
    x3 = grid.coords(3)
    M = np.sin(x3) - 1.0 / math.pi
    data = InversionData.from_profiles(grid, M, np.zeros_like(x3))
    p = project_mean_zero(ScalarField.from_profile(grid, baseball_cap_profile(x3)))
    return data, p


def sharpness_family(M: Profile1D, slope_tol: float = 1e-8) -> Exact1DSolution:
    """Solution with ``PV = 0`` for ``M`` with ``sign M(x) = sign x`` on ``(-pi, pi)``.

    ``p' = mean(min0 M) - min0 M`` is Lipschitz with a corner where ``M``
    crosses zero; the returned data are ``(0, M + mean(min0 M))``.
    """
    xw = M.x_wrapped
    v = M.values
    interior = (np.abs(xw) > 0) & (np.abs(xw) < math.pi - 1e-12)
    bad = interior & (np.sign(v) != np.sign(xw))
    if np.any(bad):
        where = xw[bad][:3]
        raise SignConditionViolated(f"sign M != sign x3 at x3 = {np.round(where, 6).tolist()}")
    i0 = int(np.argmin(np.abs(xw)))
    if abs(xw[i0]) > 1e-12 or abs(v[i0]) > slope_tol * max(1.0, np.max(np.abs(v))):
        raise SignConditionViolated("M must vanish at x3 = 0 on the sample grid")
    n = M.n
    s1 = (v[(i0 + 1) % n] - v[i0 - 1]) / (2.0 * M.h)
    s2 = (v[(i0 + 2) % n] - v[i0 - 2]) / (4.0 * M.h)
    # a transversal crossing gives s2/s1 -> 1; a flat one (M ~ x^3) gives s2/s1 -> 4
    if not (s1 > slope_tol and s2 < 2.0 * s1):
        raise SignConditionViolated(f"M'(0) must be nonzero; slope estimates {s1:.3e}, {s2:.3e}")
    return build_exact(Profile1D(np.zeros(M.n), smooth=True), M)
