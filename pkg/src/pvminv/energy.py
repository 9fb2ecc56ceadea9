"""The inversion energy, its derivative, and everything built from them.

Discretization.  In ``fd`` mode the energy is assembled from the forward
differences ``D`` of field-core, so ``d3p`` lives on the x3 faces; the
moisture variable is averaged onto the same faces.  The residual of
``grad_energy`` is then exactly the gradient of the discrete energy with
respect to the volume-weighted inner product, so the strong convexity and
Lipschitz constants hold for the discrete problem verbatim.

General constants.  With ``N_u^2 = B_th C_th + B_q C_q``, ``N_s^2 = B_th C_th``,
``kappa = B_th C_th / C_q`` and ``a = 1/N_s^2 - 1/N_u^2`` the energy is

    E(p) = sum (1/2f)|grad_h p|^2 + (f/2N_s^2)(d3p)^2 - (f a/2) min0(kappa M - d3p)^2
           + <PV, p>,

which for unit constants is ``1/2|grad p|^2 - 1/4 min0(M - d3p)^2 + <PV, p>``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import operators as ops
from .errors import ConstantsNotUnit, NotMeanZero
from .grid import GridSpec, ScalarField, project_mean_zero, random_field
from .mollifier import MollifierSpec, f_eps, min_eps
from .operators import DEFAULT_MODE


@dataclasses.dataclass(frozen=True)
class PhysicalConstants:
    f: float = 1.0
    B_theta_e: float = 1.0
    B_q: float = 1.0
    C_theta_e: float = 1.0
    C_q: float = 1.0

    KEYS = ("f", "B_theta_e", "B_q", "C_theta_e", "C_q")

    def __post_init__(self):
        for k in self.KEYS:
            v = float(getattr(self, k))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"constant {k} must be positive and finite, got {v}")
            object.__setattr__(self, k, v)

    @property
    def N_u2(self) -> float:
        return self.B_theta_e * self.C_theta_e + self.B_q * self.C_q

    @property
    def N_s2(self) -> float:
        return self.B_theta_e * self.C_theta_e

    @property
    def kappa(self) -> float:
        return self.B_theta_e * self.C_theta_e / self.C_q

    @property
    def a(self) -> float:
        return 1.0 / self.N_s2 - 1.0 / self.N_u2

    @property
    def is_unit(self) -> bool:
        return all(getattr(self, k) == 1.0 for k in self.KEYS)

    @property
    def mu(self) -> float:
        """Strong convexity constant in the plain H1 metric."""
        return min(1.0 / self.f, self.f / self.N_u2)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the derivative in the plain H1 metric."""
        return max(1.0 / self.f, self.f / self.N_s2) + self.f * self.a

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}


@dataclasses.dataclass(frozen=True, eq=False)
class InversionData:
    """Moisture variable ``M`` and mean-zero potential vorticity ``PV``."""

    M: ScalarField
    PV: ScalarField
    constants: PhysicalConstants = PhysicalConstants()

    def __post_init__(self):
        self.M.check_grid(self.PV)
        scale = max(1.0, float(np.max(np.abs(self.PV.values))))
        if abs(self.PV.mean()) > 1e-10 * scale:
            raise NotMeanZero(f"PV must have zero average, got {self.PV.mean():.3e}")
        if not self.PV.mean_zero:
            object.__setattr__(self, "PV", project_mean_zero(self.PV))

    @property
    def grid(self) -> GridSpec:
        return self.M.grid

    @classmethod
    def from_profiles(cls, grid: GridSpec, M3, PV3, constants: PhysicalConstants = PhysicalConstants()):
        """Data depending on x3 only, extruded from 1D profiles."""
        return cls(ScalarField.from_profile(grid, M3), ScalarField.from_profile(grid, PV3), constants)

    def scale(self, mode: str = DEFAULT_MODE) -> float:
        """``max(1, ||M||_L2 + ||PV||_H-1)``, the magnitude used to scale tolerances."""
        return max(1.0, ops.norm_L2(self.M) + ops.norm_Hneg1(self.PV, mode))

    def with_constants(self, constants: PhysicalConstants) -> InversionData:
        return dataclasses.replace(self, constants=constants)


def random_data(grid: GridSpec, rng: np.random.Generator, M_amplitude: float = 1.0,
                M_offset: float = 0.0, PV_amplitude: float = 1.0, kmax: float = 4.0,
                constants: PhysicalConstants = PhysicalConstants()) -> InversionData:
    M = random_field(grid, rng, kmax=kmax, amplitude=M_amplitude) + M_offset
    PV = random_field(grid, rng, kmax=kmax, amplitude=PV_amplitude)
    return InversionData(ScalarField(grid, M.values), PV, constants)


# ---------------------------------------------------------------------------
# shared kernels

def _check(p: ScalarField, data: InversionData) -> None:
    data.M.check_grid(p)


def _state(p, data, mode):
    """Gradient pieces of ``p`` and the min argument ``kappa M - d3p`` on x3 faces."""
    ops.check_mode(mode)
    _check(p, data)
    g1, g2, g3 = ops.gradient_arrays(p.values, p.grid, mode)
    Mf = ops.to_vertical_faces(data.M.values, p.grid, mode)
    s = data.constants.kappa * Mf - g3
    return g1, g2, g3, Mf, s


def _energy_from(p, data, g1, g2, g3, nonlinear):
    c = data.constants
    dens = (0.5 / c.f) * (g1 ** 2 + g2 ** 2) + (0.5 * c.f / c.N_s2) * g3 ** 2 - c.f * c.a * nonlinear
    return p.grid.dV * float(np.sum(dens)) + ops.inner_L2(data.PV, p)


def _residual_from(p, data, g1, g2, g3, mins, mode):
    c = data.constants
    g = p.grid
    r = (ops.gradient_adjoint(g1, g, 1, mode) + ops.gradient_adjoint(g2, g, 2, mode)) / c.f
    r = r + ops.gradient_adjoint((c.f / c.N_s2) * g3 + c.f * c.a * mins, g, 3, mode)
    return project_mean_zero(ScalarField(g, r + data.PV.values))


def energy(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> float:
    g1, g2, g3, _, s = _state(p, data, mode)
    return _energy_from(p, data, g1, g2, g3, 0.5 * np.minimum(s, 0.0) ** 2)


def grad_energy(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> ScalarField:
    """Residual ``r`` with ``DE(p) phi = <r, phi>``.

    For unit constants ``r = -lap p - 1/2 d3 min0(M - d3p) + PV``.
    """
    g1, g2, g3, _, s = _state(p, data, mode)
    return _residual_from(p, data, g1, g2, g3, np.minimum(s, 0.0), mode)


def energy_eps(p: ScalarField, data: InversionData, m: MollifierSpec, mode: str = DEFAULT_MODE) -> float:
    m.require_centered()
    g1, g2, g3, _, s = _state(p, data, mode)
    return _energy_from(p, data, g1, g2, g3, f_eps(s, m))


def grad_energy_eps(p: ScalarField, data: InversionData, m: MollifierSpec, mode: str = DEFAULT_MODE) -> ScalarField:
    m.require_centered()
    g1, g2, g3, _, s = _state(p, data, mode)
    return _residual_from(p, data, g1, g2, g3, min_eps(s, m), mode)


def residual_general(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> ScalarField:
    """Strong-form residual written with explicit phase indicators.

    ``-(1/f) lap_h p - f d3[(1/N_u^2)(d3p + B_q M) H_u + (1/N_s^2) d3p H_s] + PV``
    with ``H_u = 1(kappa M - d3p < 0)``.  Algebraically the same operator as
    ``grad_energy``, assembled independently.
    """
    ops.check_mode(mode)
    _check(p, data)
    c = data.constants
    g = p.grid
    lap_h = sum(-ops.gradient_adjoint(ops.first_derivative(p.values, g, ax, mode, "forward"), g, ax, mode)
                for ax in (1, 2))
    d3p = ops.first_derivative(p.values, g, 3, mode, "forward")
    Mf = ops.to_vertical_faces(data.M.values, g, mode)
    Hu = (c.kappa * Mf - d3p < 0).astype(float)
    flux = (d3p + c.B_q * Mf) * Hu / c.N_u2 + d3p * (1.0 - Hu) / c.N_s2
    d3flux = -ops.gradient_adjoint(flux, g, 3, mode)
    return project_mean_zero(ScalarField(g, -lap_h / c.f - c.f * d3flux + data.PV.values))


# ---------------------------------------------------------------------------
# phases

@dataclasses.dataclass(frozen=True, eq=False)
class PhaseField:
    """Phase indicators and the water / temperature split of ``M``.

    ``deficit`` is ``kappa M - d3p`` at the nodes; ``interface_cells`` is an
    ``(k, 3)`` integer array of nodes next to a sign change of it.
    """

    H_u: ScalarField
    H_s: ScalarField
    q: ScalarField
    theta_e: ScalarField
    deficit: ScalarField
    interface_cells: np.ndarray

    @property
    def unsaturated_fraction(self) -> float:
        return float(self.H_u.values.mean())

    @property
    def saturated_fraction(self) -> float:
        return float(self.H_s.values.mean())


def _sign_change_nodes(Hu: np.ndarray) -> np.ndarray:
    mark = np.zeros(Hu.shape, dtype=bool)
    for ax in range(3):
        jump = Hu != np.roll(Hu, -1, axis=ax)
        mark |= jump | np.roll(jump, 1, axis=ax)
    return np.argwhere(mark)


def phases(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> PhaseField:
    """Phase split using the node-centered ``d3p``; ties count as saturated."""
    _check(p, data)
    c = data.constants
    g = p.grid
    d3p = ops.first_derivative(p.values, g, 3, mode, "centered")
    s = c.kappa * data.M.values - d3p
    Hu = (s < 0).astype(float)
    Hs = 1.0 - Hu
    q = c.C_q * (Hu / c.N_u2 + Hs / c.N_s2) * s
    theta = c.C_theta_e * (d3p / c.N_s2 + c.a * np.minimum(s, 0.0))
    return PhaseField(ScalarField(g, Hu), ScalarField(g, Hs), ScalarField(g, q),
                      ScalarField(g, theta), ScalarField(g, s), _sign_change_nodes(Hu))


# ---------------------------------------------------------------------------
# conserved energy (unit constants only)

def _require_unit(data: InversionData) -> None:
    if not data.constants.is_unit:
        raise ConstantsNotUnit("the conserved-energy comparison is defined for unit constants only")


def conserved_energy(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> float:
    """``sum 1/2|grad p|^2 + 1/4 (M + d3p) min0(M - d3p)``."""
    _require_unit(data)
    g1, g2, g3, Mf, s = _state(p, data, mode)
    dens = 0.5 * (g1 ** 2 + g2 ** 2 + g3 ** 2) + 0.25 * (Mf + g3) * np.minimum(s, 0.0)
    return p.grid.dV * float(np.sum(dens))


def grad_conserved(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> ScalarField:
    """Residual of the weak form ``int grad p . grad phi - 1/2 d3p H_u d3phi``."""
    _require_unit(data)
    g1, g2, g3, _, s = _state(p, data, mode)
    g = p.grid
    Hu = (s < 0).astype(float)
    r = sum(ops.gradient_adjoint(gi, g, ax, mode) for ax, gi in ((1, g1), (2, g2)))
    r = r + ops.gradient_adjoint(g3 - 0.5 * g3 * Hu, g, 3, mode)
    return project_mean_zero(ScalarField(g, r))


def nonlinear_forcing(p: ScalarField, data: InversionData, mode: str = DEFAULT_MODE) -> ScalarField:
    """``PV - 1/2 d3(M H_u)``: what ``grad_energy`` adds to ``grad_conserved``."""
    _require_unit(data)
    _, _, _, Mf, s = _state(p, data, mode)
    Hu = (s < 0).astype(float)
    r = 0.5 * ops.gradient_adjoint(Mf * Hu, p.grid, 3, mode) + data.PV.values
    return project_mean_zero(ScalarField(p.grid, r))


# ---------------------------------------------------------------------------
# agnostic smoothing probe

def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


@dataclasses.dataclass(frozen=True)
class LogisticStep:
    """Smooth unsaturated indicator ``H_u(M, s) = sigma(-(M - s) / delta)``."""

    delta: float = 0.1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def H_u(self, M, s):
        return _sigmoid(-(np.asarray(M) - np.asarray(s)) / self.delta)

    def dH_u_ds(self, M, s):
        h = self.H_u(M, s)
        return h * (1.0 - h) / self.delta


def agnostic_coefficient(p: ScalarField, data: InversionData, hu_model=None,
                         mode: str = DEFAULT_MODE) -> tuple[ScalarField, float]:
    """Coefficient of ``d3^2 p`` after smoothing the Heaviside directly:
    ``1 - H_u/2 + (M - d3p) dH_u/ds / 2``.  Returns the field and its minimum.
    """
    _check(p, data)
    model = hu_model if hu_model is not None else LogisticStep()
    d3p = ops.first_derivative(p.values, p.grid, 3, mode, "centered")
    M = data.M.values
    coef = 1.0 - 0.5 * model.H_u(M, d3p) + 0.5 * (M - d3p) * model.dH_u_ds(M, d3p)
    return ScalarField(p.grid, coef), float(np.min(coef))
