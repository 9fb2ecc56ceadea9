"""Preconditioned gradient descent with certified stopping.

The iteration is ``p <- p - step * (-lap)^{-1} r`` with ``r`` the residual of
``grad_energy``.  In the H1 metric the energy is ``mu``-strongly convex with
an ``L``-Lipschitz derivative (``mu = 1/2``, ``L = 3/2`` for unit constants),
so after every step the computable quantity ``||r||_{H-1}`` certifies

    E(p) - min E <= ||r||^2_{H-1} / (2 mu),    ||p - p*||_{H1} <= ||r||_{H-1} / mu.

Both hold for the discrete energy exactly, since the discrete operators are
adjoint-consistent.  Stopping is on the distance bound.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Callable, Optional, Sequence

import numpy as np

from . import energy as en
from . import operators as ops
from .errors import ConfigInvalid, MaxIterExceeded
from .grid import ScalarField, project_mean_zero
from .mollifier import MollifierSpec
from .operators import DEFAULT_MODE

METHODS = ("preconditioned-gradient", "preconditioned-gradient+BB-step")
MONOTONE_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    ``step=None`` means ``2 / (mu + L)``.  ``tol_gap=None`` means
    ``1e-8 * scale`` with ``scale = max(1, ||M||_L2 + ||PV||_H-1)``.
    ``mu`` and ``L`` default to the constants of the data.
    """

    method: str = "preconditioned-gradient"
    step: Optional[float] = None
    tol_gap: Optional[float] = None
    max_iter: int = 500
    continuation: Optional[tuple] = None
    mode: str = DEFAULT_MODE
    mu: Optional[float] = None
    L: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigInvalid(f"method must be one of {METHODS}, got {self.method!r}")
        ops.check_mode(self.mode)
        if int(self.max_iter) < 1:
            raise ConfigInvalid(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol_gap is not None and not self.tol_gap > 0:
            raise ConfigInvalid(f"tol_gap must be positive, got {self.tol_gap}")
        if self.continuation is not None:
            object.__setattr__(self, "continuation", tuple(float(e) for e in self.continuation))

    def constants_for(self, data: en.InversionData) -> tuple[float, float]:
        mu = self.mu if self.mu is not None else data.constants.mu
        L = self.L if self.L is not None else data.constants.lipschitz
        return mu, L

    def step_for(self, data: en.InversionData) -> float:
        mu, L = self.constants_for(data)
        step = self.step if self.step is not None else 2.0 / (mu + L)
        if not 0 < step < 2.0 / L:
            raise ConfigInvalid(f"step must lie in (0, 2/L) = (0, {2.0 / L:.6g}), got {step}")
        return step

    def tol_for(self, data: en.InversionData) -> float:
        return self.tol_gap if self.tol_gap is not None else 1e-8 * data.scale(self.mode)


@dataclasses.dataclass
class SolveReport:
    iterations: int = 0
    energy_history: list = dataclasses.field(default_factory=list)
    gap_history: list = dataclasses.field(default_factory=list)
    epsilon_history: list = dataclasses.field(default_factory=list)
    final_gap_bound: float = math.inf
    final_energy: float = math.nan
    phase_summary: dict = dataclasses.field(default_factory=dict)
    epsilon_trace: list = dataclasses.field(default_factory=list)
    converged: bool = False
    tol_gap: float = math.nan
    mu: float = 0.5
    L: float = 1.5
    note: str = ("certificates are exact for the discrete energy; they bound the distance "
                 "to the discrete minimizer, not to the continuum solution")

    def trace_records(self) -> list[dict]:
        return [{"iter": i, "energy": e, "gap_bound": g, "epsilon": eps}
                for i, (e, g, eps) in enumerate(zip(self.energy_history, self.gap_history, self.epsilon_history))]

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace_records())

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["epsilon_trace"] = [list(t) for t in self.epsilon_trace]
        return d


def _mean_zero_start(p0: ScalarField) -> ScalarField:
    if not p0.mean_zero:
        scale = max(1.0, float(np.max(np.abs(p0.values))))
        if abs(p0.mean()) > 1e-10 * scale:
            from .errors import NotMeanZero
            raise NotMeanZero(f"initial guess has average {p0.mean():.3e}")
    return project_mean_zero(p0)


def _prepare(p0, data, mode):
    """Spectral derivatives cannot see Nyquist modes; drop them from the inputs."""
    data.M.check_grid(p0)
    p = _mean_zero_start(p0)
    if mode == "spectral":
        g = p.grid
        p = project_mean_zero(ScalarField(g, ops.filter_nyquist(p.values, g)))
        PV = project_mean_zero(ScalarField(g, ops.filter_nyquist(data.PV.values, g)))
        data = dataclasses.replace(data, PV=PV)
    return p, data


def certified_gap(p: ScalarField, data: en.InversionData, mode: str = DEFAULT_MODE,
                  m: Optional[MollifierSpec] = None) -> tuple[float, float]:
    """``(||r||^2_{H-1} / (2 mu), ||r||_{H-1} / mu)``; ``(||r||^2, 2||r||)`` for unit constants."""
    r = en.grad_energy(p, data, mode) if m is None or m.eps == 0 else en.grad_energy_eps(p, data, m, mode)
    rn = ops.norm_Hneg1(r, mode)
    mu = data.constants.mu
    return rn * rn / (2.0 * mu), rn / mu


def _objective(data, m, mode):
    if m is None or m.eps == 0:
        return (lambda p: en.energy(p, data, mode)), (lambda p: en.grad_energy(p, data, mode))
    m.require_centered()
    return (lambda p: en.energy_eps(p, data, m, mode)), (lambda p: en.grad_energy_eps(p, data, m, mode))


def _descend(p, data, cfg, m, tol, report, callback=None):
    """Run one stage; returns ``(p, converged, best_p, best_gap)``."""
    mode = cfg.mode
    E, dE = _objective(data, m, mode)
    mu, L = cfg.constants_for(data)
    step0 = cfg.step_for(data)
    eps = 0.0 if m is None else float(m.eps)
    g = p.grid

    e = E(p)
    r = dE(p)
    z = ops.inverse_laplacian_array(r.values, g, mode)
    rn = math.sqrt(max(ops.inner_L2(r, ScalarField(g, z)), 0.0))
    gap = rn / mu
    best_p, best_gap = p, gap
    iters = 0

    def log():
        report.energy_history.append(e)
        report.gap_history.append(gap)
        report.epsilon_history.append(eps)
        if callback is not None:
            callback({"iter": len(report.energy_history) - 1, "energy": e, "gap_bound": gap, "epsilon": eps})

    log()
    prev = None
    while gap > tol and iters < cfg.max_iter:
        step = step0
        if cfg.method.endswith("BB-step") and prev is not None:
            s_vals, y_r = p.values - prev[0].values, r.values - prev[1].values
            sy = g.dV * float(np.sum(s_vals * y_r))
            ss = ops.norm_H1(ScalarField(g, s_vals), mode) ** 2
            if sy > 0 and ss > 0:
                step = min(max(ss / sy, 1.0 / L), 1.0 / mu)
        while True:
            p_new = project_mean_zero(ScalarField(g, p.values - step * z))
            e_new = E(p_new)
            if e_new <= e + MONOTONE_SLACK * max(1.0, abs(e)) or step <= step0:
                break
            step = step0  # safeguard: fall back to the fixed step
        prev = (p, r)
        p, e = p_new, e_new
        r = dE(p)
        z = ops.inverse_laplacian_array(r.values, g, mode)
        rn = math.sqrt(max(ops.inner_L2(r, ScalarField(g, z)), 0.0))
        gap = rn / mu
        iters += 1
        log()
        if gap < best_gap:
            best_p, best_gap = p, gap
    report.iterations += iters
    report.epsilon_trace.append((eps, iters))
    return p, gap <= tol, best_p, best_gap


def _finish(p, data, cfg, report, m, converged, best_p, best_gap):
    report.final_energy = report.energy_history[-1]
    report.final_gap_bound = report.gap_history[-1]
    report.converged = converged
    ph = en.phases(p, data, cfg.mode)
    report.phase_summary = {"unsaturated": ph.unsaturated_fraction, "saturated": ph.saturated_fraction}
    if not converged:
        raise MaxIterExceeded(best_p, best_gap, report)
    return p, report


def _new_report(data, cfg, tol):
    mu, L = cfg.constants_for(data)
    return SolveReport(tol_gap=tol, mu=mu, L=L)


def solve(p0: ScalarField, data: en.InversionData, cfg: SolveConfig = SolveConfig(),
          callback: Optional[Callable[[dict], None]] = None) -> tuple[ScalarField, SolveReport]:
    """Minimize the energy from ``p0``; raises ``MaxIterExceeded`` if not certified in time."""
    return solve_eps(p0, data, None, cfg, callback)


def solve_eps(p0: ScalarField, data: en.InversionData, m: Optional[MollifierSpec],
              cfg: SolveConfig = SolveConfig(),
              callback: Optional[Callable[[dict], None]] = None) -> tuple[ScalarField, SolveReport]:
    """Minimize the mollified energy (``m=None`` or ``m.eps == 0``: the original one)."""
    if m is not None:
        m.require_centered()
    p, data = _prepare(p0, data, cfg.mode)
    tol = cfg.tol_for(data)
    report = _new_report(data, cfg, tol)
    p, conv, best_p, best_gap = _descend(p, data, cfg, m, tol, report, callback)
    return _finish(p, data, cfg, report, m, conv, best_p, best_gap)


def geometric_schedule(eps0: float, factor: float = 0.5, floor: float = 0.0, stages: int = 4) -> tuple:
    """``eps0, eps0*factor, ...`` (``stages`` terms, stopping above ``floor``), then 0."""
    if not (eps0 > 0 and 0 < factor < 1 and stages >= 1):
        raise ConfigInvalid("geometric schedule needs eps0 > 0, 0 < factor < 1, stages >= 1")
    out = []
    e = float(eps0)
    for _ in range(stages):
        if e <= floor:
            break
        out.append(e)
        e *= factor
    return tuple(out) + (0.0,)


def continuation_solve(p0: ScalarField, data: en.InversionData, m: MollifierSpec,
                       cfg: SolveConfig, callback: Optional[Callable[[dict], None]] = None
                       ) -> tuple[ScalarField, SolveReport]:
    """Solve along ``cfg.continuation`` (decreasing widths), warm-starting each stage.

    A final ``eps = 0`` stage is appended if the schedule does not end with
    one.  Intermediate stages only need to be as accurate as the distance
    between neighbouring minimizers, ``C_phi vol^{1/2} eps``.
    """
    sched = cfg.continuation
    if sched is None or len(sched) == 0:
        raise ConfigInvalid("continuation_solve needs a non-empty schedule")
    if any(e < 0 for e in sched) or any(b > a for a, b in zip(sched, sched[1:])):
        raise ConfigInvalid(f"schedule must be nonnegative and nonincreasing, got {sched}")
    if sched[-1] != 0.0:
        sched = tuple(sched) + (0.0,)
    m.require_centered()
    p, data = _prepare(p0, data, cfg.mode)
    tol = cfg.tol_for(data)
    report = _new_report(data, cfg, tol)
    vol_half = math.sqrt(p.grid.volume)
    conv, best_p, best_gap = False, p, math.inf
    for eps in sched:
        stage_m = m.with_eps(eps)
        stage_tol = tol if eps == 0 else max(tol, m.C_phi * vol_half * eps)
        p, conv, best_p, best_gap = _descend(p, data, cfg, stage_m, stage_tol, report, callback)
        if not conv and eps > 0:
            p = best_p
    return _finish(p, data, cfg, report, m.with_eps(0.0), conv, best_p, best_gap)
