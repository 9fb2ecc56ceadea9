"""Post-hoc measurements on solutions: interfaces, Hölder exponents, rate fits
and randomized audits of the convexity inequalities."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import energy as en
from . import operators as ops
from .errors import ConfigInvalid, RadiiOutOfRange
from .grid import GridSpec, ScalarField, random_field
from .mollifier import MollifierSpec, min0, min_eps, named_profile
from .solver import SolveConfig, solve, solve_eps

DEGENERATE_RTOL = 1e-14


# ---------------------------------------------------------------------------
# interfaces

@dataclasses.dataclass
class InterfaceGeometry:
    """Nodes adjacent to a phase change and zero crossings of ``kappa M - d3p`` along x3.

    ``crossings`` has rows ``(i1, i2, x3)``: one per sign change in each
    vertical column, located by linear interpolation.
    """

    marked_cells: np.ndarray
    crossings: np.ndarray
    unsaturated_fraction: float
    saturated_fraction: float

    def column(self, i1: int = 0, i2: int = 0) -> np.ndarray:
        sel = (self.crossings[:, 0] == i1) & (self.crossings[:, 1] == i2)
        return np.sort(self.crossings[sel, 2])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i1", "i2", "x3"])
        for a, b, x in self.crossings:
            w.writerow([int(a), int(b), repr(float(x))])
        return buf.getvalue()


def interface_extract(ph: en.PhaseField) -> InterfaceGeometry:
    grid = ph.deficit.grid
    s = ph.deficit.values
    Hu = ph.H_u.values
    h3 = grid.h[2]
    nxt = np.roll(s, -1, axis=2)
    change = Hu != np.roll(Hu, -1, axis=2)
    i1, i2, j = np.nonzero(change)
    s0, s1 = s[i1, i2, j], nxt[i1, i2, j]
    denom = np.where(s0 != s1, s0 - s1, 1.0)
    frac = np.clip(s0 / denom, 0.0, 1.0)
    x3 = np.mod((j + frac) * h3, grid.L[2])
    rows = np.column_stack([i1, i2, x3]) if i1.size else np.zeros((0, 3))
    return InterfaceGeometry(ph.interface_cells, rows, ph.unsaturated_fraction, ph.saturated_fraction)


# ---------------------------------------------------------------------------
# Hölder exponents from the growth of local Dirichlet integrals

@dataclasses.dataclass
class HolderReport:
    alpha_estimates: np.ndarray
    alpha_global: float
    ball_centers: np.ndarray
    radii: np.ndarray
    integrals: np.ndarray
    degenerate: np.ndarray
    r2: np.ndarray

    def to_dict(self) -> dict:
        return {
            "alpha_global": self.alpha_global,
            "alpha_estimates": [None if math.isnan(a) else float(a) for a in self.alpha_estimates],
            "ball_centers": self.ball_centers.tolist(),
            "radii": self.radii.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "x3", "alpha", "r2", "degenerate"])
        for c, a, r2, dg in zip(self.ball_centers, self.alpha_estimates, self.r2, self.degenerate):
            w.writerow([*(repr(float(v)) for v in c), repr(float(a)), repr(float(r2)), int(dg)])
        return buf.getvalue()


@dataclasses.dataclass(frozen=True)
class CampanatoFit:
    alpha: float
    alpha_raw: float
    beta: float
    r2: float
    degenerate: bool


def _linfit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def fit_campanato_exponent(radii, integrals, d: int = 3, floor: float = 0.0) -> CampanatoFit:
    """Fit ``int_{B_r} |grad u|^2 ~ r^beta`` and return ``alpha = (beta - d + 2)/2``.

    Radii whose integral is at or below ``floor`` are dropped; with fewer than
    two left the fit is degenerate and ``alpha`` is NaN.
    """
    r = np.asarray(radii, dtype=float)
    I = np.asarray(integrals, dtype=float)
    keep = I > floor
    if np.count_nonzero(keep) < 2:
        return CampanatoFit(math.nan, math.nan, math.nan, math.nan, True)
    beta, _, r2 = _linfit(np.log(r[keep]), np.log(I[keep]))
    raw = 0.5 * (beta - d + 2)
    return CampanatoFit(min(max(raw, 0.0), 1.0), raw, beta, r2, False)


def _ball_offsets(n_per_radius: int = 8) -> np.ndarray:
    t = np.arange(-n_per_radius, n_per_radius + 1) / n_per_radius
    a, b, c = np.meshgrid(t, t, t, indexing="ij")
    pts = np.column_stack([a.ravel(), b.ravel(), c.ravel()])
    return pts[np.sum(pts ** 2, axis=1) <= 1.0]


def _resolve_centers(grid: GridSpec, centers, seed: int) -> np.ndarray:
    if isinstance(centers, (int, np.integer)):
        rng = np.random.default_rng(seed)
        return rng.uniform(0.0, 1.0, size=(int(centers), 3)) * np.asarray(grid.L)
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    if c.shape[1] != 3:
        raise ValueError("centers must be an integer count or an (k, 3) array of points")
    return c


def ball_integrals(density: np.ndarray, grid: GridSpec, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """``int_{B(c, r)} density`` for each center and radius, by periodic trilinear
    interpolation at a lattice of spacing ``r/8`` inside the ball."""
    offs = _ball_offsets()
    h = np.asarray(grid.h)
    out = np.empty((len(centers), len(radii)))
    for i, c in enumerate(centers):
        for k, r in enumerate(radii):
            pts = (c[None, :] + r * offs) / h[None, :]
            vals = ndimage.map_coordinates(density, pts.T, order=1, mode="grid-wrap")
            out[i, k] = (4.0 / 3.0) * math.pi * r ** 3 * float(vals.mean())
    return out


def holder_estimate(u: ScalarField, radii: Sequence[float], centers=16, seed: int = 0,
                    mode: str = ops.DEFAULT_MODE) -> HolderReport:
    """Per-ball Campanato exponents of ``u`` and their median.

    ``centers`` is either a number of uniformly random centers (drawn from
    ``seed``) or an explicit ``(k, 3)`` array.  Balls are geodesic on the torus
    and may not exceed a quarter of the shortest period.
    """
    grid = u.grid
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 2:
        raise ConfigInvalid("need at least two radii to fit an exponent")
    cap = 0.25 * min(grid.L)
    if radii[0] <= 0 or radii[-1] > cap:
        raise RadiiOutOfRange(f"radii must lie in (0, {cap:.6g}], got [{radii[0]:.6g}, {radii[-1]:.6g}]")
    c = _resolve_centers(grid, centers, seed)
    dens = sum(ops.diff(u, ax, mode).values ** 2 for ax in (1, 2, 3))
    I = ball_integrals(dens, grid, c, radii)
    floor = DEGENERATE_RTOL * max(1.0, float(np.max(dens)) * max(grid.L) ** 3)
    fits = [fit_campanato_exponent(radii, row, floor=floor) for row in I]
    alphas = np.array([f.alpha for f in fits])
    degen = np.array([f.degenerate for f in fits])
    good = alphas[~degen]
    alpha_global = float(np.median(good)) if good.size else math.nan
    return HolderReport(alphas, alpha_global, c, radii, I, degen, np.array([f.r2 for f in fits]))


def synthetic_holder_field(grid: GridSpec, s: float, center=None) -> ScalarField:
    """Periodized ``|x - x0|^s`` built from its Fourier symbol ``|k|^{-(s+3)}``."""
    if not 0 < s < 2:
        raise ValueError("exponent must lie in (0, 2)")
    c = np.asarray(center if center is not None else [L / 2 for L in grid.L], dtype=float)
    k = [grid.wavenumbers(a) for a in (1, 2, 3)]
    k1, k2, k3 = np.meshgrid(*k, indexing="ij")
    kk = np.sqrt(k1 ** 2 + k2 ** 2 + k3 ** 2)
    sym = np.where(kk > 0, np.where(kk > 0, kk, 1.0) ** (-(s + 3.0)), 0.0)
    phase = np.exp(-1j * (k1 * c[0] + k2 * c[1] + k3 * c[2]))
    vals = np.fft.ifftn(sym * phase).real
    vals *= -1.0 / max(float(np.max(np.abs(vals))), 1e-300)
    return ScalarField(grid, vals - vals.mean(), mean_zero=True)


# ---------------------------------------------------------------------------
# rate fits

@dataclasses.dataclass
class RateFit:
    xs: list
    ys: list
    slope: float
    r2: float
    bound_satisfied: bool
    envelope: list = dataclasses.field(default_factory=list)
    gaps: list = dataclasses.field(default_factory=list)
    degenerate: bool = False
    label: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "envelope", "gap"])
        env = self.envelope or [math.nan] * len(self.xs)
        gaps = self.gaps or [math.nan] * len(self.xs)
        for row in zip(self.xs, self.ys, env, gaps):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _rate(xs, ys):
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if np.any(ys <= 0):
        return 0.0, 0.0, True
    slope, _, r2 = _linfit(np.log(xs), np.log(ys))
    return slope, r2, False


def _check_decreasing(xs, what):
    if len(xs) < 2:
        raise ConfigInvalid(f"{what} needs at least two points to fit a rate")
    if any(b >= a for a, b in zip(xs, xs[1:])):
        raise ConfigInvalid(f"{what} must be strictly decreasing, got {list(xs)}")


def epsilon_sweep(data: en.InversionData, mollifier, eps_list: Sequence[float],
                  cfg: SolveConfig = SolveConfig(), p0: Optional[ScalarField] = None) -> RateFit:
    """Distance between regularized and unregularized minimizers as ``eps`` shrinks.

    ``bound_satisfied`` checks every distance against
    ``sqrt(2) C_phi vol^{1/2} eps`` plus twice the certified solver gaps.
    The fit is flagged degenerate when the distances are at solver noise.
    """
    eps_list = [float(e) for e in eps_list]
    _check_decreasing(eps_list, "eps_list")
    if eps_list[-1] <= 0:
        raise ConfigInvalid("eps values must be positive")
    m = MollifierSpec.named(mollifier, 1.0) if isinstance(mollifier, str) else mollifier
    m.require_centered()
    start = p0 if p0 is not None else ScalarField.zeros(data.grid)
    p_ref, rep0 = solve(start, data, cfg)
    vol_half = math.sqrt(data.grid.volume)
    ys, env, gaps = [], [], []
    for e in eps_list:
        pe, rep = solve_eps(start, data, m.with_eps(e), cfg)
        ys.append(ops.norm_H1(pe - p_ref, cfg.mode))
        env.append(math.sqrt(2.0) * m.C_phi * vol_half * e)
        gaps.append(rep.final_gap_bound + rep0.final_gap_bound)
    ok = all(y <= b + 2.0 * g for y, b, g in zip(ys, env, gaps))
    slope, r2, bad = _rate(eps_list, ys)
    noise = max(ys) <= 10.0 * max(gaps)
    return RateFit(eps_list, ys, slope, r2, ok, env, gaps, bad or noise, "epsilon")


def refinement_study(generator: Callable[[int], tuple], n_list: Sequence[int],
                     cfg: SolveConfig = SolveConfig()) -> RateFit:
    """Relative H1 error of ``solve`` against exact solutions as the grid is refined.

    ``generator(n)`` returns ``(data, p_exact)``; ``xs`` are the x3 spacings.
    ``bound_satisfied`` records a strictly decreasing error.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2:
        raise ConfigInvalid("n_list needs at least two grids to fit a rate")
    xs, ys, gaps = [], [], []
    for n in n_list:
        data, p_exact = generator(n)
        p, rep = solve(ScalarField.zeros(data.grid), data, cfg)
        xs.append(data.grid.h[2])
        ys.append(ops.norm_H1(p - p_exact, cfg.mode) / ops.norm_H1(p_exact, cfg.mode))
        gaps.append(rep.final_gap_bound)
    _check_decreasing(xs, "grid spacings")
    slope, r2, bad = _rate(xs, ys)
    ok = all(b < a for a, b in zip(ys, ys[1:]))
    return RateFit(xs, ys, slope, r2, ok, [], gaps, bad, "refinement")


# ---------------------------------------------------------------------------
# randomized inequality audit

AUDIT_TOL = 1e-10


@dataclasses.dataclass
class AuditEntry:
    worst_slack: float = math.inf
    worst_seed: Optional[int] = None
    failures: list = dataclasses.field(default_factory=list)
    skipped: bool = False

    def update(self, slack: float, seed: int, tol: float):
        if slack < self.worst_slack:
            self.worst_slack, self.worst_seed = float(slack), seed
        if slack < -tol:
            self.failures.append(seed)

    @property
    def passed(self) -> bool:
        return self.skipped or not self.failures


@dataclasses.dataclass
class AuditReport:
    entries: dict
    trials: int
    seed: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def to_dict(self) -> dict:
        return {
            "trials": self.trials, "seed": self.seed, "tolerance": self.tolerance, "passed": self.passed,
            "entries": {k: {"worst_slack": None if math.isinf(e.worst_slack) else e.worst_slack,
                            "worst_seed": e.worst_seed, "failures": e.failures,
                            "passed": e.passed, "skipped": e.skipped}
                        for k, e in self.entries.items()},
        }


AUDIT_NAMES = (
    "strong_monotonicity", "lipschitz_derivative", "coercivity", "midpoint_convexity",
    "first_order_convexity", "nonnegativity_shift", "eps_derivative_closeness",
    "density_convexity", "min_eps_lipschitz",
)


def inequality_audit(data: Optional[en.InversionData] = None, trials: int = 100, seed: int = 0,
                     grid: Optional[GridSpec] = None, mode: str = ops.DEFAULT_MODE,
                     mollifier: str = "bump") -> AuditReport:
    """Evaluate every convexity-type inequality on ``trials`` random pairs.

    Trial ``i`` draws everything from ``default_rng(seed + i)``, so a failing
    seed replays exactly.  Slacks are ``lhs - rhs`` for inequalities of the form
    ``lhs >= rhs``; tolerances scale with the data magnitude.
    """
    if trials < 1:
        raise ConfigInvalid("trials must be >= 1")
    if grid is None:
        grid = data.grid if data is not None else GridSpec.cube(16)
    entries = {k: AuditEntry() for k in AUDIT_NAMES}
    prof = named_profile(mollifier)
    vol_half = math.sqrt(grid.volume)
    for i in range(trials):
        s = seed + i
        rng = np.random.default_rng(s)
        d = data if data is not None else en.random_data(grid, rng, M_amplitude=float(rng.uniform(0.5, 2.0)))
        c = d.constants
        mu, L = c.mu, c.lipschitz
        sc = d.scale(mode)
        tol = AUDIT_TOL * sc * sc
        p1 = random_field(grid, rng, amplitude=float(rng.uniform(0.1, 3.0)))
        p2 = random_field(grid, rng, amplitude=float(rng.uniform(0.1, 3.0)))
        dp = p1 - p2
        r1, r2 = en.grad_energy(p1, d, mode), en.grad_energy(p2, d, mode)
        dr = r1 - r2
        n2 = ops.norm_H1(dp, mode) ** 2
        E1, E2 = en.energy(p1, d, mode), en.energy(p2, d, mode)

        entries["strong_monotonicity"].update(ops.inner_L2(dr, dp) - mu * n2, s, tol)
        entries["lipschitz_derivative"].update(L * math.sqrt(n2) - ops.norm_Hneg1(dr, mode), s, AUDIT_TOL * sc)
        mid = (p1 + p2) * 0.5
        entries["midpoint_convexity"].update(0.5 * (E1 + E2) - en.energy(mid, d, mode) - 0.125 * mu * n2, s, tol)
        entries["first_order_convexity"].update(E1 - E2 - ops.inner_L2(r2, dp) - 0.5 * mu * n2, s, tol)

        if c.is_unit:
            nM = ops.norm_L2(d.M) ** 2
            nPV = ops.norm_Hneg1(d.PV, mode) ** 2
            entries["coercivity"].update(E1 - (ops.norm_H1(p1, mode) ** 2 / 16 - 0.75 * nM - 4 * nPV), s, tol)
            entries["nonnegativity_shift"].update(E1 - ops.inner_L2(d.PV, p1) + 0.5 * nM, s, tol)
        else:
            entries["coercivity"].skipped = entries["nonnegativity_shift"].skipped = True

        eps = float(rng.uniform(0.01, 0.5))
        m = MollifierSpec(prof, eps)
        gap = ops.norm_Hneg1(r1 - en.grad_energy_eps(p1, d, m, mode), mode)
        entries["eps_derivative_closeness"].update(c.f * c.a * prof.C_phi * vol_half * eps - gap, s, AUDIT_TOL * sc)

        # pointwise density e(u) = |u|^2/2 - min0(M - u3)^2/4, minus |u|^2/4
        k = 4096
        Ms = rng.normal(0.0, 2.0, k)
        u, v = rng.normal(0.0, 2.0, (2, k, 3))

        def shifted(w):
            return 0.25 * np.sum(w ** 2, axis=1) - 0.25 * min0(Ms - w[:, 2]) ** 2

        slack = 0.5 * (shifted(u) + shifted(v)) - shifted(0.5 * (u + v))
        entries["density_convexity"].update(float(np.min(slack)), s, AUDIT_TOL * float(np.max(np.abs(u)) ** 2))

        x, y = rng.normal(0.0, 2.0 * eps, (2, k))
        mx, my = min_eps(x, m), min_eps(y, m)
        lip = np.abs(x - y) - np.abs(mx - my)
        mono = (mx - my) * np.sign(x - y)
        entries["min_eps_lipschitz"].update(float(min(np.min(lip), np.min(mono))), s, 1e-12)
    return AuditReport(entries, trials, seed, AUDIT_TOL)
