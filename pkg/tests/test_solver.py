import json
import math

import numpy as np
import pytest

from pvminv import energy as en
from pvminv import operators as ops
from pvminv.errors import ConfigInvalid, MaxIterExceeded, NotCentered, NotMeanZero
from pvminv.exact1d import Profile1D, baseball_cap, build_exact
from pvminv.grid import GridSpec, ScalarField, random_field
from pvminv.mollifier import MollifierSpec, tabulated_profile
from pvminv.solver import (METHODS, SolveConfig, certified_gap, continuation_solve, geometric_schedule, solve,
                           solve_eps)

BB = METHODS[1]


@pytest.fixture(scope="module")
def cap_solution():
    g = GridSpec((4, 4, 128))
    data, p_exact = baseball_cap(g)
    p, rep = solve(ScalarField.zeros(g), data, SolveConfig(tol_gap=1e-11))
    return g, data, p, rep


class TestConfig:
    def test_default_step(self, cube8):
        data = en.InversionData(ScalarField.zeros(cube8), ScalarField.zeros(cube8))
        assert SolveConfig().step_for(data) == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [dict(max_iter=0), dict(tol_gap=0.0), dict(tol_gap=-1.0), dict(method="newton")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigInvalid):
            SolveConfig(**kw)

    def test_step_upper_limit(self, cube8):
        data = en.InversionData(ScalarField.zeros(cube8), ScalarField.zeros(cube8))
        with pytest.raises(ConfigInvalid):
            SolveConfig(step=2 / 1.5).step_for(data)

    def test_default_tolerance_scales(self, column256):
        data, _ = baseball_cap(column256)
        assert SolveConfig().tol_for(data) == pytest.approx(1e-8 * max(1.0, ops.norm_L2(data.M)))


class TestSolve:
    @pytest.mark.parametrize("method", METHODS)
    def test_inactive_min_gives_zero(self, cube8, rng, method):
        data = en.InversionData(ScalarField.constant(cube8, 1.0), ScalarField.zeros(cube8))
        p, rep = solve(random_field(cube8, rng, amplitude=0.01), data, SolveConfig(method=method))
        assert ops.norm_H1(p) <= rep.final_gap_bound <= rep.tol_gap
        assert rep.converged
        assert p.mean_zero

    @pytest.mark.parametrize("method", METHODS)
    def test_baseball_cap(self, method):
        g = GridSpec((4, 4, 256))
        data, _ = baseball_cap(g)
        p, rep = solve(ScalarField.zeros(g), data, SolveConfig(method=method))
        d3 = ops.diff(p, 3).values[0, 0]
        x = g.coords(3)
        ref = -np.minimum(np.sin(x), 0.0) - 1 / math.pi
        assert np.linalg.norm(d3 - ref) / np.linalg.norm(ref) <= 1e-2

    def test_manufactured(self):
        n = 256
        sol = build_exact(Profile1D.named("cos", n), Profile1D.named("sin+shift:2", n))
        g = GridSpec.column(n)
        p, _ = solve(ScalarField.zeros(g), sol.data(g))
        pe = sol.p_field(g)
        assert ops.norm_H1(p - pe) / ops.norm_H1(pe) <= 1e-3

    def test_general_constants(self):
        k = en.PhysicalConstants(f=1.5, B_theta_e=0.8, B_q=1.2, C_theta_e=1.0, C_q=0.7)
        n = 256
        sol = build_exact(Profile1D.named("cos", n), Profile1D.named("sin+shift:0.2", n), k)
        g = GridSpec.column(n)
        p, rep = solve(ScalarField.zeros(g), sol.data(g))
        pe = sol.p_field(g)
        assert rep.mu == pytest.approx(k.mu)
        assert ops.norm_H1(p - pe) / ops.norm_H1(pe) <= 1e-2

    def test_spectral_mode(self):
        g = GridSpec((4, 4, 256))
        data, p_exact = baseball_cap(g)
        p, rep = solve(ScalarField.zeros(g), data, SolveConfig(mode="spectral"))
        assert rep.converged
        assert ops.norm_H1(p - p_exact, "spectral") / ops.norm_H1(p_exact, "spectral") <= 1e-2

    def test_initial_guess_must_be_mean_zero(self, cube8):
        data = en.InversionData(ScalarField.zeros(cube8), ScalarField.zeros(cube8))
        with pytest.raises(NotMeanZero):
            solve(ScalarField.constant(cube8, 1.0), data)

    def test_max_iter(self, column256):
        data, _ = baseball_cap(column256)
        with pytest.raises(MaxIterExceeded) as e:
            solve(ScalarField.zeros(column256), data, SolveConfig(max_iter=2))
        assert e.value.best.mean_zero
        assert e.value.gap == pytest.approx(min(e.value.report.gap_history))
        assert e.value.report.iterations == 2

    def test_monotone_energy_and_rate(self, cap_solution):
        _, _, _, rep = cap_solution
        E = np.array(rep.energy_history)
        assert np.all(np.diff(E) <= 1e-12 * max(1.0, abs(E[0])))
        gaps = np.array(rep.gap_history)
        ratios = gaps[1:] / gaps[:-1]
        assert np.median(ratios[len(ratios) // 2:]) <= 2 / 3 + 1e-6

    def test_bb_is_monotone(self, column256):
        data, _ = baseball_cap(column256)
        _, rep = solve(ScalarField.zeros(column256), data, SolveConfig(method=BB))
        E = np.array(rep.energy_history)
        assert np.all(np.diff(E) <= 1e-12 * max(1.0, abs(E[0])))

    def test_sandwich(self, cap_solution):
        g, data, p_final, rep = cap_solution
        # replay the deterministic iteration to get the iterates themselves
        iterates = []
        solve(ScalarField.zeros(g), data, SolveConfig(tol_gap=1e-11),
              callback=lambda r: iterates.append(r))
        E_final = rep.final_energy
        for r in iterates:
            gap, dist = r["energy"] - E_final, r["gap_bound"]
            assert gap <= dist ** 2 / 4 * (1 + 1e-8) + 1e-12 * abs(E_final)

    def test_uniqueness(self):
        g = GridSpec((4, 4, 128))
        data, _ = baseball_cap(g)
        a, ra = solve(random_field(g, np.random.default_rng(1), kmax=8), data)
        b, rb = solve(random_field(g, np.random.default_rng(2), kmax=8), data)
        assert ops.norm_H1(a - b) <= ra.final_gap_bound + rb.final_gap_bound

    def test_trace_jsonl(self, cap_solution):
        rep = cap_solution[3]
        lines = rep.trace_jsonl().splitlines()
        assert len(lines) == rep.iterations + 1
        rec = json.loads(lines[-1])
        assert set(rec) == {"iter", "energy", "gap_bound", "epsilon"}
        assert rec["iter"] == rep.iterations

    def test_report_phase_summary(self, cap_solution):
        rep = cap_solution[3]
        assert rep.phase_summary["unsaturated"] + rep.phase_summary["saturated"] == pytest.approx(1.0)
        assert rep.phase_summary["unsaturated"] == pytest.approx(0.5, abs=0.02)


class TestCertificate:
    def test_at_zero(self, cube16):
        PV = ScalarField.from_function(cube16, lambda x1, x2, x3: np.cos(x3))
        data = en.InversionData(ScalarField.constant(cube16, 1.0), PV)
        egap, dist = certified_gap(ScalarField.zeros(cube16), data)
        assert dist == pytest.approx(2 * ops.norm_Hneg1(PV), rel=1e-12)
        assert egap == pytest.approx(ops.norm_Hneg1(PV) ** 2, rel=1e-12)
        _, dist_s = certified_gap(ScalarField.zeros(cube16), data, mode="spectral")
        assert dist_s == pytest.approx(2 * math.sqrt((2 * math.pi) ** 3 / 2), rel=1e-12)

    def test_converged(self, cap_solution):
        _, data, p, rep = cap_solution
        egap, dist = certified_gap(p, data)
        assert dist <= rep.tol_gap
        assert egap <= rep.tol_gap ** 2

    @pytest.mark.parametrize("delta", [1e-2, 1e-1, 1.0])
    def test_perturbation_bounds(self, cap_solution, delta):
        g, data, p, rep = cap_solution
        phi = random_field(g, np.random.default_rng(4), kmax=6)
        dphi = phi * (delta / ops.norm_H1(phi))
        _, dist = certified_gap(p + dphi, data)
        assert dist >= delta - rep.final_gap_bound
        assert dist <= 3 * delta * (1 + 1e-8) + rep.final_gap_bound


class TestRegularized:
    def test_zero_width_is_solve(self, column256):
        data, _ = baseball_cap(column256)
        a, ra = solve(ScalarField.zeros(column256), data)
        b, rb = solve_eps(ScalarField.zeros(column256), data, MollifierSpec.named("bump", 0.0))
        assert np.array_equal(a.values, b.values)
        assert ra.energy_history == rb.energy_history

    def test_closeness_bound(self, column256):
        data, _ = baseball_cap(column256)
        p0, r0 = solve(ScalarField.zeros(column256), data)
        for eps in (0.2, 0.05):
            m = MollifierSpec.named("bump", eps)
            pe, re = solve_eps(ScalarField.zeros(column256), data, m)
            bound = math.sqrt(2) * m.C_phi * math.sqrt(column256.volume) * eps
            assert ops.norm_H1(pe - p0) <= bound + r0.final_gap_bound + re.final_gap_bound

    def test_no_interface_in_band(self):
        n = 128
        sol = build_exact(Profile1D.named("cos", n), Profile1D.named("sin+shift:2", n))
        g = GridSpec.column(n)
        data = sol.data(g)
        p, r = solve(ScalarField.zeros(g), data)
        pe, re = solve_eps(ScalarField.zeros(g), data, MollifierSpec.named("bump", 0.5))
        assert ops.norm_H1(pe - p) <= r.final_gap_bound + re.final_gap_bound

    def test_not_centered(self, column256):
        data, _ = baseball_cap(column256)
        y = np.linspace(-1, 1, 21)
        m = MollifierSpec(tabulated_profile(y, (y > 0).astype(float)), 0.1)
        with pytest.raises(NotCentered):
            solve_eps(ScalarField.zeros(column256), data, m)


class TestContinuation:
    def test_matches_direct_solve(self):
        g = GridSpec((4, 4, 256))
        data, _ = baseball_cap(g)
        p0 = random_field(g, np.random.default_rng(3), kmax=12, amplitude=5.0)
        cfg = SolveConfig(continuation=(0.1, 0.05, 0.0))
        a, ra = solve(p0, data, cfg)
        b, rb = continuation_solve(p0, data, MollifierSpec.named("bump", 0.1), cfg)
        assert ops.norm_H1(a - b) <= 2 * cfg.tol_for(data)
        assert [e for e, _ in rb.epsilon_trace] == [0.1, 0.05, 0.0]
        assert sum(i for _, i in rb.epsilon_trace) == rb.iterations
        # with a mesh-independent linear rate the homotopy does not cost extra work
        assert rb.iterations <= ra.iterations + len(rb.epsilon_trace)

    def test_single_zero_stage_is_solve(self, column256):
        data, _ = baseball_cap(column256)
        cfg = SolveConfig(continuation=(0.0,))
        a, _ = solve(ScalarField.zeros(column256), data)
        b, rb = continuation_solve(ScalarField.zeros(column256), data, MollifierSpec.named("bump", 0.1), cfg)
        assert np.array_equal(a.values, b.values)
        assert rb.epsilon_trace == [(0.0, rb.iterations)]

    def test_zero_appended(self, column256):
        data, _ = baseball_cap(column256)
        cfg = SolveConfig(continuation=(0.2, 0.1))
        _, rep = continuation_solve(ScalarField.zeros(column256), data, MollifierSpec.named("bump", 0.1), cfg)
        assert rep.epsilon_trace[-1][0] == 0.0
        assert rep.final_gap_bound <= rep.tol_gap

    @pytest.mark.parametrize("sched", [None, ()])
    def test_empty_schedule(self, column256, sched):
        data, _ = baseball_cap(column256)
        with pytest.raises(ConfigInvalid):
            continuation_solve(ScalarField.zeros(column256), data, MollifierSpec.named("bump", 0.1),
                               SolveConfig(continuation=sched))

    def test_increasing_schedule_rejected(self, column256):
        data, _ = baseball_cap(column256)
        with pytest.raises(ConfigInvalid):
            continuation_solve(ScalarField.zeros(column256), data, MollifierSpec.named("bump", 0.1),
                               SolveConfig(continuation=(0.05, 0.1)))

    def test_geometric_schedule(self):
        assert geometric_schedule(0.2, 0.5, stages=3) == (0.2, 0.1, 0.05, 0.0)
        assert geometric_schedule(0.2, 0.5, floor=0.08, stages=5) == (0.2, 0.1, 0.0)
        with pytest.raises(ConfigInvalid):
            geometric_schedule(0.2, 1.5)
