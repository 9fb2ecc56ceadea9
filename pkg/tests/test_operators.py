import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvminv import operators as ops
from pvminv.errors import NotMeanZero
from pvminv.grid import GridSpec, ScalarField, project_mean_zero, random_field

MODES = ("fd", "spectral")


def noise(grid, seed, mean=0.0):
    r = np.random.default_rng(seed)
    return ScalarField(grid, r.normal(mean, 1.0, grid.shape))


class TestDerivatives:
    @pytest.mark.parametrize("axis", [1, 2, 3])
    def test_fd_derivative_second_order(self, axis):
        errs = []
        for n in (16, 32, 64):
            g = GridSpec(tuple(n if a == axis - 1 else 4 for a in range(3)))
            x = g.mesh()[axis - 1]
            f = ScalarField(g, np.sin(x))
            errs.append(np.max(np.abs(ops.diff(f, axis).values - np.cos(x))))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.9)

    def test_spectral_derivative_exact(self):
        g = GridSpec((4, 4, 32))
        x3 = g.mesh()[2]
        f = ScalarField(g, np.sin(3 * x3))
        assert np.max(np.abs(ops.diff(f, 3, "spectral").values - 3 * np.cos(3 * x3))) < 1e-12

    @pytest.mark.parametrize("mode", MODES)
    def test_laplacian_of_constant(self, cube8, mode):
        assert np.max(np.abs(ops.laplacian(ScalarField.constant(cube8, 3.0), mode).values)) < 1e-12

    @pytest.mark.parametrize("mode", MODES)
    def test_laplacian_splits_into_horizontal_and_vertical(self, cube8, mode):
        f = noise(cube8, 1)
        lhs = ops.laplacian(f, mode).values
        rhs = ops.laplacian_h(f, mode).values + ops.diff2(f, 3, mode).values
        assert np.max(np.abs(lhs - rhs)) < 1e-11

    def test_spectral_split_with_first_derivatives(self, cube16, rng):
        # without Nyquist content, d3 d3 equals the second derivative
        f = random_field(cube16, rng, kmax=6)
        lhs = ops.laplacian(f, "spectral").values
        rhs = ops.laplacian_h(f, "spectral").values + ops.diff(ops.diff(f, 3, "spectral"), 3, "spectral").values
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(lhs))

    def test_wide_stencil_agrees_to_second_order(self):
        errs = []
        for n in (16, 32, 64):
            g = GridSpec((4, 4, n))
            f = ScalarField(g, np.cos(g.mesh()[2]))
            errs.append(np.max(np.abs(ops.diff(ops.diff(f, 3), 3).values - ops.diff2(f, 3).values)))
        assert errs[0] / errs[2] > 14

    @pytest.mark.parametrize("mode", MODES)
    def test_outputs_mean_zero_for_mean_zero_input(self, cube8, rng, mode):
        f = random_field(cube8, rng)
        assert ops.diff(f, 2, mode).mean_zero
        assert ops.laplacian(f, mode).mean_zero
        assert all(ops.grad(f, mode)[a].mean_zero for a in (1, 2, 3))

    def test_grad_h_has_zero_vertical_component(self, cube8, rng):
        v = ops.grad_h(random_field(cube8, rng))
        assert np.all(v[3].values == 0.0)

    def test_unknown_mode(self, cube8):
        with pytest.raises(ValueError):
            ops.diff(ScalarField.zeros(cube8), 1, "chebyshev")


class TestAdjointness:
    @pytest.mark.parametrize("mode", MODES)
    @pytest.mark.parametrize("axis", [1, 2, 3])
    def test_diff_antisymmetric(self, cube8, mode, axis):
        f, g = noise(cube8, 2), noise(cube8, 3)
        lhs = ops.inner_L2(ops.diff(f, axis, mode), g)
        rhs = -ops.inner_L2(f, ops.diff(g, axis, mode))
        scale = ops.norm_L2(ops.diff(f, axis, mode)) * ops.norm_L2(g)
        assert abs(lhs - rhs) <= 1e-12 * scale

    @pytest.mark.parametrize("mode", MODES)
    def test_grad_adjoint_gives_minus_laplacian(self, cube8, mode):
        f = noise(cube8, 4)
        if mode == "spectral":
            f = ScalarField(cube8, ops.filter_nyquist(f.values, cube8))
        comps = ops.gradient_arrays(f.values, cube8, mode)
        div = sum(ops.gradient_adjoint(c, cube8, a, mode) for a, c in zip((1, 2, 3), comps))
        assert np.max(np.abs(div + ops.laplacian(f, mode).values)) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), shift=st.integers(-5, 5), axis=st.sampled_from([1, 2, 3]))
    def test_finite_difference_adjoint(self, seed, shift, axis):
        g = GridSpec((6, 8, 10))
        f, h = noise(g, seed), noise(g, seed + 1)
        lhs = ops.inner_L2(ops.finite_difference(f, axis, shift), h)
        rhs = ops.inner_L2(f, ops.finite_difference(h, axis, -shift))
        assert abs(lhs - rhs) <= 1e-12 * (ops.norm_L2(f) * ops.norm_L2(h))


class TestFiniteDifference:
    def test_zero_shift(self, cube8):
        f = noise(cube8, 5)
        assert np.all(ops.finite_difference(f, 2, 0).values == 0.0)

    def test_single_node_bump(self, cube8):
        v = np.zeros(cube8.shape)
        v[3, 2, 1] = 1.0
        d = ops.finite_difference(ScalarField(cube8, v), 1, 1).values
        expect = -v.copy()
        expect[2, 2, 1] = 1.0
        assert np.array_equal(d, expect)

    def test_wraps_periodically(self, cube8):
        v = np.zeros(cube8.shape)
        v[0, 0, 0] = 1.0
        d = ops.finite_difference(ScalarField(cube8, v), 3, 1).values
        assert d[0, 0, 7] == 1.0

    @pytest.mark.parametrize("mode", MODES)
    @pytest.mark.parametrize("shift", [1, 2, 3])
    def test_shift_difference_bound(self, cube16, rng, mode, shift):
        for _ in range(5):
            f = noise(cube16, int(rng.integers(1 << 30)))
            d = project_mean_zero(ops.finite_difference(f, 2, shift))
            assert ops.norm_Hneg1(d, mode) <= shift * cube16.h[1] * ops.norm_L2(f) * (1 + 1e-12)


class TestNorms:
    def test_Hneg1_of_single_mode_spectral(self):
        g = GridSpec.cube(16)
        f = ScalarField.from_function(g, lambda x1, x2, x3: np.cos(x3))
        expect = math.sqrt((2 * math.pi) ** 3 / 2)
        assert ops.norm_Hneg1(f, "spectral") == pytest.approx(expect, rel=1e-12)

    def test_Hneg1_of_single_mode_fd(self):
        # the fd symbol of -d3^2 at k = 1 is (2/h sin(h/2))^2
        g = GridSpec.cube(16)
        f = ScalarField.from_function(g, lambda x1, x2, x3: np.cos(x3))
        h = g.h[2]
        expect = math.sqrt((2 * math.pi) ** 3 / 2) / (2 / h * math.sin(h / 2))
        assert ops.norm_Hneg1(f) == pytest.approx(expect, rel=1e-12)
        assert ops.norm_Hneg1(f) == pytest.approx(math.sqrt((2 * math.pi) ** 3 / 2), rel=h ** 2)

    def test_H1_of_constant(self, cube8):
        assert ops.norm_H1(ScalarField.constant(cube8, 2.0)) == 0.0

    def test_Hneg1_requires_mean_zero(self, cube8):
        with pytest.raises(NotMeanZero):
            ops.norm_Hneg1(ScalarField.constant(cube8, 1.0))
        with pytest.raises(NotMeanZero):
            ops.inverse_laplacian(ScalarField.constant(cube8, 1.0))

    def test_L2_matches_direct_sum(self, cube8):
        f = noise(cube8, 6)
        assert ops.norm_L2(f) ** 2 == pytest.approx(cube8.dV * np.sum(f.values ** 2), rel=1e-14)

    @pytest.mark.parametrize("mode", MODES)
    def test_duality_inequality(self, cube16, rng, mode):
        for _ in range(20):
            f = project_mean_zero(noise(cube16, int(rng.integers(1 << 30))))
            g = project_mean_zero(noise(cube16, int(rng.integers(1 << 30))))
            if mode == "spectral":
                g = ScalarField(cube16, ops.filter_nyquist(g.values, cube16), mean_zero=True)
            assert abs(ops.inner_L2(f, g)) <= ops.norm_Hneg1(f, mode) * ops.norm_H1(g, mode) * (1 + 1e-12)

    @pytest.mark.parametrize("mode", MODES)
    def test_poisson_consistency(self, cube16, rng, mode):
        f = project_mean_zero(noise(cube16, 7))
        u = ops.inverse_laplacian(f, mode)
        err = np.max(np.abs(ops.laplacian(u, mode).values + f.values))
        assert err <= 1e-10 * np.max(np.abs(f.values))

    @pytest.mark.parametrize("mode", MODES)
    def test_Hneg1_of_laplacian_is_H1(self, cube16, mode):
        u = project_mean_zero(noise(cube16, 8))
        assert ops.norm_Hneg1(ops.laplacian(u, mode), mode) == pytest.approx(ops.norm_H1(u, mode), rel=1e-10)

    def test_fd_and_spectral_norms_agree_on_smooth_fields(self):
        g = GridSpec.cube(64)
        f = ScalarField.from_function(g, lambda x1, x2, x3: np.sin(x1) * np.cos(2 * x3))
        assert ops.norm_H1(f) == pytest.approx(ops.norm_H1(f, "spectral"), rel=5e-3)
