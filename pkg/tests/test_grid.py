"""Lattice, field, and stencil tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hjpi.grid import (
    Field,
    Grid,
    GridError,
    SpaceTimeField,
    central_gradient,
    central_gradient_array,
    discrete_time_diff,
    one_sided_diff,
    one_sided_diff_array,
    second_diff,
    second_diff_array,
)


def grid1d(n=8, h=0.1, tau=0.05, T=0.5):
    return Grid(d=1, h=h, tau=tau, T=T, cells=(n,))


def linear_field(grid):
    # v = x along axis 0; affine away from the wrap seam
    return Field(grid, grid.points_flat[:, 0].reshape(grid.cells))


class TestGridInvariants:
    def test_valid_grid(self):
        g = grid1d()
        assert g.K == 10
        assert g.n_cells == 8
        assert g.lengths == (0.8,)
        assert np.allclose(g.times, np.arange(11) * 0.05)

    def test_rejects_small_axes(self):
        with pytest.raises(GridError):
            Grid(d=1, h=0.1, tau=0.05, T=0.5, cells=(2,))

    def test_rejects_fractional_step_count(self):
        with pytest.raises(GridError):
            Grid(d=1, h=0.1, tau=0.03, T=0.5, cells=(8,))

    def test_rejects_h_out_of_range(self):
        with pytest.raises(GridError):
            Grid(d=1, h=1.0, tau=0.05, T=0.5, cells=(8,))

    def test_rejects_bad_dimension(self):
        with pytest.raises(GridError):
            Grid(d=4, h=0.1, tau=0.05, T=0.5, cells=(8,) * 4)

    def test_field_requires_finite(self):
        g = grid1d()
        vals = np.zeros(8)
        vals[3] = np.inf
        with pytest.raises(GridError):
            Field(g, vals)

    def test_field_shape_mismatch(self):
        with pytest.raises(GridError):
            Field(grid1d(), np.zeros(7))

    def test_field_immutable(self):
        f = Field(grid1d(), np.zeros(8))
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_spacetime_level_count(self):
        g = grid1d()
        st_field = SpaceTimeField(g, np.zeros((g.K + 1, 8)))
        assert st_field.n_levels == 11
        with pytest.raises(GridError):
            SpaceTimeField(g, np.zeros((g.K, 8)))


class TestCentralGradient:
    def test_affine_interior(self):
        f = linear_field(grid1d())
        for cell in range(1, 7):
            assert central_gradient(f, (cell,))[0] == 1.0

    def test_constant_field(self):
        f = Field.constant(grid1d(), 5.0)
        for cell in range(8):
            assert central_gradient(f, (cell,))[0] == 0.0

    def test_hand_case(self):
        g = Grid(d=1, h=0.25, tau=0.05, T=0.1, cells=(4,))
        f = Field(g, [0.0, 1.0, 0.0, -1.0])
        # (v[2] - v[0]) / (2h) = 0
        assert central_gradient(f, (1,))[0] == 0.0

    def test_invalid_cell(self):
        f = linear_field(grid1d())
        with pytest.raises(IndexError):
            central_gradient(f, (8,))
        with pytest.raises(IndexError):
            central_gradient(f, (0, 0))


class TestOneSided:
    def test_affine_both_signs(self):
        f = linear_field(grid1d())
        assert one_sided_diff(f, (3,), +1) == pytest.approx(1.0, abs=1e-14)
        assert one_sided_diff(f, (3,), -1) == pytest.approx(1.0, abs=1e-14)

    def test_constant(self):
        f = Field.constant(grid1d(), 2.5)
        for j in (+1, -1):
            assert one_sided_diff(f, (4,), j) == 0.0

    def test_invalid_axis(self):
        f = linear_field(grid1d())
        with pytest.raises(IndexError):
            one_sided_diff(f, (0,), 0)
        with pytest.raises(IndexError):
            one_sided_diff(f, (0,), 2)


class TestSecondDiff:
    def test_quadratic_interior(self):
        g = grid1d(n=16, h=0.05)
        x = g.points_flat[:, 0]
        f = Field(g, x * x)
        for cell in range(1, 15):
            assert second_diff(f, (cell,), 0) == pytest.approx(2.0, rel=1e-12)

    def test_constant(self):
        f = Field.constant(grid1d(), 3.0)
        assert second_diff(f, (2,), 0) == 0.0

    def test_hand_case(self):
        g = Grid(d=1, h=0.5, tau=0.05, T=0.1, cells=(3,))
        f = Field(g, [1.0, 2.0, 4.0])
        # (4 - 2*2 + 1) / 0.25 = 4
        assert second_diff(f, (1,), 0) == 4.0


class TestAlgebraicIdentities:
    """The one-sided differences recombine into the central and second stencils:
    D2_i = (D_{+i} - D_{-i}) / h and grad_i = (D_{+i} + D_{-i}) / 2, and the
    magnitude pair {|D_{+i}|, |D_{-i}|} is a relabeling of the forward
    differences along +-e_i (squared sums over the signed axes are
    convention-independent)."""

    @settings(max_examples=40, deadline=None)
    @given(
        arrays(np.float64, (6,), elements=st.floats(-100, 100, allow_nan=False)),
    )
    def test_identities_1d(self, vals):
        g = Grid(d=1, h=0.2, tau=0.05, T=0.1, cells=(6,))
        fwd = one_sided_diff_array(vals, g.h, +1)
        bwd = one_sided_diff_array(vals, g.h, -1)
        lap = second_diff_array(vals, g.h, 0)
        grad = central_gradient_array(vals, g.h)[0]
        np.testing.assert_allclose((fwd - bwd) / g.h, lap, rtol=0, atol=1e-9)
        np.testing.assert_allclose((fwd + bwd) / 2.0, grad, rtol=0, atol=1e-9)

    def test_identities_2d_random(self, rng):
        g = Grid(d=2, h=0.25, tau=0.05, T=0.1, cells=(4, 5))
        vals = rng.standard_normal(g.cells)
        for i in range(2):
            fwd = one_sided_diff_array(vals, g.h, i + 1)
            bwd = one_sided_diff_array(vals, g.h, -(i + 1))
            np.testing.assert_allclose(
                (fwd - bwd) / g.h, second_diff_array(vals, g.h, i), atol=1e-12
            )
            np.testing.assert_allclose(
                (fwd + bwd) / 2.0, central_gradient_array(vals, g.h)[i], atol=1e-12
            )


class TestTranslationEquivariance:
    @settings(max_examples=30, deadline=None)
    @given(
        arrays(np.float64, (5, 4), elements=st.floats(-50, 50, allow_nan=False)),
        st.integers(0, 1),
        st.integers(1, 3),
    )
    def test_shift_commutes(self, vals, axis, shift):
        h = 0.1
        rolled = np.roll(vals, shift, axis=axis)
        for op in (
            lambda v: central_gradient_array(v, h),
            lambda v: second_diff_array(v, h, axis),
            lambda v: one_sided_diff_array(v, h, axis + 1),
            lambda v: one_sided_diff_array(v, h, -(axis + 1)),
        ):
            out = op(vals)
            out_rolled = op(rolled)
            np.testing.assert_array_equal(
                np.roll(out, shift, axis=axis + (out.ndim - vals.ndim)), out_rolled
            )


class TestLinearity:
    def test_linear_in_field(self, rng):
        h = 0.2
        u = rng.standard_normal((6,))
        v = rng.standard_normal((6,))
        a, b = 2.5, -1.25
        np.testing.assert_allclose(
            central_gradient_array(a * u + b * v, h),
            a * central_gradient_array(u, h) + b * central_gradient_array(v, h),
            atol=1e-12,
        )
        np.testing.assert_allclose(
            second_diff_array(a * u + b * v, h, 0),
            a * second_diff_array(u, h, 0) + b * second_diff_array(v, h, 0),
            atol=1e-10,
        )


class TestTimeDiff:
    def test_equal_fields_zero(self):
        g = grid1d()
        f = Field.constant(g, 1.5)
        assert np.all(discrete_time_diff(f, f).values == 0.0)

    def test_constant_offset(self):
        g = grid1d(tau=0.1, T=0.5)
        prev = Field.constant(g, 1.0)
        cur = Field.constant(g, 1.2)
        np.testing.assert_allclose(discrete_time_diff(cur, prev).values, 2.0)

    def test_inverse_identity(self, rng):
        g = grid1d()
        prev = Field(g, rng.standard_normal(8))
        cur = Field(g, rng.standard_normal(8))
        dt = discrete_time_diff(cur, prev)
        np.testing.assert_allclose(
            dt.values * g.tau + prev.values, cur.values, atol=1e-14
        )

    def test_grid_mismatch(self):
        f1 = Field.constant(grid1d(), 0.0)
        f2 = Field.constant(grid1d(n=10), 0.0)
        with pytest.raises(GridError):
            discrete_time_diff(f1, f2)


class TestPointwiseMatchesArray:
    def test_2d_consistency(self, rng):
        g = Grid(d=2, h=0.125, tau=0.05, T=0.1, cells=(8, 8))
        vals = rng.standard_normal(g.cells)
        f = Field(g, vals)
        grad = central_gradient_array(f.values, g.h)
        lap0 = second_diff_array(f.values, g.h, 0)
        fwd1 = one_sided_diff_array(f.values, g.h, 2)
        for cell in [(0, 0), (3, 5), (7, 7), (4, 0)]:
            np.testing.assert_allclose(
                central_gradient(f, cell), grad[(slice(None),) + cell], atol=1e-15
            )
            assert second_diff(f, cell, 0) == pytest.approx(lap0[cell], abs=1e-15)
            assert one_sided_diff(f, cell, 2) == pytest.approx(fwd1[cell], abs=1e-15)
