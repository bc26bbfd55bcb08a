import numpy as np
import pytest

import torusflow as tf
from torusflow.grid import centered_grad_values
from torusflow.interaction import (
    as_velocity_model,
    circular_convolve,
    circular_convolve_direct,
    cosine_kernel,
    gaussian_bump_kernel,
)

from conftest import cosine_density


def random_density(grid, seed):
    rng = np.random.default_rng(seed)
    vals = 1 + 0.5 * rng.uniform(-1, 1, grid.shape)
    return tf.normalize(tf.Density(grid, vals))


class TestConvolution:
    @pytest.mark.parametrize("dim,n", [(1, 32), (2, 8)])
    def test_transform_matches_direct_summation(self, dim, n):
        grid = tf.make_grid(dim, n)
        rng = np.random.default_rng(4)
        kernel = rng.standard_normal(grid.shape)
        values = rng.uniform(0, 2, grid.shape)
        fast = circular_convolve(grid, kernel, values)
        slow = circular_convolve_direct(grid, kernel, values)
        np.testing.assert_allclose(fast, slow, atol=1e-10)

    def test_cosine_half_amplitude(self):
        # cos kernel against 1 + 0.5 cos gives 0.25 cos plus the shift.
        grid = tf.make_grid(1, 64)
        kernel = cosine_kernel(grid)
        model = tf.DriftModel.potential(grid, kernel[None, None], nonneg_shift=2.0)
        rho = cosine_density(grid, 0.5)
        (u,) = tf.potential_from_kernel(model, (rho,))
        expected = 0.25 * np.cos(2 * np.pi * grid.axis_centers) + 2.0
        np.testing.assert_allclose(u.values, expected, atol=1e-12)


class TestPotential:
    def test_zero_kernel_gives_shift(self):
        grid = tf.make_grid(1, 16)
        model = tf.DriftModel.potential(grid, np.zeros((1, 1, 16)), nonneg_shift=1.5)
        (u,) = tf.potential_from_kernel(model, (random_density(grid, 0),))
        np.testing.assert_allclose(u.values, 1.5)

    def test_uniform_density_averages_kernel(self):
        grid = tf.make_grid(1, 32)
        kernel = gaussian_bump_kernel(grid, sigma=0.1)
        model = tf.DriftModel.potential(grid, kernel[None, None], nonneg_shift=0.3)
        uniform = tf.normalize(tf.Density(grid, np.ones(32)))
        (u,) = tf.potential_from_kernel(model, (uniform,))
        expected = float(np.sum(kernel) * grid.cell_volume) + 0.3
        np.testing.assert_allclose(u.values, expected, atol=1e-13)

    def test_auto_shift_keeps_potential_nonnegative(self):
        grid = tf.make_grid(1, 32)
        kernel = cosine_kernel(grid, amplitude=-2.0)
        model = tf.DriftModel.potential(grid, kernel[None, None])
        assert model.nonneg_shift == pytest.approx(2.0)
        (u,) = tf.potential_from_kernel(model, (random_density(grid, 1),))
        assert np.all(u.values >= -1e-12)

    def test_translation_equivariance(self):
        grid = tf.make_grid(1, 32)
        kernel = gaussian_bump_kernel(grid, sigma=0.08)
        model = tf.DriftModel.potential(grid, kernel[None, None], nonneg_shift=0.0)
        rho = random_density(grid, 2)
        (u,) = tf.potential_from_kernel(model, (rho,))
        shifted = tf.Density(grid, np.roll(rho.values, 5))
        (u_shifted,) = tf.potential_from_kernel(model, (shifted,))
        np.testing.assert_allclose(u_shifted.values, np.roll(u.values, 5), atol=1e-12)

    def test_mode_mismatch(self):
        grid = tf.make_grid(1, 8)
        model = tf.DriftModel.none(grid, mode="velocity")
        with pytest.raises(ValueError, match="mode mismatch"):
            tf.potential_from_kernel(model, (random_density(grid, 3),))


class TestVelocityField:
    def test_zero_kernel_zero_velocity(self):
        grid = tf.make_grid(1, 16)
        model = tf.DriftModel.none(grid)
        (v,) = tf.velocity_field(model, (random_density(grid, 4),))
        np.testing.assert_allclose(v.values, 0.0, atol=1e-13)

    def test_two_evaluation_paths_agree(self):
        # A velocity model built from the gradient kernels must reproduce the
        # potential route exactly.
        grid = tf.make_grid(1, 48)
        kernel = gaussian_bump_kernel(grid, sigma=0.1)
        pot = tf.DriftModel.potential(grid, kernel[None, None], nonneg_shift=0.0)
        vel = as_velocity_model(pot)
        rho = (random_density(grid, 5),)
        (v_pot,) = tf.velocity_field(pot, rho)
        (v_vel,) = tf.velocity_field(vel, rho)
        np.testing.assert_allclose(v_pot.values, v_vel.values, atol=1e-10)

    def test_odd_kernel_uniform_density(self):
        grid = tf.make_grid(1, 32)
        odd = np.sin(2 * np.pi * grid.offset_grids()[0])
        model = tf.DriftModel.velocity(grid, odd[None, None, None])
        uniform = tf.normalize(tf.Density(grid, np.ones(32)))
        (v,) = tf.velocity_field(model, (uniform,))
        np.testing.assert_allclose(v.values, 0.0, atol=1e-12)

    def test_potential_velocity_sums_to_zero(self):
        grid = tf.make_grid(1, 40)
        kernel = cosine_kernel(grid)
        model = tf.DriftModel.potential(grid, kernel[None, None])
        (v,) = tf.velocity_field(model, (random_density(grid, 6),))
        assert abs(np.sum(v.values) * grid.cell_volume) <= 1e-13


class TestConstants:
    def test_zero_model(self):
        grid = tf.make_grid(1, 32)
        consts = tf.estimate_constants(tf.DriftModel.none(grid))
        assert consts.lip_x == 0.0
        assert consts.lip_w2 == 0.0
        assert consts.lap_plus == 0.0

    def test_cosine_gradient_bound(self):
        # sup |W'| = 2 pi for W = cos(2 pi x), up to the stencil correction.
        grid = tf.make_grid(1, 256)
        model = tf.DriftModel.potential(grid, cosine_kernel(grid)[None, None])
        consts = tf.estimate_constants(model, pairs=0)
        assert consts.lip_x == pytest.approx(2 * np.pi, rel=0.02)

    def test_w2_lipschitz_estimate_bounded(self):
        grid = tf.make_grid(1, 64)
        sigma = 0.15
        kernel = gaussian_bump_kernel(grid, sigma=sigma)
        model = tf.DriftModel.potential(grid, kernel[None, None])
        consts = tf.estimate_constants(model, pairs=20)
        assert consts.lip_w2 > 0
        # |grad U[rho] - grad U[nu]| <= sup |W''| W1 <= sup |W''| W2.
        hessian_bound = float(
            np.max(np.abs(centered_grad_values(grid, centered_grad_values(grid, kernel)[0])[0]))
        )
        assert consts.lip_w2 <= 2.0 * hessian_bound

    def test_self_consistency_on_fresh_pairs(self):
        grid = tf.make_grid(1, 64)
        kernel = gaussian_bump_kernel(grid, sigma=0.15)
        model = tf.DriftModel.potential(grid, kernel[None, None])
        fitted = tf.estimate_constants(model, pairs=12, seed=12345)
        fresh = tf.estimate_constants(model, pairs=8, seed=99)
        assert fresh.lip_w2 <= fitted.lip_w2 * 1.1

    def test_lap_plus_positive_part(self):
        grid = tf.make_grid(1, 128)
        model = tf.DriftModel.potential(grid, cosine_kernel(grid)[None, None])
        consts = tf.estimate_constants(model, pairs=0)
        # (Lap cos)_+ peaks at 4 pi^2.
        assert consts.lap_plus == pytest.approx(4 * np.pi**2, rel=0.02)

    def test_stability_constant_uses_velocity_form(self):
        grid = tf.make_grid(1, 64)
        model = tf.DriftModel.potential(grid, gaussian_bump_kernel(grid, 0.15)[None, None])
        c_hat = tf.stability_constant(model, pairs=4)
        assert c_hat > 0
        vel = as_velocity_model(model)
        direct = tf.estimate_constants(vel, pairs=4)
        assert c_hat == pytest.approx(max(direct.lip_x, direct.lip_w2))
