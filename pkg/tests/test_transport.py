import numpy as np
import pytest

import torusflow as tf

from conftest import cosine_density, mode_amplitude


def atom_density(grid, cells, weights=None):
    """Near-atomic density supported on the given cells."""
    vals = np.full(grid.shape, 0.0)
    n_atoms = len(cells)
    weights = weights or [1.0 / n_atoms] * n_atoms
    for c, w in zip(cells, weights):
        vals[c] += w / grid.cell_volume
    return tf.normalize(tf.Density(grid, vals))


class TestCostMatrix:
    def test_two_cells(self):
        g = tf.make_grid(1, 2)
        c = tf.cost_matrix(g)
        np.testing.assert_allclose(c.values, [[0.0, 0.25], [0.25, 0.0]])

    def test_diagonal_zero_and_symmetry(self):
        g = tf.make_grid(2, 4)
        c = tf.cost_matrix(g).values
        np.testing.assert_allclose(np.diag(c), 0.0)
        np.testing.assert_allclose(c, c.T)
        assert np.max(c) <= g.dim / 4 + 1e-15

    def test_neighbor_entry(self):
        g = tf.make_grid(1, 4)
        c = tf.cost_matrix(g).values
        assert c[0, 1] == pytest.approx(0.0625)

    def test_size_guard(self):
        with pytest.raises(ValueError, match="cells"):
            tf.cost_matrix(tf.make_grid(2, 129))


class TestExactPermutation:
    def test_identity(self):
        assert tf.exact_w2_permutation([0.1, 0.4], [0.1, 0.4]) == 0.0

    def test_antipodal_pair(self):
        assert tf.exact_w2_permutation([0.0], [0.5]) == pytest.approx(0.25)

    def test_two_atoms(self):
        got = tf.exact_w2_permutation([0.0, 0.5], [0.25, 0.75])
        assert got == pytest.approx(0.0625)

    def test_size_limit(self):
        with pytest.raises(ValueError, match="8"):
            tf.exact_w2_permutation(list(np.linspace(0, 0.9, 9)), list(np.linspace(0, 0.9, 9)))

    def test_2d_atoms(self):
        xs = [[0.0, 0.0]]
        ys = [[0.5, 0.5]]
        assert tf.exact_w2_permutation(xs, ys) == pytest.approx(0.5)


class TestSinkhorn:
    def test_identical_marginals_entropic_floor(self):
        g = tf.make_grid(1, 64)
        rho = cosine_density(g, 0.4)
        res = tf.sinkhorn_w2(rho, rho, eps=1e-3, tol=1e-10)
        assert 0.0 <= res.w2_sq <= 1e-3 * (1 + np.log(g.cells))
        assert res.w2_sq <= 0.01

    def test_near_dirac_pair(self):
        g = tf.make_grid(1, 4)
        mu = atom_density(g, [0])
        nu = atom_density(g, [1])
        res = tf.sinkhorn_w2(mu, nu, eps=1e-4, tol=1e-12)
        assert res.w2_sq == pytest.approx(0.0625, abs=1e-3)

    def test_symmetry(self):
        g = tf.make_grid(1, 32)
        rng = np.random.default_rng(8)
        mu = tf.normalize(tf.Density(g, 1 + 0.5 * rng.uniform(-1, 1, 32)))
        nu = tf.normalize(tf.Density(g, 1 + 0.5 * rng.uniform(-1, 1, 32)))
        ab = tf.sinkhorn_w2(mu, nu, eps=1e-3, tol=1e-12)
        ba = tf.sinkhorn_w2(nu, mu, eps=1e-3, tol=1e-12)
        assert abs(ab.w2_sq - ba.w2_sq) <= 1e-10

    def test_monotone_toward_exact_as_eps_decreases(self):
        g = tf.make_grid(1, 16)
        mu = atom_density(g, [1, 9])
        nu = atom_density(g, [4, 12])
        exact = tf.exact_w2_permutation(
            [g.axis_centers[1], g.axis_centers[9]], [g.axis_centers[4], g.axis_centers[12]]
        )
        values = [
            tf.sinkhorn_w2(mu, nu, eps=eps, tol=1e-12).w2_sq
            for eps in (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(exact, rel=1e-3)

    def test_nonconvergence_reported(self):
        g = tf.make_grid(1, 32)
        mu = cosine_density(g, 0.5)
        nu = cosine_density(g, -0.5)
        res = tf.sinkhorn_w2(mu, nu, eps=1e-3, tol=1e-14, max_iter=3)
        assert not res.converged
        assert res.plan_marginal_err > 1e-14

    def test_plan_marginals(self):
        g = tf.make_grid(1, 24)
        mu = cosine_density(g, 0.3)
        nu = cosine_density(g, -0.4)
        res = tf.sinkhorn_w2(mu, nu, eps=5e-4, tol=1e-11, return_plan=True)
        a = mu.values * g.cell_volume
        b = nu.values * g.cell_volume
        np.testing.assert_allclose(res.plan.sum(axis=1), a, atol=1e-9)
        np.testing.assert_allclose(res.plan.sum(axis=0), b, atol=1e-9)

    def test_unnormalized_rejected(self):
        g = tf.make_grid(1, 8)
        rho = cosine_density(g, 0.2)
        bad = tf.Density(g, rho.values * 2)
        with pytest.raises(ValueError, match="normalized"):
            tf.sinkhorn_w2(rho, bad, eps=1e-3)


class TestJkoStep:
    def test_uniform_fixed_point(self):
        g = tf.make_grid(1, 32)
        uniform = tf.normalize(tf.Density(g, np.ones(32)))
        out, res = tf.jko_step(uniform, 1e-3, tf.InternalEnergy.entropy(), None, eps=5e-4)
        assert np.max(np.abs(out.values - 1.0)) <= 1e-10
        assert res.converged

    def test_single_step_heat_oracle(self):
        # Implicit-Euler spectral factor 1/(1 + 4 pi^2 h) at small amplitude.
        g = tf.make_grid(1, 128)
        h = 1e-3
        rho = cosine_density(g, 0.1)
        out, _ = tf.jko_step(rho, h, tf.InternalEnergy.entropy(), None, eps=5e-4, tol=1e-10)
        got = mode_amplitude(out.values)
        expected = 0.1 / (1 + 4 * np.pi**2 * h)
        assert got == pytest.approx(expected, rel=0.10)

    def test_output_mass_and_positivity(self):
        g = tf.make_grid(1, 64)
        rho = cosine_density(g, 0.9)
        out, _ = tf.jko_step(rho, 2e-3, tf.InternalEnergy.power(2.0), None, eps=5e-4)
        assert out.mass() == pytest.approx(1.0, abs=1e-13)
        assert np.min(out.values) >= 0.0

    def test_translation_equivariance(self):
        g = tf.make_grid(1, 48)
        rho = cosine_density(g, 0.5)
        pot = tf.ScalarField(g, 0.3 + 0.3 * np.cos(2 * np.pi * g.axis_centers))
        shift = 7
        rho_s = tf.Density(g, np.roll(rho.values, shift))
        pot_s = tf.ScalarField(g, np.roll(pot.values, shift))
        out, _ = tf.jko_step(rho, 1e-3, tf.InternalEnergy.entropy(), pot, eps=1e-3, tol=1e-12)
        out_s, _ = tf.jko_step(rho_s, 1e-3, tf.InternalEnergy.entropy(), pot_s, eps=1e-3, tol=1e-12)
        np.testing.assert_allclose(out_s.values, np.roll(out.values, shift), atol=1e-12)

    def test_energy_inequality_slack_vanishes_with_eps(self):
        # The minimizing-movement inequality holds up to a slack that shrinks
        # as the entropic parameter does.
        g = tf.make_grid(1, 64)
        h = 1e-3
        rho = cosine_density(g, 0.5)
        energy = tf.InternalEnergy.entropy()
        pot = tf.ScalarField(g, 0.5 + 0.5 * np.cos(2 * np.pi * g.axis_centers))
        vol = g.cell_volume

        def functional(dens):
            return energy.total(dens.values, vol) + float(
                np.sum(pot.values * dens.values) * vol
            )

        excesses = []
        for eps in (2e-3, 1e-3, 5e-4):
            out, res = tf.jko_step(rho, h, energy, pot, eps=eps, tol=1e-11)
            excess = functional(out) + res.w2_sq / (2 * h) - functional(rho)
            excesses.append(excess)
        assert excesses[0] > excesses[1] > excesses[2]
        assert excesses[2] <= 2e-3 / (4 * h) * 1.2

    def test_plain_variant_biased_debiased_not(self):
        # The symmetric correction removes the entropic blur of the output.
        g = tf.make_grid(1, 128)
        h, eps = 1e-3, 5e-4
        rho = cosine_density(g, 0.5)
        target = mode_amplitude(rho.values) / (1 + 4 * np.pi**2 * h)
        plain, _ = tf.jko_step(rho, h, tf.InternalEnergy.entropy(), None, eps=eps, debias=False)
        debiased, _ = tf.jko_step(rho, h, tf.InternalEnergy.entropy(), None, eps=eps, debias=True)
        err_plain = abs(mode_amplitude(plain.values) - target)
        err_debiased = abs(mode_amplitude(debiased.values) - target)
        assert err_debiased < 0.25 * err_plain

    def test_parameter_validation(self):
        g = tf.make_grid(1, 16)
        rho = cosine_density(g, 0.2)
        with pytest.raises(ValueError):
            tf.jko_step(rho, -1.0, tf.InternalEnergy.entropy(), None, eps=1e-3)
        with pytest.raises(ValueError, match="increase eps"):
            tf.jko_step(rho, 1e-3, tf.InternalEnergy.entropy(), None, eps=1e-8)
        with pytest.raises(ValueError, match="cells"):
            tf.jko_step(rho, 1e-3, tf.InternalEnergy.entropy(), np.ones(3), eps=1e-3)
