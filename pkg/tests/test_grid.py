import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import torusflow as tf
from torusflow.grid import (
    centered_grad_values,
    div_values,
    grad_values,
    laplacian_values,
)


class TestMakeGrid:
    def test_1d_definition(self):
        g = tf.make_grid(1, 4)
        assert g.dx == 0.25
        np.testing.assert_allclose(g.axis_centers, [0.125, 0.375, 0.625, 0.875])

    def test_2d_cell_count(self):
        g = tf.make_grid(2, 8)
        assert g.cells == 64
        assert g.shape == (8, 8)

    def test_unsupported_dimension(self):
        with pytest.raises(ValueError, match="unsupported dimension"):
            tf.make_grid(3, 8)

    def test_too_few_cells(self):
        with pytest.raises(ValueError):
            tf.make_grid(1, 1)

    def test_centers_row_major(self):
        g = tf.make_grid(2, 2)
        centers = g.cell_centers()
        np.testing.assert_allclose(
            centers, [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
        )


def brute_quotient_distance(x, y):
    """Independent oracle: enumerate shifts k in {-1, 0, 1}^d."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    best = np.inf
    for k in np.ndindex(*([3] * x.size)):
        shift = np.asarray(k, dtype=float) - 1.0
        best = min(best, float(np.linalg.norm(x - y + shift)))
    return best


class TestQuotientDistance:
    def test_identity(self):
        assert tf.quotient_distance(0.3, 0.3) == 0.0

    def test_wraps_around(self):
        assert tf.quotient_distance(0.1, 0.9) == pytest.approx(
            brute_quotient_distance(0.1, 0.9)
        )
        assert tf.quotient_distance(0.1, 0.9) == pytest.approx(0.2)

    def test_antipodal(self):
        assert tf.quotient_distance(0.0, 0.5) == pytest.approx(0.5)

    def test_2d_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            x, y = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
            assert tf.quotient_distance(x, y) == pytest.approx(
                brute_quotient_distance(x, y), abs=1e-14
            )

    @given(
        st.floats(0, 0.999999),
        st.floats(0, 0.999999),
        st.floats(0, 0.999999),
    )
    @settings(max_examples=200, deadline=None)
    def test_metric_axioms(self, a, b, c):
        dab = tf.quotient_distance(a, b)
        dba = tf.quotient_distance(b, a)
        dac = tf.quotient_distance(a, c)
        dcb = tf.quotient_distance(c, b)
        assert dab == pytest.approx(dba, abs=1e-12)
        assert dab <= dac + dcb + 1e-12

    def test_bounded_by_half_diameter(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, y = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
            assert tf.quotient_distance(x, y) <= np.sqrt(2.0) / 2 + 1e-12


class TestDensity:
    def test_normalize_constant(self):
        g = tf.make_grid(1, 8)
        rho = tf.normalize(tf.Density(g, np.full(8, 2.0)))
        np.testing.assert_allclose(rho.values, 1.0)
        assert abs(rho.mass() - 1.0) <= 1e-12

    def test_normalize_idempotent(self):
        g = tf.make_grid(1, 16)
        rho = tf.normalize(tf.Density(g, 1 + 0.3 * np.sin(2 * np.pi * g.axis_centers)))
        again = tf.normalize(rho)
        np.testing.assert_allclose(again.values, rho.values, atol=1e-15)

    def test_degenerate_rejected(self):
        g = tf.make_grid(1, 8)
        with pytest.raises(ValueError, match="degenerate"):
            tf.normalize(tf.Density(g, np.zeros(8)))

    def test_negative_rejected(self):
        g = tf.make_grid(1, 8)
        with pytest.raises(ValueError, match="nonnegative"):
            tf.Density(g, np.linspace(-0.1, 1.0, 8))

    def test_nan_rejected(self):
        g = tf.make_grid(1, 4)
        vals = np.ones(4)
        vals[2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            tf.Density(g, vals)

    def test_shape_checked(self):
        g = tf.make_grid(2, 4)
        with pytest.raises(ValueError, match="shape"):
            tf.Density(g, np.ones(16))


class TestCalculus:
    def test_grad_of_constant(self):
        g = tf.make_grid(2, 8)
        out = grad_values(g, np.full(g.shape, 3.7))
        np.testing.assert_allclose(out, 0.0, atol=1e-13)

    def test_laplacian_eigenvalue(self):
        # Discrete Fourier symbol of the compact stencil on mode cos(2 pi x).
        g = tf.make_grid(1, 128)
        f = np.cos(2 * np.pi * g.axis_centers)
        lam = -(2.0 / g.dx**2) * (1.0 - np.cos(2 * np.pi * g.dx))
        np.testing.assert_allclose(laplacian_values(g, f), lam * f, atol=1e-9)

    @pytest.mark.parametrize("dim,n", [(1, 32), (2, 8)])
    def test_integration_by_parts(self, dim, n):
        g = tf.make_grid(dim, n)
        rng = np.random.default_rng(11)
        phi = rng.standard_normal(g.shape)
        w = rng.standard_normal((dim,) + g.shape)
        lhs = np.sum(div_values(g, w) * phi) * g.cell_volume
        rhs = -np.sum(w * grad_values(g, phi)) * g.cell_volume
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @pytest.mark.parametrize("dim,n", [(1, 32), (2, 8)])
    def test_divergence_sums_to_zero(self, dim, n):
        g = tf.make_grid(dim, n)
        rng = np.random.default_rng(5)
        w = rng.standard_normal((dim,) + g.shape)
        assert abs(np.sum(div_values(g, w))) <= 1e-11

    def test_centered_grad_of_mode(self):
        g = tf.make_grid(1, 256)
        f = np.sin(2 * np.pi * g.axis_centers)
        expected = 2 * np.pi * np.cos(2 * np.pi * g.axis_centers)
        # second-order accurate
        assert np.max(np.abs(centered_grad_values(g, f)[0] - expected)) < 1e-3

    def test_typed_wrappers(self):
        g = tf.make_grid(1, 16)
        field = tf.ScalarField(g, np.sin(2 * np.pi * g.axis_centers))
        vec = tf.grad(field)
        assert isinstance(vec, tf.VectorField)
        back = tf.div(vec)
        assert isinstance(back, tf.ScalarField)
