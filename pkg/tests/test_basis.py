import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posdiv_cdg.basis import (
    cell_average_of, cell_quadrature, l2_project, legendre_derivative_matrix, legendre_values,
    modal_gradients, modal_values, mode_degrees, n_modes, overlap_transfer_matrices, pk_exponents,
    poly_eval, project_cells, tensor_values,
)

BOUNDS = (0.2, 0.7, -1.0, -0.6)


def monomial_coefficients(k, rng):
    return {e: rng.normal() for e in pk_exponents(k)}


def monomial_eval(coeffs, x, y):
    return sum(c * x ** a * y ** b for (a, b), c in coeffs.items())


class TestModes:
    @pytest.mark.parametrize("k, count", [(0, 1), (1, 3), (2, 6), (3, 10)])
    def test_counts(self, k, count):
        assert n_modes(k) == count == len(pk_exponents(k))
        assert mode_degrees(k).max() == k

    def test_zeroth_mode_is_one(self):
        xi = np.linspace(-0.5, 0.5, 7)
        np.testing.assert_array_equal(modal_values(2, xi, xi)[0], 1.0)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_orthogonality(self, k):
        xi, eta, w = cell_quadrature(k)
        phi = modal_values(k, xi, eta)
        gram = (phi * w) @ phi.T
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() < 1e-14

    def test_legendre_against_numpy(self):
        s = np.linspace(-0.5, 0.5, 11)
        vals = legendre_values(4, s)
        for n in range(5):
            c = np.zeros(n + 1)
            c[n] = 1
            np.testing.assert_allclose(vals[n], np.polynomial.legendre.legval(2 * s, c), atol=1e-14)

    def test_derivative_matrix_maps_coefficients(self):
        d = legendre_derivative_matrix(3)
        s = np.linspace(-0.5, 0.5, 9)
        c = np.array([0.3, -1.0, 2.0, 0.5])
        h = 1e-6
        fd = (c @ legendre_values(3, s + h) - c @ legendre_values(3, s - h)) / (2 * h)
        np.testing.assert_allclose((d @ c) @ legendre_values(2, s), fd, atol=1e-7)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        xi, eta = rng.uniform(-0.5, 0.5, (2, 10))
        gx, gy = modal_gradients(3, xi, eta)
        h = 1e-6
        fx = (modal_values(3, xi + h, eta) - modal_values(3, xi - h, eta)) / (2 * h)
        fy = (modal_values(3, xi, eta + h) - modal_values(3, xi, eta - h)) / (2 * h)
        np.testing.assert_allclose(gx, fx, atol=1e-7)
        np.testing.assert_allclose(gy, fy, atol=1e-7)

    def test_tensor_modes_contain_pk(self):
        xi = np.array([0.1, -0.3])
        eta = np.array([0.2, 0.45])
        t = tensor_values(2, 2, xi, eta)
        for row, (a, b) in enumerate(pk_exponents(2)):
            np.testing.assert_allclose(modal_values(2, xi, eta)[row], t[a * 3 + b])


class TestProjection:
    def test_constant(self):
        poly = l2_project(lambda x, y: np.full_like(x, 5.0), BOUNDS, 2)
        np.testing.assert_allclose(poly.coeffs[0], [5, 0, 0, 0, 0, 0], atol=1e-14)

    def test_linear_in_x(self):
        poly = l2_project(lambda x, y: 3 * x - 1, BOUNDS, 2)
        assert poly_eval(poly, 0.45, -0.8)[0] == pytest.approx(3 * 0.45 - 1, abs=1e-14)
        assert cell_average_of(poly)[0] == pytest.approx(3 * 0.45 - 1, abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from([1, 2, 3]), st.integers(0, 2 ** 32 - 1))
    def test_reproduces_polynomials(self, k, seed):
        rng = np.random.default_rng(seed)
        coeffs = monomial_coefficients(k, rng)
        poly = l2_project(lambda x, y: monomial_eval(coeffs, x, y), BOUNDS, k)
        x = rng.uniform(BOUNDS[0], BOUNDS[1], 5)
        y = rng.uniform(BOUNDS[2], BOUNDS[3], 5)
        np.testing.assert_allclose(poly_eval(poly, x, y)[0], monomial_eval(coeffs, x, y), atol=1e-12)

    def test_average_matches_quadrature(self):
        rng = np.random.default_rng(4)
        coeffs = monomial_coefficients(3, rng)
        poly = l2_project(lambda x, y: monomial_eval(coeffs, x, y), BOUNDS, 3)
        g, w = np.polynomial.legendre.leggauss(8)
        x = 0.45 + 0.25 * g
        y = -0.8 + 0.2 * g
        avg = 0.25 * np.sum(np.outer(w, w) * monomial_eval(coeffs, x[:, None], y[None, :]))
        assert cell_average_of(poly)[0] == pytest.approx(avg, abs=1e-14)

    def test_zero_polynomial(self):
        poly = l2_project(lambda x, y: 0 * x, BOUNDS, 2)
        assert poly_eval(poly, 0.3, -0.7)[0] == 0

    def test_outside_point_rejected(self):
        poly = l2_project(lambda x, y: x, BOUNDS, 1)
        with pytest.raises(IndexError):
            poly_eval(poly, 0.0, -0.8)

    @pytest.mark.parametrize("k", [1, 2])
    def test_projection_error_order(self, k):
        def f(x, y):
            return np.sin(2 * math.pi * x)[None]

        errors = []
        for n in (8, 16, 32):
            dx = 1.0 / n
            xc = (np.arange(n) + 0.5) * dx
            coeffs = project_cells(f, xc, xc, dx, dx, k)
            xi = np.linspace(-0.5, 0.5, 5)
            phi = modal_values(k, np.repeat(xi, 5), np.tile(xi, 5))
            vals = coeffs[0] @ phi
            x = xc[:, None, None] + np.repeat(xi, 5)[None, None, :] * dx
            errors.append(np.abs(vals - np.sin(2 * math.pi * x)).max())
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders > k + 1 - 0.2)


class TestOverlapTransfer:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_global_polynomial_transfers_exactly(self, k):
        rng = np.random.default_rng(5)
        coeffs = monomial_coefficients(k, rng)
        h = 0.1

        def project_at(cx, cy):
            return l2_project(lambda x, y: monomial_eval(coeffs, x, y),
                              (cx - h / 2, cx + h / 2, cy - h / 2, cy + h / 2), k).coeffs[0]

        sources = [project_at(ox * h, oy * h) for ox, oy in ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5))]
        t = overlap_transfer_matrices(k)
        got = sum(s @ t[q] for q, s in enumerate(sources))
        np.testing.assert_allclose(got, project_at(0.0, 0.0), atol=1e-13)

    def test_average_is_mean_of_quadrant_averages(self):
        t = overlap_transfer_matrices(2)
        rng = np.random.default_rng(6)
        sources = rng.normal(size=(4, n_modes(2)))
        got = sum(s @ t[q] for q, s in enumerate(sources))[0]
        # each quadrant average of a source polynomial, recomputed by quadrature
        xi, eta, w = cell_quadrature(4)
        expected = 0.0
        for q, (ox, oy) in enumerate(((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5))):
            qx, qy = 0.5 * ox + 0.5 * xi, 0.5 * oy + 0.5 * eta
            expected += 0.25 * np.sum(w * (sources[q] @ modal_values(2, qx - ox, qy - oy)))
        assert got == pytest.approx(expected, abs=1e-14)
