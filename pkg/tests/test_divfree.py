import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posdiv_cdg.basis import tensor_values
from posdiv_cdg.checks import edge_traces, random_divfree_polynomial
from posdiv_cdg.divfree import (
    AuxMagneticAverages, DivFreeField, EdgeNormalField, close_outer_loops, compatibility_residual, divergence_audit,
    edge_matrices, evolve_edge_normals, field_values, operators_for, project_field_from_potential,
    quadrature_flux_cancellation, reconstruct_df_cell_field, update_aux_magnetic_average,
)
from posdiv_cdg.errors import StructuralError
from posdiv_cdg.mesh import half_interval_nodes

K = 2
N_EDGE = K + 1


def single_cell_edges(field_values, dx=0.3, dy=0.2, xc=0.1, yc=-0.4, k=K):
    left, right, bottom, top = edge_traces(field_values, xc, yc, dx, dy, k)
    return EdgeNormalField(np.array([[left], [right]]), np.array([[bottom, top]]))


def tensor_nodes(k=K):
    q, _ = half_interval_nodes(k + 1)
    return np.repeat(q, len(q)), np.tile(q, len(q))


def rebuild(field_values, dx=0.3, dy=0.2, xc=0.1, yc=-0.4, k=K):
    edges = single_cell_edges(field_values, dx, dy, xc, yc, k)
    xi, eta = tensor_nodes(k)
    t1, t2 = field_values(xc + xi * dx, yc + eta * dy)
    return edges, reconstruct_df_cell_field(edges, t1[None, None], t2[None, None], operators_for(k, dx, dy))


def random_grid_field(seed, nx=5, ny=4, k=K, dx=0.25, dy=0.5):
    """A compatible edge field from a random smooth potential, with a random interior target."""
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=3)

    def potential(x, y):
        return a * np.sin(2 * x + b * y) + c * np.cos(x * y)

    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy
    n = (2 * k + 2) ** 2
    target = rng.normal(size=(2, nx, ny, n))
    edges, _ = project_field_from_potential(potential, lambda x, y: (0 * x, 0 * x), (xc, yc), dx, dy, k)
    ops = operators_for(k, dx, dy)
    return edges, reconstruct_df_cell_field(edges, target[0], target[1], ops), ops


class TestReconstruction:
    def test_constant_field(self):
        edges, field = rebuild(lambda x, y: (np.ones_like(x), np.zeros_like(x)))
        xi = np.linspace(-0.5, 0.5, 5)
        b1, b2 = field_values(field, K, np.repeat(xi, 5), np.tile(xi, 5))
        np.testing.assert_allclose(b1, 1.0, atol=1e-14)
        np.testing.assert_allclose(b2, 0.0, atol=1e-14)
        np.testing.assert_allclose(compatibility_residual(edges, 0.3, 0.2), 0.0, atol=1e-16)

    def test_linear_field(self):
        _, field = rebuild(lambda x, y: (y + 0.0 * x, x + 0.0 * y))
        xi = np.linspace(-0.5, 0.5, 5)
        xs, ys = np.repeat(xi, 5), np.tile(xi, 5)
        b1, b2 = field_values(field, K, xs, ys)
        np.testing.assert_allclose(b1[0, 0], -0.4 + ys * 0.2, atol=1e-14)
        np.testing.assert_allclose(b2[0, 0], 0.1 + xs * 0.3, atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    def test_divfree_quadratics_are_reproduced(self, seed, dx, dy):
        rng = np.random.default_rng(seed)
        _, exact = random_divfree_polynomial(rng, 2)
        _, field = rebuild(exact, dx, dy)
        xi = np.linspace(-0.5, 0.5, 6)
        xs, ys = np.repeat(xi, 6), np.tile(xi, 6)
        b1, b2 = field_values(field, K, xs, ys)
        e1, e2 = exact(0.1 + xs * dx, -0.4 + ys * dy)
        scale = max(1.0, np.abs(e1).max(), np.abs(e2).max())
        assert np.abs(b1[0, 0] - e1).max() <= 1e-12 * scale
        assert np.abs(b2[0, 0] - e2).max() <= 1e-12 * scale

    @pytest.mark.parametrize("seed", range(5))
    def test_pointwise_divergence_vanishes(self, seed):
        _, field, ops = random_grid_field(seed)
        rng = np.random.default_rng(100 + seed)
        xi, eta = rng.uniform(-0.5, 0.5, (2, 20))
        h = 1e-5
        db1 = (field_values(field, K, xi + h, eta)[0] - field_values(field, K, xi - h, eta)[0]) / (2 * h * ops.dx)
        db2 = (field_values(field, K, xi, eta + h)[1] - field_values(field, K, xi, eta - h)[1]) / (2 * h * ops.dy)
        scale = np.abs(field.b1).max() / min(ops.dx, ops.dy)
        assert np.abs(db1 + db2).max() <= 1e-8 * scale
        assert np.abs(ops.divergence_coefficients(field)).max() <= 1e-13 * scale

    @pytest.mark.parametrize("seed", range(5))
    def test_traces_match_edges_and_neighbours(self, seed):
        edges, field, ops = random_grid_field(seed)
        max_div, jump = divergence_audit(field, edges, ops)
        scale = max(1.0, np.abs(edges.vertical).max(), np.abs(edges.horizontal).max())
        assert max_div <= 1e-12 * scale / min(ops.dx, ops.dy)
        assert jump <= 1e-12 * scale

    def test_incompatible_edges_rejected(self):
        edges, _ = rebuild(lambda x, y: (np.ones_like(x), np.zeros_like(x)))
        edges.vertical[1, 0, 0] += 1.0
        xi, _ = tensor_nodes()
        zeros = np.zeros((1, 1, len(xi)))
        with pytest.raises(StructuralError):
            reconstruct_df_cell_field(edges, zeros, zeros, operators_for(K, 0.3, 0.2))

    def test_quadrature_flux_cancels(self):
        _, field, ops = random_grid_field(7)
        flux = quadrature_flux_cancellation(field, ops)
        assert np.abs(flux).max() <= 1e-13 * np.abs(field.b1).max()


class TestLoopResidual:
    def test_constant_field_closes(self):
        v = np.zeros((4, 3, N_EDGE))
        h = np.zeros((3, 4, N_EDGE))
        v[..., 0] = 1.0
        np.testing.assert_array_equal(compatibility_residual(EdgeNormalField(v, h), 0.1, 0.2), 0.0)

    def test_corrupted_edge_gives_dy(self):
        v = np.zeros((4, 3, N_EDGE))
        h = np.zeros((3, 4, N_EDGE))
        v[2, 1, 0] += 1.0
        res = compatibility_residual(EdgeNormalField(v, h), 0.1, 0.2)
        assert res[1, 1] == pytest.approx(0.2) and res[2, 1] == pytest.approx(-0.2)
        assert np.count_nonzero(res) == 2

    def test_evolved_edges_close_to_rounding(self):
        edges, _, ops = random_grid_field(3)
        rng = np.random.default_rng(8)
        nodes = 2 * N_EDGE
        # electric field shared at vertices: sample a smooth function on every edge
        gfun = lambda x, y: np.sin(3 * x) * np.cos(2 * y) + x * y  # noqa: E731
        q, _ = half_interval_nodes(N_EDGE)
        nx, ny = edges.horizontal.shape[0], edges.vertical.shape[1]
        xv = np.arange(nx + 1)[:, None] * ops.dx
        yv = (np.arange(ny) + 0.5)[None, :] * ops.dy
        dt, theta = 0.01, 0.7
        other_v = rng.normal(size=edges.vertical.shape[:2] + (nodes,))
        other_h = rng.normal(size=edges.horizontal.shape[:2] + (nodes,))
        new_v = evolve_edge_normals(edges.vertical, other_v,
                                    gfun(xv[..., None], yv[..., None] + q * ops.dy),
                                    gfun(xv, yv - 0.5 * ops.dy), gfun(xv, yv + 0.5 * ops.dy), dt, theta, ops.dy)
        xh = (np.arange(nx) + 0.5)[:, None] * ops.dx
        yh = np.arange(ny + 1)[None, :] * ops.dy
        new_h = evolve_edge_normals(edges.horizontal, other_h,
                                    gfun(xh[..., None] + q * ops.dx, yh[..., None]),
                                    gfun(xh - 0.5 * ops.dx, yh), gfun(xh + 0.5 * ops.dx, yh), dt, theta, -ops.dx)
        # the blended parts close only if the other field's fluxes do, so drop them
        new_v -= theta * (other_v @ edge_matrices(K)["project"])
        new_h -= theta * (other_h @ edge_matrices(K)["project"])
        res = compatibility_residual(EdgeNormalField(new_v, new_h), ops.dx, ops.dy)
        assert np.abs(res).max() <= 1e-15 * 100


    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.booleans(), st.booleans())
    def test_outer_edges_absorb_the_residual(self, seed, px, py):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(5, 4, N_EDGE))
        h = rng.normal(size=(4, 5, N_EDGE))
        edges = EdgeNormalField(v.copy(), h.copy())
        before = compatibility_residual(edges, 0.3, 0.2)
        close_outer_loops(edges, 0.3, 0.2, (px, py))
        after = compatibility_residual(edges, 0.3, 0.2)
        outer = np.zeros((4, 4), dtype=bool)
        if not px:
            outer[[0, -1]] = True
        if not py:
            outer[:, [0, -1]] = True
        assert np.abs(after[outer]).max(initial=0.0) <= 1e-14
        np.testing.assert_array_equal(after[~outer], before[~outer])
        # only modes 0 of edges that no other cell shares may move
        np.testing.assert_array_equal(edges.vertical[1:-1], v[1:-1])
        np.testing.assert_array_equal(edges.horizontal[:, 1:-1], h[:, 1:-1])
        np.testing.assert_array_equal(edges.vertical[..., 1:], v[..., 1:])
        np.testing.assert_array_equal(edges.horizontal[..., 1:], h[..., 1:])
        if px:
            np.testing.assert_array_equal(edges.vertical, v)
        if py:
            np.testing.assert_array_equal(edges.horizontal, h)


class TestEdgeUpdate:
    def test_uniform_state_is_unchanged(self):
        old = np.zeros((3, 2, N_EDGE))
        old[..., 0] = 0.8
        other = np.full((3, 2, 2 * N_EDGE), 0.8)
        g = np.zeros((3, 2, 2 * N_EDGE))
        new = evolve_edge_normals(old, other, g, np.zeros((3, 2)), np.zeros((3, 2)), 0.1, 0.6, 0.25)
        np.testing.assert_allclose(new, old, atol=1e-15)

    def test_constant_electric_field_does_not_shift_the_mean(self):
        old = np.zeros((1, 1, N_EDGE))
        other = np.full((1, 1, 2 * N_EDGE), 2.0)
        g = np.full((1, 1, 2 * N_EDGE), 3.0)
        new = evolve_edge_normals(old, other, g, np.full((1, 1), 3.0), np.full((1, 1), 3.0), 0.1, 1.0, 0.5)
        np.testing.assert_allclose(new[0, 0], [2.0, 0.0, 0.0], atol=1e-14)

    def test_linear_electric_field_gives_its_slope(self):
        # d b / dt = -dG/dy on a vertical edge: G = y gives a mean shift of -dt
        dy, dt = 0.5, 0.01
        q, _ = half_interval_nodes(N_EDGE)
        old = np.zeros((1, 1, N_EDGE))
        g = (q * dy)[None, None]
        new = evolve_edge_normals(old, np.zeros_like(g), g, np.full((1, 1), -0.5 * dy),
                                  np.full((1, 1), 0.5 * dy), dt, 0.0, dy)
        assert new[0, 0, 0] == pytest.approx(-dt, abs=1e-15)
        np.testing.assert_allclose(new[0, 0, 1:], 0.0, atol=1e-15)


class TestAuxAverages:
    def test_uniform_static_state(self):
        aux = AuxMagneticAverages(np.ones((2, 3, 3)))
        g = np.zeros((3, 3, 6))
        w = np.full(6, 1 / 6)
        new = update_aux_magnetic_average(aux, np.ones((2, 3, 3)), g, g, g, g, w, 0.1, 0.5, 0.2, 0.2)
        np.testing.assert_array_equal(new.values, aux.values)

    def test_zero_theta_is_a_pure_flux_update(self):
        aux = AuxMagneticAverages(np.zeros((2, 1, 1)))
        w = np.full(6, 1 / 6)
        top, bottom = np.full((1, 1, 6), 2.0), np.zeros((1, 1, 6))
        right, left = np.full((1, 1, 6), 1.0), np.zeros((1, 1, 6))
        new = update_aux_magnetic_average(aux, np.full((2, 1, 1), 9.0), top, bottom, right, left,
                                          w, 0.1, 0.0, 0.5, 0.25)
        assert new.values[0, 0, 0] == pytest.approx(-0.1 / 0.25 * 2.0)
        assert new.values[1, 0, 0] == pytest.approx(0.1 / 0.5 * 1.0)


class TestAuditSensitivity:
    def test_perturbed_interior_mode_reported(self):
        edges, field, ops = random_grid_field(11)
        bad = DivFreeField(field.b1.copy(), field.b2.copy())
        bad.b1[2, 2, 4] += 1e-3
        max_div, _ = divergence_audit(bad, edges, ops)
        assert max_div > 1e-6

    def test_perturbed_trace_reported(self):
        edges, field, ops = random_grid_field(12)
        bad = DivFreeField(field.b1.copy(), field.b2.copy())
        bad.b1[1, 1, 0] += 1e-3
        _, jump = divergence_audit(bad, edges, ops)
        assert jump > 1e-6


def test_potential_projection_closes_loops_and_converges():
    k = 2

    def potential(x, y):
        return 0.5 * np.cos(2 * x) + np.cos(y)

    def field(x, y):
        return -np.sin(y), np.sin(2 * x)

    errors = []
    for n in (16, 32):
        dx = 2 * np.pi / n
        xc = (np.arange(n) + 0.5) * dx
        edges, df = project_field_from_potential(potential, field, (xc, xc), dx, dx, k)
        assert np.abs(compatibility_residual(edges, dx, dx)).max() <= 1e-14
        xi, eta = tensor_nodes(k)
        b1, b2 = field_values(df, k, xi, eta)
        x = xc[:, None, None] + xi * dx
        y = xc[None, :, None] + eta * dx
        errors.append(max(np.abs(b1 + np.sin(y)).max(), np.abs(b2 - np.sin(2 * x)).max()))
    assert np.log2(errors[0] / errors[1]) > 2.7
