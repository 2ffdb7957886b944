"""Magnetic subsystem: edge normals, divergence-free reconstruction, audits.

Inside a cell, ``B1`` is stored in the tensor Legendre space of degree
``k+1`` in x and ``k`` in y, and ``B2`` in degree ``k`` in x and ``k+1`` in
y (coefficients a-major, see :func:`basis.tensor_values`).  Edge normal
components are degree-``k`` Legendre series ``sum_m b_m P_m(2 s)`` in the
local edge coordinate ``s`` in ``[-1/2, 1/2]``.

A reconstructed field is the curl of a potential ``A`` in ``Q_{k+1}``, so it
is exactly divergence free; its normal traces are forced to equal the four
edge polynomials and the remaining bubble modes are fitted by weighted least
squares to a target field sampled at the tensor Gauss nodes.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import legendre_derivative_matrix, legendre_derivatives, legendre_values, tensor_values
from .errors import StructuralError
from .mesh import half_interval_nodes


def field_mode_count(k):
    return (k + 2) * (k + 1)


@dataclass
class EdgeNormalField:
    """Normal-component polynomials, one per geometric edge.

    ``vertical`` has shape ``(n_cols + 1, n_rows, k + 1)`` and holds ``b^x``
    on the x = const edges; ``horizontal`` has shape
    ``(n_cols, n_rows + 1, k + 1)`` and holds ``b^y``.
    """

    vertical: np.ndarray
    horizontal: np.ndarray

    @property
    def k(self):
        return self.vertical.shape[-1] - 1

    def copy(self):
        return EdgeNormalField(self.vertical.copy(), self.horizontal.copy())


@dataclass
class DivFreeField:
    """Per-cell coefficients of (B1, B2); arrays of shape ``(n_cols, n_rows, (k+2)(k+1))``."""

    b1: np.ndarray
    b2: np.ndarray

    def copy(self):
        return DivFreeField(self.b1.copy(), self.b2.copy())


@dataclass
class AuxMagneticAverages:
    """Separately evolved (B1, B2) cell averages, shape ``(2, n_cols, n_rows)``."""

    values: np.ndarray

    def copy(self):
        return AuxMagneticAverages(self.values.copy())


class DivFreeOperators:
    """Precomputed linear maps for one degree and one cell shape."""

    def __init__(self, k, dx, dy):
        self.k, self.dx, self.dy = k, float(dx), float(dy)
        n = k + 1
        npot = k + 2
        self.n_field = field_mode_count(k)
        deriv = legendre_derivative_matrix(k + 1)  # (k+1, k+2)

        # potential coefficients A[a, b] (a-major) -> B1[a, b'], B2[a', b]
        eye = np.eye(npot)
        to_b1 = np.kron(eye, deriv) / self.dy
        to_b2 = -np.kron(deriv, eye) / self.dx
        self.to_field = np.vstack((to_b1, to_b2))

        ends = legendre_values(k + 1, np.array([-0.5, 0.5]))  # (k+2, 2)
        rows = []
        b1 = to_b1.reshape(npot, n, npot * npot)
        b2 = to_b2.reshape(n, npot, npot * npot)
        for side in (0, 1):  # left, right traces of B1
            rows.append(np.einsum("a,abc->bc", ends[:, side], b1))
        for side in (0, 1):  # bottom, top traces of B2
            rows.append(np.einsum("b,abc->ac", ends[:, side], b2))
        gauge = np.outer(ends[:, 0], ends[:, 0]).ravel()
        constraints = np.vstack(rows + [gauge[None, :]])

        q, w = half_interval_nodes(n)
        m = len(q)
        xi, eta = np.repeat(q, m), np.tile(q, m)
        self.tensor_weights = np.outer(w, w).ravel()
        self.values_b1 = tensor_values(k + 1, k, xi, eta)  # (n_field, nT)
        self.values_b2 = tensor_values(k, k + 1, xi, eta)
        sample = np.vstack((self.values_b1.T @ to_b1, self.values_b2.T @ to_b2))
        sqrt_w = np.sqrt(np.concatenate((self.tensor_weights, self.tensor_weights)))

        _, sing, vt = np.linalg.svd(constraints)
        rank = int(np.sum(sing > 1e-12 * sing[0]))
        null = vt[rank:].T
        pinv_c = np.linalg.pinv(constraints, rcond=1e-12)
        fit = np.linalg.pinv(sqrt_w[:, None] * sample @ null)
        corr = null @ fit @ (sqrt_w[:, None] * sample)
        from_edges = (pinv_c - corr @ pinv_c)[:, : 4 * n]
        from_target = null @ fit * sqrt_w[None, :]
        self.from_edges = self.to_field @ from_edges  # (2 n_field, 4 (k+1))
        self.from_target = self.to_field @ from_target  # (2 n_field, 2 nT)

        # edge traces of stored fields, in edge Legendre coefficients
        e = legendre_values(k + 1, np.array([-0.5, 0.5]))
        self.trace_b1 = [np.kron(e[:, s][:, None], np.eye(n)).T for s in (0, 1)]
        self.trace_b2 = [np.kron(np.eye(n), e[:, s][:, None]).T for s in (0, 1)]

        # divergence in coefficient space: (k+1)^2 tensor modes
        self.div_b1 = np.kron(deriv, np.eye(n)) / self.dx
        self.div_b2 = np.kron(np.eye(n), deriv) / self.dy

    def reconstruct(self, edges_left, edges_right, edges_bottom, edges_top, target_b1, target_b2):
        """Vectorised reconstruction; leading axes of all inputs are cell axes."""
        d = np.concatenate((edges_left, edges_right, edges_bottom, edges_top), axis=-1)
        t = np.concatenate((target_b1, target_b2), axis=-1)
        coeffs = d @ self.from_edges.T + t @ self.from_target.T
        return coeffs[..., : self.n_field], coeffs[..., self.n_field:]

    def traces(self, field):
        """Edge-coefficient traces ``(left, right, bottom, top)`` of every cell."""
        return (field.b1 @ self.trace_b1[0].T, field.b1 @ self.trace_b1[1].T,
                field.b2 @ self.trace_b2[0].T, field.b2 @ self.trace_b2[1].T)

    def divergence_coefficients(self, field):
        return field.b1 @ self.div_b1.T + field.b2 @ self.div_b2.T


@lru_cache(maxsize=None)
def _operators(k, dx, dy):
    return DivFreeOperators(k, dx, dy)


def operators_for(k, dx, dy):
    return _operators(int(k), float(dx), float(dy))


@lru_cache(maxsize=None)
def edge_matrices(k):
    """Quadrature matrices of the edge weak form on the 2N half-interval nodes."""
    q, w = half_interval_nodes(k + 1)
    phi = legendre_values(k, q)
    dphi = legendre_derivatives(k, q)
    scale = 2.0 * np.arange(k + 1) + 1.0
    ends = legendre_values(k, np.array([-0.5, 0.5]))
    return {
        "project": (phi * w).T * scale,  # values at nodes -> coefficients
        "stiffness": (dphi * w).T * scale,
        "low": ends[:, 0] * scale,
        "high": ends[:, 1] * scale,
        "eval": phi,
    }


def evolve_edge_normals(old, other_b, g_line, g_low, g_high, dt, theta, length):
    """One forward-Euler update of edge normal polynomials.

    ``other_b`` holds the normal component of the overlapping mesh's field at
    the 2N edge nodes, ``g_line`` the electric field there, and ``g_low`` /
    ``g_high`` its values at the edge endpoints (low = smaller coordinate).
    ``length`` is the edge length.  For a vertical edge the weak form is::

        b = (1-theta) b_old + P[theta B1 + dt/dy G phi'] + dt/dy (G_low phi(-1/2) - G_high phi(1/2))

    and a horizontal edge uses the opposite sign on every electric-field term;
    pass ``length = -dx`` to select it.
    """
    mats = edge_matrices(old.shape[-1] - 1)
    ratio = dt / length
    new = (1.0 - theta) * old
    new += theta * (other_b @ mats["project"])
    new += ratio * (g_line @ mats["stiffness"])
    new += ratio * (g_low[..., None] * mats["low"] - g_high[..., None] * mats["high"])
    return new


def compatibility_residual(edges, dx, dy):
    """Loop closure of every cell: dx (b_top - b_bottom)_0 + dy (b_right - b_left)_0."""
    v, h = edges.vertical[..., 0], edges.horizontal[..., 0]
    return dx * (h[:, 1:] - h[:, :-1]) + dy * (v[1:, :] - v[:-1, :])


def close_outer_loops(edges, dx, dy, periodic):
    """Restore loop closure of cells that straddle a non-periodic boundary, in place.

    Such a cell owns one edge lying wholly outside the domain (its left edge
    on the first column, right edge on the last, bottom or top edge
    otherwise).  Ghost data is only approximately normal-continuous, so the
    mean of that outer edge is reset to close the loop.  Interior edges are
    never touched.
    """
    v, h = edges.vertical, edges.horizontal
    px, py = periodic
    if not px:
        res = compatibility_residual(edges, dx, dy)
        v[0, :, 0] += res[0] / dy
        v[-1, :, 0] -= res[-1] / dy
    if not py:
        cols = slice(None) if px else slice(1, -1)
        res = compatibility_residual(edges, dx, dy)
        h[cols, 0, 0] += res[cols, 0] / dx
        h[cols, -1, 0] -= res[cols, -1] / dx
    return edges


def reconstruct_df_cell_field(edges, target_b1, target_b2, ops, tolerance=1e-12):
    """Divergence-free fields of every cell bounded by ``edges``.

    ``target_b1``/``target_b2`` hold the blended target field at the tensor
    Gauss nodes, shape ``(n_cols, n_rows, (2k+2)^2)``.  A cell whose edges
    violate loop closure raises :class:`StructuralError`.
    """
    residual = compatibility_residual(edges, ops.dx, ops.dy)
    scale = max(1.0, float(np.max(np.abs(edges.vertical), initial=0.0)),
                float(np.max(np.abs(edges.horizontal), initial=0.0)))
    worst = np.unravel_index(np.argmax(np.abs(residual)), residual.shape)
    if abs(residual[worst]) > tolerance * scale * max(ops.dx, ops.dy):
        raise StructuralError(f"edge loop closure violated by {residual[worst]:.3e}",
                              cell=tuple(int(i) for i in worst))
    v, h = edges.vertical, edges.horizontal
    b1, b2 = ops.reconstruct(v[:-1], v[1:], h[:, :-1], h[:, 1:], target_b1, target_b2)
    return DivFreeField(b1, b2)


def divergence_audit(field, edges, ops, periodic=(False, False)):
    """Return ``(max pointwise |div B|, max normal mismatch)``.

    The pointwise divergence is sampled at the tensor Gauss nodes of every
    cell.  The mismatch covers each cell trace against its edge polynomial and
    the trace jump between neighbouring cells, measured at the edge nodes.
    """
    k = ops.k
    div = ops.divergence_coefficients(field)
    q, _ = half_interval_nodes(k + 1)
    sample = tensor_values(k, k, np.repeat(q, len(q)), np.tile(q, len(q)))
    max_div = float(np.max(np.abs(div @ sample), initial=0.0))
    left, right, bottom, top = ops.traces(field)
    ev = edge_matrices(k)["eval"]
    diffs = [left - edges.vertical[:-1], right - edges.vertical[1:],
             bottom - edges.horizontal[:, :-1], top - edges.horizontal[:, 1:],
             right[:-1] - left[1:], top[:, :-1] - bottom[:, 1:]]
    if periodic[0]:
        diffs.append(right[-1] - left[0])
    if periodic[1]:
        diffs.append(top[:, -1] - bottom[:, 0])
    jump = max(float(np.max(np.abs(d @ ev), initial=0.0)) for d in diffs)
    return max_div, jump


def quadrature_flux_cancellation(field, ops):
    """Per cell, the Gauss sum of the normal-component flux through the boundary.

    This is the discrete identity the positivity proof relies on; it vanishes
    for any divergence-free field.
    """
    k = ops.k
    _, w = half_interval_nodes(k + 1)
    ev = edge_matrices(k)["eval"]
    left, right, bottom, top = ops.traces(field)
    return (((right - left) @ ev) @ w) * ops.dy + (((top - bottom) @ ev) @ w) * ops.dx


def update_aux_magnetic_average(aux, tilde_b, g_top, g_bottom, g_right, g_left, weights, dt, theta, dx, dy):
    """Finite-volume update of the auxiliary (B1, B2) averages.

    ``tilde_b`` is the (2, ...) decomposition average of the other mesh's
    limited field; the ``g_*`` arrays carry the electric field at the 2N
    half-interval nodes of each cell side and ``weights`` their quadrature
    weights (summing to 1).
    """
    values = aux.values
    new = values + theta * (tilde_b - values)
    new[0] -= dt / dy * ((g_top - g_bottom) @ weights)
    new[1] += dt / dx * ((g_right - g_left) @ weights)
    return AuxMagneticAverages(new)


def field_values(field, k, xi, eta):
    """Evaluate (B1, B2) of every cell at reference points; shapes ``(..., n_points)``."""
    return field.b1 @ tensor_values(k + 1, k, xi, eta), field.b2 @ tensor_values(k, k + 1, xi, eta)


def project_field_from_potential(potential, field_func, mesh_centers, dx, dy, k):
    """Initial divergence-free data from a stream function ``potential(x, y)``.

    Edge normal moments come from the potential by integration by parts, so
    loop closure holds to rounding whatever the quadrature error.  Interior
    modes are fitted to ``field_func(x, y) -> (B1, B2)`` at the tensor nodes.
    Returns ``(edges, field)`` for the cells centred at ``mesh_centers``.
    """
    xc, yc = mesh_centers
    ops = operators_for(k, dx, dy)
    n = k + 1
    s, ws = np.polynomial.legendre.leggauss(n + 3)
    s, ws = s / 2.0, ws / 2.0
    ends = legendre_values(k, np.array([-0.5, 0.5]))
    dphi = legendre_derivatives(k, s)
    scale = 2.0 * np.arange(n) + 1.0

    def moments(lo, hi, vals):
        # (2m+1) * mean of dA/ds P_m(2s) = (2m+1) ([A P_m] - int A dP_m/ds)
        return scale * (hi[..., None] * ends[:, 1] - lo[..., None] * ends[:, 0] - (vals * ws) @ dphi.T)

    xe = np.concatenate((xc - 0.5 * dx, [xc[-1] + 0.5 * dx]))
    ye = np.concatenate((yc - 0.5 * dy, [yc[-1] + 0.5 * dy]))
    xv, yv = np.meshgrid(xe, yc, indexing="ij")
    vertical = moments(potential(xv, yv - 0.5 * dy), potential(xv, yv + 0.5 * dy),
                       potential(xv[..., None], yv[..., None] + s * dy)) / dy
    xh, yh = np.meshgrid(xc, ye, indexing="ij")
    horizontal = -moments(potential(xh - 0.5 * dx, yh), potential(xh + 0.5 * dx, yh),
                          potential(xh[..., None] + s * dx, yh[..., None])) / dx
    edges = EdgeNormalField(vertical, horizontal)

    q, _ = half_interval_nodes(n)
    m = len(q)
    x = xc[:, None, None] + np.repeat(q, m) * dx
    y = yc[None, :, None] + np.tile(q, m) * dy
    x, y = np.broadcast_arrays(x, y)
    t1, t2 = field_func(x, y)
    field = reconstruct_df_cell_field(edges, np.broadcast_to(t1, x.shape), np.broadcast_to(t2, x.shape),
                                      ops, tolerance=1e-10)
    return edges, field
