"""Modal Legendre bases on rectangular cells and edges.

Reference coordinates are ``xi, eta`` in ``[-1/2, 1/2]``; a cell with
centre ``(xc, yc)`` and size ``dx x dy`` maps ``x = xc + xi dx``.  One-variable
modes are ``P_n(2 s)`` so that the zeroth mode is identically 1 and the mode
coefficients of an average are just the zeroth coefficient.

The P^k basis is the tensor Legendre family restricted to total degree
``<= k``, ordered by total degree and then by decreasing x-degree.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as leg

from .mesh import half_interval_nodes


@lru_cache(maxsize=None)
def pk_exponents(k):
    return tuple((a, d - a) for d in range(k + 1) for a in range(d, -1, -1))


def n_modes(k):
    return (k + 1) * (k + 2) // 2


def mode_degrees(k):
    return np.array([a + b for a, b in pk_exponents(k)])


def mode_norms(k):
    """Reciprocal of the mean square of each mode: (2a+1)(2b+1)."""
    return np.array([(2 * a + 1) * (2 * b + 1) for a, b in pk_exponents(k)], dtype=float)


def legendre_values(n_max, s):
    """Rows P_n(2 s), n = 0..n_max."""
    s = np.asarray(s, dtype=float)
    out = np.empty((n_max + 1,) + s.shape)
    t = 2.0 * s
    out[0] = 1.0
    if n_max >= 1:
        out[1] = t
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_derivatives(n_max, s):
    """Rows d/ds P_n(2 s), n = 0..n_max."""
    s = np.asarray(s, dtype=float)
    out = np.zeros((n_max + 1,) + s.shape)
    for n in range(1, n_max + 1):
        c = np.zeros(n + 1)
        c[n] = 1.0
        out[n] = 2.0 * leg.legval(2.0 * s, leg.legder(c))
    return out


@lru_cache(maxsize=None)
def legendre_derivative_matrix(n_max):
    """Matrix D with (D c)_m the Legendre coefficients of d/ds of sum c_n P_n(2 s).

    Shape ``(n_max, n_max + 1)``: the derivative drops one degree.
    """
    d = np.zeros((max(n_max, 1), n_max + 1))
    for n in range(n_max + 1):
        c = np.zeros(n_max + 1)
        c[n] = 1.0
        der = 2.0 * leg.legder(c) if n_max > 0 else np.zeros(1)
        d[: len(der), n] = der
    return d[:n_max] if n_max > 0 else np.zeros((0, 1))


def modal_values(k, xi, eta):
    """Values of the P^k modes at the points, shape ``(n_modes, n_points)``."""
    lx = legendre_values(k, xi)
    ly = legendre_values(k, eta)
    return np.array([lx[a] * ly[b] for a, b in pk_exponents(k)])


def modal_gradients(k, xi, eta):
    """(d/dxi, d/deta) of the P^k modes, each of shape ``(n_modes, n_points)``."""
    lx, ly = legendre_values(k, xi), legendre_values(k, eta)
    dx, dy = legendre_derivatives(k, xi), legendre_derivatives(k, eta)
    gx = np.array([dx[a] * ly[b] for a, b in pk_exponents(k)])
    gy = np.array([lx[a] * dy[b] for a, b in pk_exponents(k)])
    return gx, gy


def tensor_values(deg_x, deg_y, xi, eta):
    """Tensor Legendre modes L_a(xi) L_b(eta), a <= deg_x, b <= deg_y, a-major."""
    lx = legendre_values(deg_x, xi)
    ly = legendre_values(deg_y, eta)
    return (lx[:, None, :] * ly[None, :, :]).reshape((deg_x + 1) * (deg_y + 1), -1)


def tensor_gradients(deg_x, deg_y, xi, eta):
    lx, ly = legendre_values(deg_x, xi), legendre_values(deg_y, eta)
    dx, dy = legendre_derivatives(deg_x, xi), legendre_derivatives(deg_y, eta)
    n = (deg_x + 1) * (deg_y + 1)
    gx = (dx[:, None, :] * ly[None, :, :]).reshape(n, -1)
    gy = (lx[:, None, :] * dy[None, :, :]).reshape(n, -1)
    return gx, gy


def cell_quadrature(k):
    """Tensor rule built from the half-interval Gauss nodes; exact to degree 2k+1 per variable
    on each quadrant.  Returns ``(xi, eta, weights)`` with weights summing to 1."""
    q, w = half_interval_nodes(k + 1)
    m = len(q)
    return np.repeat(q, m), np.tile(q, m), np.outer(w, w).ravel()


@dataclass
class CellPolynomial:
    """Modal coefficients of a vector polynomial on one rectangular cell."""

    coeffs: np.ndarray  # (n_components, n_modes)
    k: int
    bounds: tuple  # (x0, x1, y0, y1)

    def to_reference(self, x, y):
        x0, x1, y0, y1 = self.bounds
        return (np.asarray(x, float) - 0.5 * (x0 + x1)) / (x1 - x0), (np.asarray(y, float) - 0.5 * (y0 + y1)) / (y1 - y0)


def l2_project(func, bounds, k, n_components=None):
    """L2 projection of ``func(x, y) -> (n_components, n_points)`` onto P^k of the cell."""
    x0, x1, y0, y1 = bounds
    xi, eta, w = cell_quadrature(k)
    x = 0.5 * (x0 + x1) + xi * (x1 - x0)
    y = 0.5 * (y0 + y1) + eta * (y1 - y0)
    values = np.atleast_2d(np.asarray(func(x, y), dtype=float))
    phi = modal_values(k, xi, eta)
    coeffs = (values * w) @ phi.T * mode_norms(k)
    if n_components is not None and coeffs.shape[0] != n_components:
        raise ValueError("component count mismatch")
    return CellPolynomial(coeffs, k, tuple(map(float, bounds)))


def poly_eval(poly, x, y, tol=1e-12):
    """Evaluate at physical point(s); points outside the closed cell raise IndexError."""
    xi, eta = poly.to_reference(x, y)
    if np.any(np.abs(xi) > 0.5 + tol) or np.any(np.abs(eta) > 0.5 + tol):
        raise IndexError("evaluation point outside the cell")
    phi = modal_values(poly.k, np.atleast_1d(xi), np.atleast_1d(eta))
    out = poly.coeffs @ phi
    return out[:, 0] if np.ndim(x) == 0 else out


def cell_average_of(poly):
    return poly.coeffs[:, 0].copy()


def project_cells(func, xc, yc, dx, dy, k):
    """Vectorised L2 projection over a grid of cells.

    ``func(x, y)`` receives arrays of shape ``(nx, ny, n_points)`` and returns
    ``(n_components, nx, ny, n_points)``.  Result shape is
    ``(n_components, nx, ny, n_modes)``.
    """
    xi, eta, w = cell_quadrature(k)
    x = xc[:, None, None] + xi[None, None, :] * dx
    y = yc[None, :, None] + eta[None, None, :] * dy
    x, y = np.broadcast_arrays(x, y)
    values = np.asarray(func(x, y), dtype=float)
    phi = modal_values(k, xi, eta)
    return ((values * w) @ phi.T) * mode_norms(k)


# source-cell centre offsets, in target reference units, for the target quadrants SW, SE, NW, NE
QUADRANT_SOURCE_OFFSETS = ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5))


@lru_cache(maxsize=None)
def overlap_transfer_matrices(k):
    """Exact L2 transfer from the four overlapping source cells to a target cell.

    Returns an array ``T`` of shape ``(4, n_modes, n_modes)`` such that the
    target coefficients of the piecewise source polynomial are
    ``sum_q c_source[q] @ T[q]`` with ``q`` over the target quadrants
    SW, SE, NW, NE.
    """
    from .mesh import gauss_nodes

    g, w = gauss_nodes(k + 1)
    nb = n_modes(k)
    out = np.zeros((4, nb, nb))
    norms = mode_norms(k)
    for q, (ox, oy) in enumerate(QUADRANT_SOURCE_OFFSETS):
        # target quadrant lies on the side of the source centre offset
        cx, cy = 0.5 * ox, 0.5 * oy
        xi = np.repeat(cx + 0.5 * g, len(g))
        eta = np.tile(cy + 0.5 * g, len(g))
        wq = 0.25 * np.outer(w, w).ravel()
        phi_t = modal_values(k, xi, eta)
        phi_s = modal_values(k, xi - ox, eta - oy)
        out[q] = (phi_s * wq) @ phi_t.T * norms[None, :]
    return out
