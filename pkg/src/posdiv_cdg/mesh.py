"""Overlapping Cartesian meshes, quadrature rules, point layouts and CAD weights.

Index conventions
-----------------
Primal cells are stored with one ghost layer: padded index ``p`` in
``0..nx+1`` has centre ``xmin + (p - 1/2) dx``; the physical cells are
``1..nx``.  Dual cells have index ``d`` in ``0..nx`` with centre
``xmin + d dx``; dual cell ``d`` overlaps padded primal cells ``d`` and
``d + 1``, and physical primal cell ``p`` overlaps dual cells ``p - 1`` and
``p``.  So for either direction of transfer, a target cell sits over the
pair of source cells ``(I, I + 1)`` and the target array is one shorter than
the source array.  The same holds in y.

Every cell, primal or dual, is evaluated on one shared local layout in
reference coordinates ``[-1/2, 1/2]^2``; it contains every node at which the
*other* mesh needs this cell's solution (volume and edge quadrature, the
vertex values and the cell-average-decomposition nodes).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigError

ZHANG_SHU = "zhang_shu"
CUI_DING_WU = "cui_ding_wu"
CAD_VARIANTS = (ZHANG_SHU, CUI_DING_WU)


@lru_cache(maxsize=None)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1]) / 2.0  # exact mirror symmetry on [-1/2, 1/2]
    w = 0.5 * (w + w[::-1]) / 2.0
    w = w / w.sum()
    return x, w


def gauss_nodes(n):
    """n-point Gauss-Legendre rule on [-1/2, 1/2] with weights summing to 1."""
    if not 1 <= n <= 10:
        raise ValueError("gauss_nodes supports 1 <= n <= 10")
    x, w = _gauss(n)
    return x.copy(), w.copy()


@lru_cache(maxsize=None)
def _gauss_lobatto(n):
    if n == 2:
        x = np.array([-1.0, 1.0])
    else:
        interior = np.polynomial.legendre.Legendre.basis(n - 1).deriv().roots()
        x = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    pn = np.polynomial.legendre.Legendre.basis(n - 1)(x)
    w = 2.0 / (n * (n - 1) * pn**2)
    x = 0.5 * (x - x[::-1]) / 2.0
    w = 0.5 * (w + w[::-1]) / 2.0
    return x, w / w.sum()


def gauss_lobatto_nodes(n):
    """n-point Gauss-Lobatto rule on [-1/2, 1/2]; end weights are 1/(n(n-1))."""
    if n < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 nodes")
    x, w = _gauss_lobatto(n)
    return x.copy(), w.copy()


def half_interval_nodes(n):
    """Gauss nodes of each half of [-1/2, 1/2]: 2n nodes, weights summing to 1.

    The first n nodes lie in (-1/2, 0), the last n in (0, 1/2).
    """
    g, w = gauss_nodes(n)
    nodes = np.concatenate((-0.25 + 0.5 * g, 0.25 + 0.5 * g))
    weights = np.concatenate((0.5 * w, 0.5 * w))
    return nodes, weights


@dataclass(frozen=True)
class MeshPair:
    domain: tuple
    nx: int
    ny: int
    dx: float = field(init=False)
    dy: float = field(init=False)

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.domain
        object.__setattr__(self, "dx", (xmax - xmin) / self.nx)
        object.__setattr__(self, "dy", (ymax - ymin) / self.ny)

    @property
    def h(self):
        return min(self.dx, self.dy)

    def primal_centers(self):
        """Centres of the padded primal cells (ghosts included), as 1D x and y arrays."""
        xmin, _, ymin, _ = self.domain
        x = xmin + (np.arange(self.nx + 2) - 0.5) * self.dx
        y = ymin + (np.arange(self.ny + 2) - 0.5) * self.dy
        return x, y

    def dual_centers(self):
        xmin, _, ymin, _ = self.domain
        x = xmin + np.arange(self.nx + 1) * self.dx
        y = ymin + np.arange(self.ny + 1) * self.dy
        return x, y

    def centers(self, mesh):
        return self.primal_centers() if mesh == "primal" else self.dual_centers()

    def cell_bounds(self, mesh, i, j):
        """(x0, x1, y0, y1) of primal padded cell (i, j) or dual cell (i, j)."""
        xc, yc = self.centers(mesh)
        return (xc[i] - 0.5 * self.dx, xc[i] + 0.5 * self.dx,
                yc[j] - 0.5 * self.dy, yc[j] + 0.5 * self.dy)


def build_mesh_pair(domain, nx, ny):
    xmin, xmax, ymin, ymax = map(float, domain)
    if nx < 2 or ny < 2:
        raise ConfigError("grid needs at least 2 cells per direction")
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError(f"degenerate domain {domain}")
    return MeshPair((xmin, xmax, ymin, ymax), int(nx), int(ny))


# ---------------------------------------------------------------------------
# cell average decomposition

@dataclass(frozen=True)
class CadLayout:
    """Per-quadrant decomposition of a cell average into point values.

    For a quadrant mapped to ``[-1/2, 1/2]^2`` the average of any polynomial
    of degree <= k equals::

        omega_x * sum_mu w_mu (p(-1/2, y_mu) + p(1/2, y_mu))
      + omega_y * sum_mu w_mu (p(x_mu, -1/2) + p(x_mu, 1/2))
      + sum_s internal_weights[s] * p(internal_nodes[s])

    with ``(x_mu, w_mu)`` the k+1 point Gauss rule.
    """

    variant: str
    k: int
    internal_nodes: np.ndarray
    internal_weights: np.ndarray
    omega_x: float
    omega_y: float
    zeta: float
    omega_star: float

    @property
    def n_internal(self):
        return len(self.internal_weights)

    def weight_total(self):
        return 2.0 * self.omega_x + 2.0 * self.omega_y + float(np.sum(self.internal_weights))


def omega_star_cui_ding_wu(k, zeta):
    z = abs(zeta)
    if k == 1:
        return 0.5
    if k in (2, 3):
        return 1.0 / (4.0 + 2.0 * z)
    if k in (4, 5):
        r = 78.0 * z * z + 46.0
        arg = (1476.0 * z * z - 244.0) / r**1.5
        return 1.0 / (14.0 / 3.0 + (2.0 / 3.0) * math.sqrt(r) * math.cos(math.acos(arg) / 3.0))
    raise ConfigError("Cui-Ding-Wu decomposition is only available for k <= 5")


def zhang_shu_lobatto_count(k):
    return math.ceil((k + 3) / 2)


def _zhang_shu_internal(k, mu_x, mu_y):
    """Interior Lobatto-times-Gauss nodes and weights of the classical decomposition."""
    lob_x, lob_w = gauss_lobatto_nodes(zhang_shu_lobatto_count(k))
    g, w = gauss_nodes(k + 1)
    nodes, weights = [], []
    for xl, wl in zip(lob_x[1:-1], lob_w[1:-1]):
        for yg, wg in zip(g, w):
            nodes.append((xl, yg))
            weights.append(mu_x * wl * wg)
    for xg, wg in zip(g, w):
        for yl, wl in zip(lob_x[1:-1], lob_w[1:-1]):
            nodes.append((xg, yl))
            weights.append(mu_y * wl * wg)
    return _merge_nodes(np.array(nodes).reshape(-1, 2), np.array(weights))


def _merge_nodes(nodes, weights, tol=1e-14):
    merged_nodes, merged_weights = [], []
    for node, wt in zip(nodes, weights):
        for idx, existing in enumerate(merged_nodes):
            if np.max(np.abs(existing - node)) < tol:
                merged_weights[idx] += wt
                break
        else:
            merged_nodes.append(node.copy())
            merged_weights.append(float(wt))
    return np.array(merged_nodes).reshape(-1, 2), np.array(merged_weights)


def _monomial_exponents(k):
    return [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


def _monomial_average(a, b):
    def avg(n):
        return 0.0 if n % 2 else 1.0 / ((n + 1) * 2.0**n)
    return avg(a) * avg(b)


def _boundary_moments(k, omega_x, omega_y):
    g, w = gauss_nodes(k + 1)
    out = []
    for a, b in _monomial_exponents(k):
        side_x = np.sum(w * ((-0.5) ** a + 0.5**a) * g**b)
        side_y = np.sum(w * g**a * ((-0.5) ** b + 0.5**b))
        out.append(omega_x * side_x + omega_y * side_y)
    return np.array(out)


def _solve_internal_weights(k, candidates, omega_x, omega_y):
    exps = _monomial_exponents(k)
    target = np.array([_monomial_average(a, b) for a, b in exps]) - _boundary_moments(k, omega_x, omega_y)
    matrix = np.array([[x**a * y**b for x, y in candidates] for a, b in exps])
    weights, _ = nnls(matrix, target)
    residual = matrix @ weights - target
    if np.max(np.abs(residual)) > 1e-14:
        raise ConfigError(f"no nonnegative internal weights reproduce degree {k} exactly")
    keep = weights > 0
    return candidates[keep], weights[keep]


def cad_layout(k, variant, a1_over_dx, a2_over_dy):
    """Boundary and internal weights of the per-quadrant decomposition.

    ``a1_over_dx`` and ``a2_over_dy`` are the directional wave-speed ratios;
    they set the split between x and y boundary weights.
    """
    if variant not in CAD_VARIANTS:
        raise ConfigError(f"unknown CAD variant {variant!r}")
    if k < 1:
        raise ConfigError("polynomial degree must be at least 1")
    if not (a1_over_dx > 0 and a2_over_dy > 0):
        raise ValueError("wave-speed ratios must be positive")
    total = a1_over_dx + a2_over_dy
    mu_x, mu_y = a1_over_dx / total, a2_over_dy / total
    zeta = (a1_over_dx - a2_over_dy) / total
    if variant == ZHANG_SHU:
        lobatto = zhang_shu_lobatto_count(k)
        omega_star = 1.0 / (lobatto * (lobatto - 1))
        nodes, weights = _zhang_shu_internal(k, mu_x, mu_y)
        keep = weights > 0
        nodes, weights = nodes[keep], weights[keep]
        return CadLayout(variant, k, nodes, weights, omega_star * mu_x, omega_star * mu_y,
                         zeta, omega_star)
    omega_star = omega_star_cui_ding_wu(k, zeta)
    omega_x, omega_y = omega_star * mu_x, omega_star * mu_y
    # nodes on the line normal to the dominant direction, plus the centre
    zs_nodes, _ = _zhang_shu_internal(k, 1.0, 1.0)
    on_vertical = np.abs(zs_nodes[:, 0]) < 1e-15
    on_horizontal = np.abs(zs_nodes[:, 1]) < 1e-15
    pick = on_vertical if a1_over_dx >= a2_over_dy else on_horizontal
    candidates, _ = _merge_nodes(np.vstack((zs_nodes[pick], [[0.0, 0.0]])), np.zeros(pick.sum() + 1))
    nodes, weights = _solve_internal_weights(k, candidates, omega_x, omega_y)
    return CadLayout(variant, k, nodes, weights, omega_x, omega_y, zeta, omega_star)


def cad_quadrant_average(layout, func):
    """Apply the decomposition on the reference quadrant to ``func(x, y)``."""
    g, w = gauss_nodes(layout.k + 1)
    half = 0.5 * np.ones_like(g)
    total = layout.omega_x * np.sum(w * (func(-half, g) + func(half, g)))
    total += layout.omega_y * np.sum(w * (func(g, -half) + func(g, half)))
    if layout.n_internal:
        total += np.sum(layout.internal_weights * func(layout.internal_nodes[:, 0], layout.internal_nodes[:, 1]))
    return total


# ---------------------------------------------------------------------------
# local point layout

QUADRANT_CENTERS = ((-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25))  # SW, SE, NW, NE
SW, SE, NW, NE = range(4)


@dataclass(frozen=True)
class PointSets:
    """All evaluation nodes of one cell in reference coordinates.

    Groups, in storage order:

    ``tensor``    (2N)^2 nodes q_a x q_b, a-major; the quadrant Gauss grids
    ``vlines``    3 x 2N nodes on xi = -1/2, 0, 1/2 at eta = q_b
    ``hlines``    3 x 2N nodes on eta = -1/2, 0, 1/2 at xi = q_a
    ``center``    the cell centre (a vertex of the overlapping cells)
    ``internal``  4 x S internal decomposition nodes, quadrant-major (SW, SE, NW, NE)
    """

    k: int
    half_nodes: np.ndarray
    half_weights: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    slices: dict
    cad: CadLayout

    @property
    def n_points(self):
        return len(self.xi)

    @property
    def n_half(self):
        return self.k + 1

    def group(self, name):
        return self.slices[name]


def assemble_point_sets(k, cad=None):
    """Build the shared local evaluation layout for degree ``k``.

    The layout is identical for primal and dual cells; which physical nodes
    it represents follows from the cell it is applied to.
    """
    if cad is not None and cad.k != k:
        raise ValueError("CAD layout degree does not match k")
    n = k + 1
    q, wq = half_interval_nodes(n)
    m = 2 * n
    xs, ys, slices = [], [], {}

    def add(name, x, y):
        start = sum(len(a) for a in xs)
        xs.append(np.asarray(x, dtype=float))
        ys.append(np.asarray(y, dtype=float))
        slices[name] = slice(start, start + len(xs[-1]))

    add("tensor", np.repeat(q, m), np.tile(q, m))
    lines = np.array([-0.5, 0.0, 0.5])
    add("vlines", np.repeat(lines, m), np.tile(q, 3))
    add("hlines", np.tile(q, 3), np.repeat(lines, m))
    add("center", [0.0], [0.0])
    if cad is not None and cad.n_internal:
        ix, iy = [], []
        for cx, cy in QUADRANT_CENTERS:
            ix.extend(cx + 0.5 * cad.internal_nodes[:, 0])
            iy.extend(cy + 0.5 * cad.internal_nodes[:, 1])
        add("internal", ix, iy)
    else:
        add("internal", [], [])
    return PointSets(k, q, wq, np.concatenate(xs), np.concatenate(ys), slices, cad)


def physical_points(mesh, which, points, i, j):
    """Physical coordinates of the layout nodes of cell (i, j) on mesh ``which``."""
    xc, yc = mesh.centers(which)
    return xc[i] + points.xi * mesh.dx, yc[j] + points.eta * mesh.dy


def cell_node_set(mesh, which, points, i, j):
    """The nodes cell (i, j) of mesh ``which`` needs from the overlapping mesh.

    Built directly from the definition (tensor Gauss nodes, the vertices and
    the quadrant decomposition nodes of the cell), independent of the shared
    local layout.  Primal indices are padded.
    """
    x0, x1, y0, y1 = mesh.cell_bounds(which, i, j)
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    q = points.half_nodes
    gx, gy = xm + q * mesh.dx, ym + q * mesh.dy
    pts = [(a, b) for a in gx for b in gy]
    # quadrant corners: vertices, edge midpoints and the centre
    pts += [(a, b) for a in (x0, xm, x1) for b in (y0, ym, y1)]
    g, _ = gauss_nodes(points.k + 1)
    for cx, cy in QUADRANT_CENTERS:
        qx0, qx1 = xm + (cx - 0.25) * mesh.dx, xm + (cx + 0.25) * mesh.dx
        qy0, qy1 = ym + (cy - 0.25) * mesh.dy, ym + (cy + 0.25) * mesh.dy
        qxm, qym = 0.5 * (qx0 + qx1), 0.5 * (qy0 + qy1)
        for t in g:
            pts += [(qx0, qym + t * 0.5 * mesh.dy), (qx1, qym + t * 0.5 * mesh.dy)]
            pts += [(qxm + t * 0.5 * mesh.dx, qy0), (qxm + t * 0.5 * mesh.dx, qy1)]
        if points.cad is not None:
            for sx, sy in points.cad.internal_nodes:
                pts.append((qxm + 0.5 * sx * mesh.dx, qym + 0.5 * sy * mesh.dy))
    return np.array(pts)
