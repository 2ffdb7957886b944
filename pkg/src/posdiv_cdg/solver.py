"""Central DG update on the overlapping meshes with positivity and exact div B = 0.

Both meshes are advanced by the same routine: a *target* mesh is updated from
the point values of the overlapping *source* mesh.  Cell ``(I, J)`` of the
target overlaps source cells ``(I..I+1, J..J+1)`` and every quantity the
target needs is gathered from the sources' shared point layout (see
:mod:`posdiv_cdg.mesh`).  The primal mesh is stored with one ghost ring,
which the boundary policy fills after every change.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

import numpy as np

from .basis import (mode_degrees, mode_norms, modal_gradients, modal_values, n_modes,
                    overlap_transfer_matrices, project_cells, tensor_gradients, tensor_values)
from .divfree import (AuxMagneticAverages, DivFreeField, EdgeNormalField, close_outer_loops, divergence_audit,
                      evolve_edge_normals, operators_for, project_field_from_potential,
                      reconstruct_df_cell_field)
from .errors import StructuralError
from .limiters import cos_damp, cos_indicator, pp_limit_point_set
from .mesh import (CUI_DING_WU, NE, NW, QUADRANT_CENTERS, SE, SW, assemble_point_sets, build_mesh_pair,
                   cad_layout, gauss_nodes)
from ._kernels import gather_quadrants, max_pair_wave_speed, internal_energy as fast_internal_energy, r_fluxes_and_efield
from .physics import (BX, BY, BZ, EN, MX, MY, R_COMPONENTS, RHO, _internal_energy, _max_wave_speed_pair,
                      _prim_to_cons)
from .problems import PERIODIC, fill_ghosts

R_INDEX = list(R_COMPONENTS)


class StepRejected(Exception):
    """A stage exceeded the wave-speed bound used to pick dt."""

    def __init__(self, ratio):
        super().__init__(f"stage wave speed exceeds the step estimate by {ratio:.4f}")
        self.ratio = ratio


class StagnationError(StructuralError):
    """No positive time step can be taken."""


@dataclass
class MeshState:
    """Solution on one mesh: R moments, divergence-free field, edges and aux averages."""

    R: np.ndarray  # (6, ncx, ncy, n_modes)
    field: DivFreeField
    edges: EdgeNormalField
    aux: np.ndarray  # (2, ncx, ncy)

    def copy(self):
        return MeshState(self.R.copy(), self.field.copy(), self.edges.copy(), self.aux.copy())

    def parts(self):
        return (self.R, self.field.b1, self.field.b2, self.edges.vertical, self.edges.horizontal, self.aux)

    @classmethod
    def from_parts(cls, parts):
        r, b1, b2, v, h, aux = parts
        return cls(r, DivFreeField(b1, b2), EdgeNormalField(v, h), aux)

    def combine(self, weight, other, other_weight):
        return MeshState.from_parts([weight * a + other_weight * b for a, b in zip(self.parts(), other.parts())])


@dataclass
class SolverState:
    primal: MeshState  # padded with one ghost ring
    dual: MeshState
    t: float = 0.0
    step: int = 0


@dataclass
class TimeStepInfo:
    dt: float
    theta: float  # dt / tau_max
    tau_max: float
    alpha_hat: tuple
    omega_star: float
    theta_update: float = None  # blend weight used in the stage update
    cad: object = None

    def __post_init__(self):
        if self.theta_update is None:
            self.theta_update = self.theta


@dataclass
class SolverOptions:
    k: int = 2
    cad_variant: str = CUI_DING_WU
    cfl_nu: float = 0.2
    theta_cap: float = 1.0
    pp_bound: bool = True
    cos_enabled: bool = True
    cos_c: float = 1.0
    limiter_enabled: bool = True
    audit_every: int = 1  # 1: every stage; n: every n-th step
    alpha_headroom: float = 1.1
    df_tolerance: float = 1e-12


@dataclass
class StageReport:
    min_rho: float = math.inf
    min_energy: float = math.inf
    max_div: float = 0.0
    max_jump: float = 0.0
    limiter_active: bool = False
    alpha: tuple = (0.0, 0.0)


# ---------------------------------------------------------------------------
# discretisation context

class Discretization:
    """Mesh pair, problem and precomputed operators shared by every stage."""

    def __init__(self, problem, nx=None, ny=None, options=None):
        self.problem = problem
        self.options = options or SolverOptions()
        nx = nx or problem.grid[0]
        ny = ny or problem.grid[1]
        self.mesh = build_mesh_pair(problem.domain, nx, ny)
        self.gamma = problem.gamma
        k = self.k = self.options.k
        self.n_half = k + 1
        self.periodic = problem.periodic
        self.df_ops = operators_for(k, self.mesh.dx, self.mesh.dy)
        self.transfer = overlap_transfer_matrices(k)
        self.degrees = mode_degrees(k)
        base = self.base_points = assemble_point_sets(k)
        self.tensor_weights = np.outer(base.half_weights, base.half_weights).ravel()
        self.n_main = base.group("center").stop  # tensor, lines and centre come first
        xi, eta = base.xi[base.group("tensor")], base.eta[base.group("tensor")]
        gx, gy = modal_gradients(k, xi, eta)
        norms = mode_norms(k)
        w = self.tensor_weights
        self.volume_x = (gx * w).T * norms / self.mesh.dx
        self.volume_y = (gy * w).T * norms / self.mesh.dy
        q, wq = base.half_nodes, base.half_weights
        half = 0.5 * np.ones_like(q)
        self.surface = {
            "right": (modal_values(k, half, q) * wq).T * norms / self.mesh.dx,
            "left": (modal_values(k, -half, q) * wq).T * norms / self.mesh.dx,
            "top": (modal_values(k, q, half) * wq).T * norms / self.mesh.dy,
            "bottom": (modal_values(k, q, -half) * wq).T * norms / self.mesh.dy,
        }
        self.tensor_modal = modal_values(k, xi, eta)
        self.tensor_b1 = tensor_values(k + 1, k, xi, eta)
        self.tensor_b2 = tensor_values(k, k + 1, xi, eta)
        self.half_weights = wq
        # weak-form induction increments in the field spaces: dB1/dt = -dG/dy, dB2/dt = dG/dx
        norms1 = np.outer(2.0 * np.arange(k + 2) + 1, 2.0 * np.arange(k + 1) + 1).ravel()
        norms2 = norms1.reshape(k + 2, k + 1).T.ravel()
        _, gy1 = tensor_gradients(k + 1, k, xi, eta)
        gx2, _ = tensor_gradients(k, k + 1, xi, eta)
        self.induction = {
            "b1_volume": (gy1 * w).T * norms1 / self.mesh.dy,
            "b1_top": (tensor_values(k + 1, k, q, half) * wq).T * norms1 / self.mesh.dy,
            "b1_bottom": (tensor_values(k + 1, k, q, -half) * wq).T * norms1 / self.mesh.dy,
            "b2_volume": (gx2 * w).T * norms2 / self.mesh.dx,
            "b2_right": (tensor_values(k, k + 1, half, q) * wq).T * norms2 / self.mesh.dx,
            "b2_left": (tensor_values(k, k + 1, -half, q) * wq).T * norms2 / self.mesh.dx,
        }
        self.gauss_weights = gauss_nodes(k + 1)[1]
        self._layouts = {}
        self.main_layout = _build_layout(k, None)

    # layouts depend on the CAD, which changes with the wave-speed ratio
    def layout(self, cad):
        key = (cad.variant, cad.internal_nodes.tobytes(), cad.internal_weights.tobytes(), cad.omega_x, cad.omega_y)
        found = self._layouts.get(key)
        if found is None:
            if len(self._layouts) > 64:
                self._layouts.clear()
            found = self._layouts[key] = _build_layout(self.k, cad)
        return found

    def fill_ghosts(self, primal, r_only=False):
        fill_ghosts(primal, self.problem, self.mesh, r_only=r_only)

    def evaluate_tensor(self, mesh_state):
        """Conserved values at the tensor nodes, ``(8, ncx, ncy, (2N)^2)``."""
        return _point_values(mesh_state, self.tensor_modal, self.tensor_b1, self.tensor_b2)

    def sync_periodic(self, dual, r_only=False):
        """Dual cells 0 and n coincide on a periodic axis; keep them identical."""
        px, py = self.periodic
        if r_only:
            if px:
                dual.R[:, -1] = dual.R[:, 0]
            if py:
                dual.R[:, :, -1] = dual.R[:, :, 0]
            return
        for arr in (dual.R, dual.aux):
            if px:
                arr[:, -1] = arr[:, 0]
            if py:
                arr[:, :, -1] = arr[:, :, 0]
        for arr in (dual.field.b1, dual.field.b2):
            if px:
                arr[-1] = arr[0]
            if py:
                arr[:, -1] = arr[:, 0]
        if px:
            dual.edges.vertical[-1] = dual.edges.vertical[1]
            dual.edges.horizontal[-1] = dual.edges.horizontal[0]
        if py:
            dual.edges.horizontal[:, -1] = dual.edges.horizontal[:, 1]
            dual.edges.vertical[:, -1] = dual.edges.vertical[:, 0]

    def sync_periodic_primal_edges(self, primal):
        px, py = self.periodic
        if px:
            primal.edges.vertical[-1] = primal.edges.vertical[0]
        if py:
            primal.edges.horizontal[:, -1] = primal.edges.horizontal[:, 0]

    def real_primal(self, arr, cell_axis=1):
        sl = [slice(None)] * arr.ndim
        sl[cell_axis] = slice(1, -1)
        sl[cell_axis + 1] = slice(1, -1)
        return arr[tuple(sl)]

    def unique_dual(self, arr, cell_axis=1):
        """Dual cells without the periodic duplicates."""
        sl = [slice(None)] * arr.ndim
        if self.periodic[0]:
            sl[cell_axis] = slice(0, -1)
        if self.periodic[1]:
            sl[cell_axis + 1] = slice(0, -1)
        return arr[tuple(sl)]


@dataclass
class Layout:
    points: object
    modal: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    cad_weights: np.ndarray


def _build_layout(k, cad):
    pts = assemble_point_sets(k, cad)
    return Layout(pts, modal_values(k, pts.xi, pts.eta), tensor_values(k + 1, k, pts.xi, pts.eta),
                  tensor_values(k, k + 1, pts.xi, pts.eta), None if cad is None else cad_weight_matrix(pts))


# ---------------------------------------------------------------------------
# initial data

def initial_state(disc):
    """L2-projected R and potential-based divergence-free fields on both meshes."""
    problem, mesh, k = disc.problem, disc.mesh, disc.k
    gamma = problem.gamma

    def r_func(x, y):
        cons = _prim_to_cons(problem.primitive(x, y), gamma)
        return cons[R_INDEX]

    xp, yp = mesh.primal_centers()
    xd, yd = mesh.dual_centers()
    nb = n_modes(k)
    r_primal = np.zeros((6, mesh.nx + 2, mesh.ny + 2, nb))
    r_primal[:, 1:-1, 1:-1] = project_cells(r_func, xp[1:-1], yp[1:-1], mesh.dx, mesh.dy, k)
    r_dual = project_cells(r_func, xd, yd, mesh.dx, mesh.dy, k)

    edges_p, field_p = project_field_from_potential(problem.potential, problem.magnetic,
                                                    (xp[1:-1], yp[1:-1]), mesh.dx, mesh.dy, k)
    edges_d, field_d = project_field_from_potential(problem.potential, problem.magnetic,
                                                    (xd, yd), mesh.dx, mesh.dy, k)
    nf = field_p.b1.shape[-1]
    b1 = np.zeros((mesh.nx + 2, mesh.ny + 2, nf))
    b2 = np.zeros_like(b1)
    b1[1:-1, 1:-1] = field_p.b1
    b2[1:-1, 1:-1] = field_p.b2
    primal = MeshState(r_primal, DivFreeField(b1, b2), edges_p, np.array([b1[..., 0], b2[..., 0]]))
    dual = MeshState(r_dual, field_d, edges_d, np.array([field_d.b1[..., 0], field_d.b2[..., 0]]))
    disc.fill_ghosts(primal)
    disc.sync_periodic(dual)
    disc.sync_periodic_primal_edges(primal)
    return SolverState(primal, dual)


# ---------------------------------------------------------------------------
# point values and gathers

def evaluate(mesh_state, layout):
    """Conserved point values ``(8, ncx, ncy, n_points)`` on the layout."""
    return _point_values(mesh_state, layout.modal, layout.b1, layout.b2)


def _point_values(mesh_state, modal, basis_b1, basis_b2):
    # one GEMM per contiguous block, written straight into the output
    r, b1, b2 = mesh_state.R, mesh_state.field.b1, mesh_state.field.b2
    n_pts = modal.shape[1]
    out = np.empty((8,) + r.shape[1:-1] + (n_pts,))

    def into(dest, coeffs, basis):
        np.matmul(coeffs.reshape(-1, coeffs.shape[-1]), basis, out=dest.reshape(-1, n_pts))

    into(out[RHO:BX], r[:4], modal)
    into(out[BZ:], r[4:], modal)
    into(out[BX], b1, basis_b1)
    into(out[BY], b2, basis_b2)
    return out


def composed_average(mesh_state):
    avg = np.empty((8,) + mesh_state.R.shape[1:3])
    avg[R_INDEX] = mesh_state.R[..., 0]
    avg[BX] = mesh_state.aux[0]
    avg[BY] = mesh_state.aux[1]
    return avg


def gather_tensor(values, points):
    """Values of the source at the target's tensor nodes: (..., nx-1, ny-1, (2N)^2).

    ``values`` holds the source's tensor-node values only (last axis (2N)^2).
    """
    return gather_quadrants(values, points.n_half)


def vertical_lines(values, points):
    """Target vertical edges from source midlines: (..., nx, ny-1, 2N)."""
    n = points.n_half
    v = values[..., points.group("vlines")].reshape(values.shape[:-1] + (3, 2 * n))[..., 1, :]
    return np.concatenate((v[..., :-1, n:], v[..., 1:, :n]), axis=-1)


def horizontal_lines(values, points):
    n = points.n_half
    h = values[..., points.group("hlines")].reshape(values.shape[:-1] + (3, 2 * n))[..., 1, :]
    return np.concatenate((h[..., :-1, :, n:], h[..., 1:, :, :n]), axis=-1)


def centers(values, points):
    return values[..., points.group("center")][..., 0]


def cad_weight_matrix(points):
    """Weights ``(n_points, 4)`` turning a cell's point values into its four quadrant decompositions.

    Quadrant ``q`` of a source cell is averaged from its own boundary lines
    (Gauss rule, weights ``omega_x``/``omega_y`` per side) and its internal
    nodes; the weights are exact for polynomials of degree ``<= k``.
    """
    cad = points.cad
    n = points.n_half
    m = 2 * n
    w = gauss_nodes(n)[1]
    out = np.zeros((points.n_points, 4))
    v0 = points.group("vlines").start
    h0 = points.group("hlines").start
    i0 = points.group("internal").start
    for q, (cx, cy) in enumerate(QUADRANT_CENTERS):
        west = 0 if cx < 0 else 1
        south = 0 if cy < 0 else 1
        ys = 0 if cy < 0 else n
        xs = 0 if cx < 0 else n
        for line in (west, west + 1):
            out[v0 + line * m + ys: v0 + line * m + ys + n, q] += cad.omega_x * w
        for line in (south, south + 1):
            out[h0 + line * m + xs: h0 + line * m + xs + n, q] += cad.omega_y * w
        if cad.n_internal:
            out[i0 + q * cad.n_internal: i0 + (q + 1) * cad.n_internal, q] += cad.internal_weights
    return out


def modified_tilde_average(values, points, weights=None):
    """Decomposition average of the source point values over every target cell.

    Each source cell contributes its four quadrant decompositions, each
    built only from that cell's own (limited) values; the target average is
    the mean of the four quadrants it overlaps.  Returns ``(C, nx-1, ny-1)``.
    """
    if weights is None:
        weights = cad_weight_matrix(points)
    quads = values @ weights
    return 0.25 * (quads[..., :-1, :-1, NE] + quads[..., 1:, :-1, NW]
                   + quads[..., :-1, 1:, SE] + quads[..., 1:, 1:, SW])


def overlap_transfer(source_r, transfer):
    """Exact L2 transfer of the source polynomials onto the target cells."""
    return (source_r[..., :-1, :-1, :] @ transfer[SW] + source_r[..., 1:, :-1, :] @ transfer[SE]
            + source_r[..., :-1, 1:, :] @ transfer[NW] + source_r[..., 1:, 1:, :] @ transfer[NE])


# ---------------------------------------------------------------------------
# wave speeds and time step

def pair_wave_speeds(values, points, gamma, lines=None):
    """Largest alpha_1 / alpha_2 over opposite-edge node pairs of every target cell."""
    v, h = lines if lines is not None else (vertical_lines(values, points), horizontal_lines(values, points))
    return (max_pair_wave_speed(v[:, 1:], v[:, :-1], 1, gamma),
            max_pair_wave_speed(h[:, :, 1:], h[:, :, :-1], 2, gamma))


def limited_values(disc, state, layout):
    """Point values after the positivity limiter on both meshes (no damping)."""
    out = []
    for ms in (state.primal, state.dual):
        raw = evaluate(ms, layout)
        if disc.options.limiter_enabled:
            out.append(pp_limit_point_set(raw, composed_average(ms), disc.gamma))
        else:
            out.append(_unlimited(raw))
    return out


def _unlimited(raw):
    from .limiters import LimitedPointSet

    ones = np.ones(raw.shape[1:-1])
    return LimitedPointSet(raw, ones, ones.copy())


def compute_dt(alpha_hat, mesh, k, cad_variant, nu, theta_cap, remaining=math.inf, pp_bound=True):
    """Time step from the wave-speed estimates.

    ``tau_max = nu / S`` with ``S = a1/dx + a2/dy``; the step is the smallest
    of ``tau_max``, the positivity bound ``theta_cap * omega_star / (2 S)``
    and the time left.  ``theta = dt / tau_max``.  The blend weight used in
    the update, ``theta_update``, is raised to ``2 dt S / omega_star`` when
    needed so that ``dt S <= theta_update * omega_star / 2`` always holds.
    """
    a1, a2 = alpha_hat
    r1, r2 = a1 / mesh.dx, a2 / mesh.dy
    s = r1 + r2
    if not (s > 0) or not (remaining > 0):
        raise StagnationError("zero wave speed or no time left: cannot choose a time step")
    cad = cad_layout(k, cad_variant, max(r1, 1e-300), max(r2, 1e-300))
    tau_max = nu / s
    candidates = [tau_max, remaining]
    if pp_bound:
        candidates.append(theta_cap * cad.omega_star / 2.0 / s)
    dt = min(candidates)
    theta = dt / tau_max
    theta_update = min(theta_cap, max(theta, 2.0 * dt * s / cad.omega_star)) if pp_bound else min(theta, 1.0)
    return TimeStepInfo(dt, theta, tau_max, (a1, a2), cad.omega_star, theta_update, cad)


def estimate_step(disc, state, remaining, boost=1.0):
    """Pre-step wave-speed estimate (limited values, no damping) and time step."""
    opts = disc.options
    layout = disc.main_layout  # edge-line nodes do not depend on the decomposition
    lim_p, lim_d = limited_values(disc, state, layout)
    a_p = pair_wave_speeds(lim_d.values, layout.points, disc.gamma)  # primal targets
    a_d = pair_wave_speeds(lim_p.values, layout.points, disc.gamma)
    alpha = (opts.alpha_headroom * boost * max(a_p[0], a_d[0]),
             opts.alpha_headroom * boost * max(a_p[1], a_d[1]))
    return compute_dt(alpha, disc.mesh, disc.k, opts.cad_variant, opts.cfl_nu, opts.theta_cap,
                      remaining, opts.pp_bound)


# ---------------------------------------------------------------------------
# one forward-Euler stage

def cdg_rhs_R(disc, target_r, source_r, r_tilde, f1_t, f2_t, f1_v, f2_h, theta, dt):
    """Increment of the target R moments over one forward-Euler stage.

    ``f1_t``/``f2_t`` are the source fluxes at the target's tensor nodes,
    ``f1_v`` the x-flux on the target's vertical edges and ``f2_h`` the
    y-flux on its horizontal edges.  Moments of degree >= 1 are pulled toward
    the exact overlap transfer; the zeroth moment toward ``r_tilde``.
    """
    sf = disc.surface
    flux = f1_t @ disc.volume_x + f2_t @ disc.volume_y
    flux -= f1_v[:, 1:] @ sf["right"] - f1_v[:, :-1] @ sf["left"]
    flux -= f2_h[:, :, 1:] @ sf["top"] - f2_h[:, :, :-1] @ sf["bottom"]
    incr = theta * (overlap_transfer(source_r, disc.transfer) - target_r) + dt * flux
    incr[..., 0] = theta * (r_tilde - target_r[..., 0]) + dt * flux[..., 0]
    return incr


def _electric_field_centers(u):
    return (u[BX] * u[MY] - u[BY] * u[MX]) / u[RHO]


def _advance_target(disc, target, source_r, lim_values, lines, layout, dt, theta):
    """New R, aux, edges and the field increment of every target cell from the source values."""
    pts = layout.points
    gamma = disc.gamma
    gathered = gather_tensor(lim_values[..., pts.group("tensor")], pts)
    lines_v, lines_h = lines
    f1_t, f2_t, g_t = r_fluxes_and_efield(gathered, gamma)
    f1_v, _, g_v = r_fluxes_and_efield(lines_v, gamma)
    _, f2_h, g_h = r_fluxes_and_efield(lines_h, gamma)
    g_c = _electric_field_centers(centers(lim_values, pts))

    r_tilde_full = modified_tilde_average(lim_values, pts, layout.cad_weights)
    r_tilde = r_tilde_full[R_INDEX]
    b_tilde = r_tilde_full[[BX, BY]]

    target_r = target["R"]
    new_r = target_r + cdg_rhs_R(disc, target_r, source_r, r_tilde, f1_t, f2_t, f1_v, f2_h, theta, dt)

    aux = target["aux"]
    w = disc.half_weights
    new_aux = aux + theta * (b_tilde - aux)
    new_aux[0] -= dt / disc.mesh.dy * ((g_h[:, 1:] - g_h[:, :-1]) @ w)
    new_aux[1] += dt / disc.mesh.dx * ((g_v[1:] - g_v[:-1]) @ w)

    edges = target["edges"]
    new_v = evolve_edge_normals(edges.vertical, lines_v[BX], g_v, g_c[:, :-1], g_c[:, 1:], dt, theta, disc.mesh.dy)
    new_h = evolve_edge_normals(edges.horizontal, lines_h[BY], g_h, g_c[:-1], g_c[1:], dt, theta, -disc.mesh.dx)
    new_edges = EdgeNormalField(new_v, new_h)

    ind = disc.induction
    inc_b1 = dt * (g_t @ ind["b1_volume"] - (g_h[:, 1:] @ ind["b1_top"] - g_h[:, :-1] @ ind["b1_bottom"]))
    inc_b2 = -dt * (g_t @ ind["b2_volume"] - (g_v[1:] @ ind["b2_right"] - g_v[:-1] @ ind["b2_left"]))
    field_increment = (inc_b1 @ disc.tensor_b1, inc_b2 @ disc.tensor_b2)
    return new_r, new_aux, new_edges, field_increment


def euler_stage(disc, state, step_info, report=None, audit=True):
    """Forward-Euler stage on both meshes; returns a new :class:`SolverState`."""
    opts = disc.options
    dt, theta = step_info.dt, step_info.theta_update
    layout = disc.layout(step_info.cad)
    pts = layout.points
    primal, dual = state.primal, state.dual

    # undamped values at the tensor nodes: damping indicator and field blending
    tv_p = disc.evaluate_tensor(primal)
    tv_d = disc.evaluate_tensor(dual)
    if opts.cos_enabled:
        avg_p = disc.real_primal(composed_average(primal))
        avg_d = composed_average(dual)
        psi_p = cos_indicator(disc.real_primal(tv_p), gather_tensor(tv_d, pts), disc.tensor_weights, avg_p, disc.gamma)
        psi_d = cos_indicator(tv_d, gather_tensor(tv_p, pts), disc.tensor_weights, avg_d, disc.gamma)
        h = disc.mesh.h
        r_p = primal.R.copy()
        r_p[:, 1:-1, 1:-1] = cos_damp(primal.R[:, 1:-1, 1:-1], disc.degrees, psi_p, dt, h, opts.cos_c)
        primal = MeshState(r_p, primal.field, primal.edges, primal.aux)
        dual = MeshState(cos_damp(dual.R, disc.degrees, psi_d, dt, h, opts.cos_c), dual.field, dual.edges, dual.aux)
        disc.fill_ghosts(primal, r_only=True)
        disc.sync_periodic(dual, r_only=True)

    raw_p = evaluate(primal, layout)
    raw_d = evaluate(dual, layout)
    if opts.limiter_enabled:
        lim_p = pp_limit_point_set(raw_p, composed_average(primal), disc.gamma)
        lim_d = pp_limit_point_set(raw_d, composed_average(dual), disc.gamma)
    else:
        lim_p, lim_d = _unlimited(raw_p), _unlimited(raw_d)

    # stage wave speeds must respect the bound the step was chosen with
    lines_p = (vertical_lines(lim_d.values, pts), horizontal_lines(lim_d.values, pts))  # primal targets
    lines_d = (vertical_lines(lim_p.values, pts), horizontal_lines(lim_p.values, pts))
    a_p = pair_wave_speeds(None, pts, disc.gamma, lines_p)
    a_d = pair_wave_speeds(None, pts, disc.gamma, lines_d)
    a1, a2 = max(a_p[0], a_d[0]), max(a_p[1], a_d[1])
    if opts.pp_bound:
        cad = step_info.cad
        lim1 = theta * cad.omega_x / 2.0 * disc.mesh.dx / dt
        lim2 = theta * cad.omega_y / 2.0 * disc.mesh.dy / dt
        ratio = max(a1 / lim1, a2 / lim2)
        if ratio > 1.0 + 1e-12:
            raise StepRejected(ratio)

    target_p = {"R": primal.R[:, 1:-1, 1:-1], "aux": primal.aux[:, 1:-1, 1:-1], "edges": primal.edges}
    target_d = {"R": dual.R, "aux": dual.aux, "edges": dual.edges}
    new_rp, new_ap, new_ep, inc_p = _advance_target(disc, target_p, dual.R, lim_d.values, lines_p, layout, dt, theta)
    new_rd, new_ad, new_ed, inc_d = _advance_target(disc, target_d, primal.R, lim_p.values, lines_d, layout, dt, theta)

    # divergence-free reconstruction toward the blended field at the tensor nodes
    blend_p = _blend_target(disc.real_primal(tv_p), tv_d, theta, inc_p, pts)
    blend_d = _blend_target(tv_d, tv_p, theta, inc_d, pts)

    r_out = primal.R.copy()
    r_out[:, 1:-1, 1:-1] = new_rp
    aux_out = primal.aux.copy()
    aux_out[:, 1:-1, 1:-1] = new_ap
    out_p = MeshState(r_out, DivFreeField(np.empty_like(primal.field.b1), np.empty_like(primal.field.b2)),
                      new_ep, aux_out)
    disc.sync_periodic_primal_edges(out_p)
    fp = reconstruct_df_cell_field(out_p.edges, *blend_p, disc.df_ops, opts.df_tolerance)
    out_p.field.b1[1:-1, 1:-1] = fp.b1
    out_p.field.b2[1:-1, 1:-1] = fp.b2
    disc.fill_ghosts(out_p)

    out_d = MeshState(new_rd, DivFreeField(None, None), close_outer_loops(new_ed, disc.mesh.dx, disc.mesh.dy,
                                                                           disc.periodic), new_ad)
    out_d.field = reconstruct_df_cell_field(out_d.edges, *blend_d, disc.df_ops, opts.df_tolerance)
    disc.sync_periodic(out_d)

    new_state = SolverState(out_p, out_d, state.t, state.step)
    if report is not None:
        for lim in (lim_p, lim_d):
            report.min_rho = min(report.min_rho, lim.min_rho)
            report.min_energy = min(report.min_energy, lim.min_energy)
            report.limiter_active |= not lim.inactive
        report.alpha = (max(report.alpha[0], a1), max(report.alpha[1], a2))
    if audit:
        audit_state(disc, new_state, report, step=state.step)
    return new_state


def _blend_target(own, other, theta, increment, points):
    """Field values the reconstruction is fitted to: the blended old fields plus the induction increment.

    ``own``/``other`` are tensor-node values of the target and source meshes."""
    return (theta * gather_tensor(other[BX], points) + (1.0 - theta) * own[BX] + increment[0],
            theta * gather_tensor(other[BY], points) + (1.0 - theta) * own[BY] + increment[1])


# ---------------------------------------------------------------------------
# audits and diagnostics

def audit_state(disc, state, report=None, step=None):
    """Raise :class:`StructuralError` unless averages are admissible and B is divergence free."""
    for name, ms, view in (("primal", state.primal, disc.real_primal), ("dual", state.dual, lambda a: a)):
        avg = view(composed_average(ms))
        rho = avg[RHO]
        bad = ~(rho > 0)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise StructuralError(f"non-positive density average {rho[idx]:.3e}", cell=(name,) + idx, step=step)
        energy = _internal_energy(avg)
        bad = ~(energy > 0)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise StructuralError(f"non-positive internal energy average {energy[idx]:.3e}",
                                  cell=(name,) + idx, step=step)
    max_div, max_jump, scale = divergence_diagnostics(disc, state)
    tol = disc.options.df_tolerance * scale
    if max_div > tol or max_jump > tol:
        raise StructuralError(f"divergence audit failed: div={max_div:.3e} jump={max_jump:.3e}", step=step)
    if report is not None:
        report.max_div = max(report.max_div, max_div)
        report.max_jump = max(report.max_jump, max_jump)


def divergence_diagnostics(disc, state):
    """(max |div B|, max normal mismatch, field scale) over both meshes."""
    p = state.primal
    fp = DivFreeField(p.field.b1[1:-1, 1:-1], p.field.b2[1:-1, 1:-1])
    dp = divergence_audit(fp, p.edges, disc.df_ops, disc.periodic)
    dd = divergence_audit(state.dual.field, state.dual.edges, disc.df_ops, (False, False))
    scale = max(1.0, float(np.max(np.abs(fp.b1[..., 0]))), float(np.max(np.abs(fp.b2[..., 0]))),
                float(np.max(np.abs(state.dual.field.b1[..., 0]))), float(np.max(np.abs(state.dual.field.b2[..., 0]))))
    return max(dp[0], dd[0]), max(dp[1], dd[1]), scale


def totals(disc, state):
    """Domain integrals of the R components and aux (B1, B2), averaged over both meshes."""
    area = disc.mesh.dx * disc.mesh.dy
    p = disc.real_primal(composed_average(state.primal))
    d = disc.unique_dual(composed_average(state.dual))
    return 0.5 * area * (p.sum(axis=(1, 2)) + d.sum(axis=(1, 2)))


# ---------------------------------------------------------------------------
# time stepping

SSP_RK3 = ((1.0, 0.0), (0.75, 0.25), (1.0 / 3.0, 2.0 / 3.0))


def ssp_rk3_step(disc, state, step_info, report=None, audit=True):
    """Three forward-Euler stages combined as u1 = L(u0); u2 = 3/4 u0 + 1/4 L(u1); u3 = 1/3 u0 + 2/3 L(u2)."""
    u0 = state
    stage = euler_stage(disc, u0, step_info, report, audit)
    u = stage
    for a, b in SSP_RK3[1:]:
        stage = euler_stage(disc, u, step_info, report, audit)
        u = SolverState(u0.primal.combine(a, stage.primal, b), u0.dual.combine(a, stage.dual, b))
        disc.fill_ghosts(u.primal)
    u.t = state.t + step_info.dt
    u.step = state.step + 1
    if audit:
        audit_state(disc, u, report, step=u.step)
    return u


def advance(disc, state, t_end, max_retries=6, on_step=None):
    """Integrate to ``t_end``; ``on_step(state, step_info, report)`` is called after each step."""
    opts = disc.options
    while state.t < t_end * (1 - 1e-14):
        boost = 1.0
        for _ in range(max_retries):
            info = estimate_step(disc, state, t_end - state.t, boost)
            report = StageReport()
            audit = opts.audit_every <= 1 or (state.step + 1) % opts.audit_every == 0
            try:
                new = ssp_rk3_step(disc, state, info, report, audit)
                break
            except StepRejected as exc:
                boost *= exc.ratio * 1.05
        else:
            raise StagnationError("step rejected repeatedly by the wave-speed bound", step=state.step)
        state = new
        if t_end - state.t < 1e-14 * max(1.0, t_end):
            state.t = t_end
        if on_step is not None:
            on_step(state, info, report)
    return state


def run_problem(problem, nx=None, ny=None, options=None, t_end=None, on_step=None):
    disc = Discretization(problem, nx, ny, options)
    state = initial_state(disc)
    state = advance(disc, state, problem.t_end if t_end is None else t_end, on_step=on_step)
    return disc, state


def cell_center_primitives(disc, state):
    """Primitive variables at the primal cell centres, shape (8, nx, ny).

    B1, B2 are the divergence-free field values at the centre."""
    from .physics import _cons_to_prim

    k = disc.k
    zero = np.zeros(1)
    p = state.primal
    r = disc.real_primal(p.R) @ modal_values(k, zero, zero)
    u = np.empty((8,) + r.shape[1:3])
    u[R_INDEX] = r[..., 0]
    u[BX] = (p.field.b1[1:-1, 1:-1] @ tensor_values(k + 1, k, zero, zero))[..., 0]
    u[BY] = (p.field.b2[1:-1, 1:-1] @ tensor_values(k, k + 1, zero, zero))[..., 0]
    return _cons_to_prim(u, disc.gamma)


def cell_average_conserved(disc, state):
    """Composed cell averages of the primal mesh (R average with the DF field average)."""
    p = state.primal
    u = np.empty((8, disc.mesh.nx, disc.mesh.ny))
    u[R_INDEX] = disc.real_primal(p.R)[..., 0]
    u[BX] = p.field.b1[1:-1, 1:-1, 0]
    u[BY] = p.field.b2[1:-1, 1:-1, 0]
    return u
