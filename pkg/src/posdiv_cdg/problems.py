"""Benchmark problems: initial data, exact solutions and boundary policies."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError

PERIODIC = "periodic"
OUTFLOW = "outflow"
INFLOW = "inflow"
INFLOW_SEGMENT = "inflow_segment"
SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class BoundaryPolicy:
    """Ghost-cell rule for one side of the domain.

    ``state`` is a primitive 8-vector for the inflow kinds; ``interval`` is
    the ``(lo, hi)`` range of the tangential coordinate covered by an inflow
    segment (outflow elsewhere on that side).
    """

    kind: str
    state: tuple = None
    interval: tuple = None

    def __post_init__(self):
        if self.kind not in (PERIODIC, OUTFLOW, INFLOW, INFLOW_SEGMENT):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")
        if self.kind in (INFLOW, INFLOW_SEGMENT) and self.state is None:
            raise ConfigError("inflow boundaries need a prescribed state")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    gamma: float
    domain: tuple
    grid: tuple
    t_end: float
    primitive: object  # (x, y) -> (8, ...) primitive field
    potential: object  # (x, y) -> stream function of (B1, B2)
    boundaries: dict
    exact: object = None  # (x, y, t) -> primitive field
    parameters: dict = field(default_factory=dict)

    @property
    def periodic(self):
        return (self.boundaries["left"].kind == PERIODIC, self.boundaries["bottom"].kind == PERIODIC)

    def magnetic(self, x, y):
        v = self.primitive(x, y)
        return v[4], v[5]


def _stack(rho, u1, u2, u3, b1, b2, b3, p, like):
    shape = np.shape(like)
    return np.array([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in (rho, u1, u2, u3, b1, b2, b3, p)])


def _periodic_all():
    return {side: BoundaryPolicy(PERIODIC) for side in SIDES}


def _outflow_all():
    return {side: BoundaryPolicy(OUTFLOW) for side in SIDES}


def _wrap(x, lo, hi):
    return lo + np.mod(np.asarray(x, dtype=float) - lo, hi - lo)


# ---------------------------------------------------------------------------

def alfven(alpha=math.pi / 4):
    ca, sa = math.cos(alpha), math.sin(alpha)
    domain = (0.0, 1.0 / ca, 0.0, 1.0 / sa)

    def exact(x, y, t):
        beta = x * ca + y * sa + t
        u_perp = 0.1 * np.sin(2 * np.pi * beta)
        u3 = 0.1 * np.cos(2 * np.pi * beta)
        return _stack(1.0, -u_perp * sa, u_perp * ca, u3, ca - u_perp * sa, sa + u_perp * ca, u3, 0.1, x)

    def potential(x, y):
        beta = x * ca + y * sa
        return y * ca - x * sa + 0.1 * np.cos(2 * np.pi * beta) / (2 * np.pi)

    return ProblemSpec("alfven", 5.0 / 3.0, domain, (40, 40), 1.0, lambda x, y: exact(x, y, 0.0),
                       potential, _periodic_all(), exact, {"alpha": alpha})


VORTEX_STRENGTH = 5.389489439


def vortex(mu=VORTEX_STRENGTH):
    domain = (-10.0, 10.0, -10.0, 10.0)
    ku = mu / (math.sqrt(2.0) * math.pi)
    kb = mu / (2.0 * math.pi)

    def profile(x, y):
        x = _wrap(x, -10.0, 10.0)
        y = _wrap(y, -10.0, 10.0)
        r2 = x * x + y * y
        g = np.exp(0.5 * (1.0 - r2))
        dp = -mu * mu * (1.0 + r2) / (8.0 * math.pi ** 2) * np.exp(1.0 - r2)
        return _stack(1.0, 1.0 - ku * g * y, 1.0 + ku * g * x, 0.0, -kb * g * y, kb * g * x, 0.0, 1.0 + dp, x)

    def exact(x, y, t):
        return profile(np.asarray(x) - t, np.asarray(y) - t)

    def potential(x, y):
        return kb * np.exp(0.5 * (1.0 - x * x - y * y))

    return ProblemSpec("vortex", 5.0 / 3.0, domain, (40, 40), 0.05, profile, potential,
                       _periodic_all(), exact, {"mu": mu})


def orszag_tang():
    gamma = 5.0 / 3.0

    def prim(x, y):
        return _stack(gamma ** 2, -np.sin(y), np.sin(x), 0.0, -np.sin(y), np.sin(2 * x), 0.0, gamma, x)

    def potential(x, y):
        return np.cos(y) + 0.5 * np.cos(2 * x)

    return ProblemSpec("orszag_tang", gamma, (0.0, 2 * math.pi, 0.0, 2 * math.pi), (64, 64), 0.5,
                       prim, potential, _periodic_all())


def rotor(r1=0.1, r2=0.115):
    b1 = 2.5 / math.sqrt(4 * math.pi)

    def prim(x, y):
        x = _wrap(x, 0.0, 1.0)
        y = _wrap(y, 0.0, 1.0)
        dx, dy = x - 0.5, y - 0.5
        r = np.sqrt(dx * dx + dy * dy)
        phi = (r2 - r) / (r2 - r1)
        inner = r <= r1
        taper = (r > r1) & (r <= r2)
        safe_r = np.where(r > 0, r, 1.0)
        rho = np.where(inner, 10.0, np.where(taper, 1.0 + 9.0 * phi, 1.0))
        u1 = np.where(inner, -dy / r1, np.where(taper, -phi * dy / safe_r, 0.0))
        u2 = np.where(inner, dx / r1, np.where(taper, phi * dx / safe_r, 0.0))
        return _stack(rho, u1, u2, 0.0, b1, 0.0, 0.0, 0.5, x)

    return ProblemSpec("rotor", 5.0 / 3.0, (0.0, 1.0, 0.0, 1.0), (100, 100), 0.295, prim,
                       lambda x, y: b1 * y, _periodic_all())


BLAST_CASES = {
    "blast_i": (100.0 / math.sqrt(4 * math.pi), 0.0, 1e3, 0.01),
    "blast_ii": (1000.0 / math.sqrt(4 * math.pi), 0.0, 1e4, 0.001),
    "blast_iii": (100.0 / math.sqrt(8 * math.pi), 100.0 / math.sqrt(8 * math.pi), 1e3, 0.01),
}


def blast(case="blast_i"):
    bx, by, p0, t_end = BLAST_CASES[case]

    def prim(x, y):
        inside = np.sqrt(x * x + y * y) <= 0.1
        return _stack(1.0, 0.0, 0.0, 0.0, bx, by, 0.0, np.where(inside, p0, 0.1), x)

    return ProblemSpec(case, 1.4, (-0.5, 0.5, -0.5, 0.5), (80, 80), t_end, prim,
                       lambda x, y: bx * y - by * x, _outflow_all(), parameters={"Bx": bx, "By": by, "p0": p0})


SHOCK_CLOUD_LEFT = (3.86859, 0.0, 0.0, 0.0, 0.0, 2.1826182, -2.1826182, 167.345)
SHOCK_CLOUD_RIGHT = (1.0, -11.2536, 0.0, 0.0, 0.0, 0.56418958, 0.56418958, 1.0)


def shock_cloud():
    left, right = np.array(SHOCK_CLOUD_LEFT), np.array(SHOCK_CLOUD_RIGHT)

    def prim(x, y):
        x = np.asarray(x, dtype=float)
        is_left = x < 0.6
        out = np.where(is_left, left.reshape((8,) + (1,) * x.ndim), right.reshape((8,) + (1,) * x.ndim))
        cloud = (x - 0.8) ** 2 + (np.asarray(y) - 0.5) ** 2 <= 0.15 ** 2
        out[0] = np.where(cloud & ~is_left, 10.0, out[0])
        return out

    def potential(x, y):
        return -np.where(x < 0.6, left[5] * x, left[5] * 0.6 + right[5] * (x - 0.6))

    bcs = _outflow_all()
    bcs["right"] = BoundaryPolicy(INFLOW, state=tuple(right))
    return ProblemSpec("shock_cloud", 5.0 / 3.0, (0.0, 1.0, 0.0, 1.0), (100, 100), 0.06, prim,
                       potential, bcs)


def jet(mach=800.0, b0=math.sqrt(200.0), gamma=1.4, name="jet_m800", t_end=0.002, grid=(100, 150)):
    ambient = (0.1 * gamma, 0.0, 0.0, 0.0, 0.0, b0, 0.0, 1.0)
    inflow = (gamma, 0.0, mach, 0.0, 0.0, b0, 0.0, 1.0)

    def prim(x, y):
        return _stack(*ambient, like=x)

    bcs = _outflow_all()
    bcs["bottom"] = BoundaryPolicy(INFLOW_SEGMENT, state=inflow, interval=(-0.05, 0.05))
    return ProblemSpec(name, gamma, (-0.5, 0.5, 0.0, 1.5), grid, t_end, prim,
                       lambda x, y: -b0 * x, bcs, parameters={"mach": mach, "B0": b0})


CATALOG = {
    "alfven": alfven,
    "vortex": vortex,
    "orszag_tang": orszag_tang,
    "rotor": rotor,
    "blast_i": lambda: blast("blast_i"),
    "blast_ii": lambda: blast("blast_ii"),
    "blast_iii": lambda: blast("blast_iii"),
    "shock_cloud": shock_cloud,
    "jet_m800": jet,
    "jet_m2000": lambda: jet(2000.0, math.sqrt(20000.0), name="jet_m2000", t_end=0.00075),
    "jet_m1e6": lambda: jet(1e6, math.sqrt(20000.0), name="jet_m1e6", t_end=1.5e-6, grid=(50, 75)),
}


def init_problem(name, mach=None, b0=None):
    """Look up a catalog problem; ``mach``/``b0`` override the jet parameters."""
    if name not in CATALOG:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}")
    spec = CATALOG[name]()
    if mach is not None or b0 is not None:
        if not name.startswith("jet"):
            raise ConfigError("problem.mach and problem.B0 apply to the jet problems only")
        p = spec.parameters
        base = jet(mach if mach is not None else p["mach"], b0 if b0 is not None else p["B0"],
                   name=name, t_end=spec.t_end, grid=spec.grid)
        spec = base
    return spec


def exact_solution(name, t):
    """Pointwise exact primitive field at time ``t`` (alfven and vortex only)."""
    if name not in ("alfven", "vortex"):
        raise ConfigError(f"no exact solution for {name!r}")
    spec = init_problem(name)
    return lambda x, y: spec.exact(x, y, t)


# ---------------------------------------------------------------------------
# ghost cells

def _inflow_values(state, gamma, n_modes, n_field):
    from .physics import R_COMPONENTS, prim_to_cons

    cons = prim_to_cons(np.asarray(state, dtype=float), gamma)
    r = np.zeros((6, n_modes))
    r[:, 0] = cons[list(R_COMPONENTS)]
    b1 = np.zeros(n_field)
    b2 = np.zeros(n_field)
    b1[0], b2[0] = state[4], state[5]
    return r, b1, b2, np.array([state[4], state[5]])


def _in_segment(centers, lo, hi, h):
    # a centre sitting on an end of the segment counts on both ends alike, so symmetric slots stay symmetric
    return np.abs(centers - 0.5 * (lo + hi)) <= 0.5 * (hi - lo) + 1e-9 * h


def fill_ghosts(primal, spec, mesh, r_only=False):
    """Fill the ghost ring of the padded primal arrays in place.

    ``primal`` needs ``R`` (6, nx+2, ny+2, modes), ``field.b1``/``field.b2``
    (nx+2, ny+2, n) and ``aux`` (2, nx+2, ny+2).  Columns are filled first
    (rows 1..ny), then full ghost rows, so corners follow the y policy.
    """
    nx, ny = mesh.nx, mesh.ny
    # views with the two cell axes leading
    views = [np.moveaxis(primal.R, 0, -2), primal.field.b1, primal.field.b2, np.moveaxis(primal.aux, 0, -1)]
    count = 1 if r_only else 4
    views = views[:count]
    inflow = {}

    def inflow_of(policy):
        if policy not in inflow:
            inflow[policy] = _inflow_values(policy.state, spec.gamma, primal.R.shape[-1], primal.field.b1.shape[-1])
        return list(inflow[policy])[:count]

    xc, yc = mesh.primal_centers()
    for side, ghost, inner, wrap in (("left", 0, 1, nx), ("right", nx + 1, nx, 1)):
        policy = spec.boundaries[side]
        for v, val in zip(views, inflow_of(policy) if policy.kind == INFLOW else [None] * count):
            rows = v[ghost, 1:ny + 1]
            if policy.kind == PERIODIC:
                rows[...] = v[wrap, 1:ny + 1]
            elif policy.kind == INFLOW:
                rows[...] = val
            else:
                rows[...] = v[inner, 1:ny + 1]
        if policy.kind == INFLOW_SEGMENT:
            lo, hi = policy.interval
            sel = np.nonzero(_in_segment(yc[1:ny + 1], lo, hi, mesh.dy))[0] + 1
            for v, val in zip(views, inflow_of(policy)):
                v[ghost, sel] = val
    for side, ghost, inner, wrap in (("bottom", 0, 1, ny), ("top", ny + 1, ny, 1)):
        policy = spec.boundaries[side]
        for v, val in zip(views, inflow_of(policy) if policy.kind == INFLOW else [None] * count):
            cols = v[:, ghost]
            if policy.kind == PERIODIC:
                cols[...] = v[:, wrap]
            elif policy.kind == INFLOW:
                cols[...] = val
            else:
                cols[...] = v[:, inner]
        if policy.kind == INFLOW_SEGMENT:
            lo, hi = policy.interval
            sel = np.nonzero(_in_segment(xc, lo, hi, mesh.dx))[0]
            for v, val in zip(views, inflow_of(policy)):
                v[sel, ghost] = val
