"""Pointwise ideal-MHD state algebra.

All functions take arrays whose *leading* axis holds the 8 conserved
components ``(rho, m1, m2, m3, B1, B2, B3, E)`` (or the primitive
``(rho, u1, u2, u3, B1, B2, B3, p)``); any trailing shape is allowed and is
broadcast through.  The public functions validate their inputs; the
underscore helpers skip validation and are what the solver calls in its
inner loops.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InadmissibleStateError

RHO, MX, MY, MZ, BX, BY, BZ, EN = range(8)
# components of the non-magnetic-normal subsystem, in storage order
R_COMPONENTS = (RHO, MX, MY, MZ, BZ, EN)


@dataclass(frozen=True)
class ConservedState:
    rho: float
    m: tuple
    B: tuple
    E: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise DomainError("conserved state has non-finite entries")

    def as_array(self):
        return np.array([self.rho, *self.m, *self.B, self.E], dtype=float)

    @classmethod
    def from_array(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), tuple(map(float, u[1:4])), tuple(map(float, u[4:7])), float(u[7]))


@dataclass(frozen=True)
class PrimitiveState:
    rho: float
    u: tuple
    B: tuple
    p: float

    def as_array(self):
        return np.array([self.rho, *self.u, *self.B, self.p], dtype=float)

    @classmethod
    def from_array(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), tuple(map(float, v[1:4])), tuple(map(float, v[4:7])), float(v[7]))


@dataclass(frozen=True)
class GqlDirection:
    """Free auxiliary velocity/magnetic vectors of the linearised admissibility test."""

    u_star: tuple = (0.0, 0.0, 0.0)
    B_star: tuple = (0.0, 0.0, 0.0)


def _as_states(u):
    u = np.asarray(u, dtype=float)
    if u.shape[0] != 8:
        raise ValueError(f"expected leading axis of length 8, got shape {u.shape}")
    return u


def _require_positive_density(rho):
    if np.any(~(rho > 0)):
        raise DomainError(f"density must be positive (min {np.min(rho)!r})")


def _internal_energy(u):
    rho = u[RHO]
    kinetic = (u[MX] ** 2 + u[MY] ** 2 + u[MZ] ** 2) / rho
    magnetic = u[BX] ** 2 + u[BY] ** 2 + u[BZ] ** 2
    return u[EN] - 0.5 * (kinetic + magnetic)


def _require_admissible(u):
    rho = u[RHO]
    if np.any(~(rho > 0)):
        raise InadmissibleStateError("density", float(np.min(rho)))
    eint = _internal_energy(u)
    if np.any(~(eint > 0)):
        raise InadmissibleStateError("internal_energy", float(np.min(eint)))


def prim_to_cons(v, gamma):
    """Primitive (rho, u, B, p) to conserved (rho, m, B, E)."""
    v = _as_states(v)
    _require_positive_density(v[RHO])
    return _prim_to_cons(v, gamma)


def _prim_to_cons(v, gamma):
    u = np.empty_like(v)
    rho = v[RHO]
    u[RHO] = rho
    u[MX:MZ + 1] = rho * v[MX:MZ + 1]
    u[BX:BZ + 1] = v[BX:BZ + 1]
    kinetic = 0.5 * rho * (v[MX] ** 2 + v[MY] ** 2 + v[MZ] ** 2)
    magnetic = 0.5 * (v[BX] ** 2 + v[BY] ** 2 + v[BZ] ** 2)
    u[EN] = v[EN] / (gamma - 1.0) + kinetic + magnetic
    return u


def cons_to_prim(u, gamma):
    """Conserved to primitive; raises InadmissibleStateError outside the admissible set."""
    u = _as_states(u)
    _require_admissible(u)
    return _cons_to_prim(u, gamma)


def _cons_to_prim(u, gamma):
    v = np.empty_like(u)
    rho = u[RHO]
    v[RHO] = rho
    v[MX:MZ + 1] = u[MX:MZ + 1] / rho
    v[BX:BZ + 1] = u[BX:BZ + 1]
    v[EN] = (gamma - 1.0) * _internal_energy(u)
    return v


def internal_energy(u):
    """rho*e = E - (|m|^2/rho + |B|^2)/2."""
    u = _as_states(u)
    if np.any(u[RHO] == 0):
        raise DomainError("internal energy undefined at zero density")
    return _internal_energy(u)


def is_admissible(u):
    """True where rho > 0 and the internal energy is > 0 (strict, no slack)."""
    u = _as_states(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_ok = u[RHO] > 0
        eint = np.where(rho_ok, _internal_energy(np.where(rho_ok, u, 1.0)), -1.0)
    return rho_ok & (eint > 0)


def pressure(u, gamma):
    return (gamma - 1.0) * internal_energy(u)


def electric_field_z(u):
    """Third component of -u x B, i.e. B1*u2 - B2*u1."""
    u = _as_states(u)
    _require_positive_density(u[RHO])
    return _electric_field_z(u)


def _electric_field_z(u):
    return (u[BX] * u[MY] - u[BY] * u[MX]) / u[RHO]


def flux(u, direction, gamma):
    """Physical flux in direction 1, 2 or 3 (all 8 components)."""
    u = _as_states(u)
    _require_positive_density(u[RHO])
    if direction not in (1, 2, 3):
        raise ValueError("direction must be 1, 2 or 3")
    return _flux(u, direction, gamma)


def _flux(u, direction, gamma):
    rho = u[RHO]
    vel = u[MX:MZ + 1] / rho
    mag = u[BX:BZ + 1]
    p = (gamma - 1.0) * _internal_energy(u)
    bsq = mag[0] ** 2 + mag[1] ** 2 + mag[2] ** 2
    ptot = p + 0.5 * bsq
    d = direction - 1
    un, bn = vel[d], mag[d]
    f = np.empty_like(u)
    f[RHO] = u[MX + d]
    f[MX:MZ + 1] = u[MX + d] * vel - bn * mag
    f[MX + d] += ptot
    f[BX:BZ + 1] = un * mag - bn * vel
    f[EN] = un * (u[EN] + ptot) - bn * (vel[0] * mag[0] + vel[1] * mag[1] + vel[2] * mag[2])
    return f


def _r_fluxes_and_efield(u, gamma):
    """Fluxes of the six R components in x and y plus the electric field G.

    Returns ``(f1, f2, g)`` with ``f1``/``f2`` of leading length 6 in
    ``R_COMPONENTS`` order.  Shared work is computed once; this is the hot
    path of the solver.
    """
    rho = u[RHO]
    inv_rho = 1.0 / rho
    ux, uy, uz = u[MX] * inv_rho, u[MY] * inv_rho, u[MZ] * inv_rho
    bx, by, bz = u[BX], u[BY], u[BZ]
    bsq = bx * bx + by * by + bz * bz
    kinetic = 0.5 * (u[MX] * ux + u[MY] * uy + u[MZ] * uz)
    p = (gamma - 1.0) * (u[EN] - kinetic - 0.5 * bsq)
    ptot = p + 0.5 * bsq
    udotb = ux * bx + uy * by + uz * bz
    e_plus = u[EN] + ptot
    shape = (6,) + rho.shape
    f1 = np.empty(shape)
    f2 = np.empty(shape)
    f1[0] = u[MX]
    f1[1] = u[MX] * ux - bx * bx + ptot
    f1[2] = u[MX] * uy - bx * by
    f1[3] = u[MX] * uz - bx * bz
    f1[4] = ux * bz - bx * uz
    f1[5] = ux * e_plus - bx * udotb
    f2[0] = u[MY]
    f2[1] = f1[2]
    f2[2] = u[MY] * uy - by * by + ptot
    f2[3] = u[MY] * uz - by * bz
    f2[4] = uy * bz - by * uz
    f2[5] = uy * e_plus - by * udotb
    g = bx * uy - by * ux
    return f1, f2, g


def gql_dot(u, direction=None, u_star=None, B_star=None):
    """Return ``(U . n1, U . n* + |B*|^2 / 2)``.

    The auxiliary vectors come either from a :class:`GqlDirection` or from
    the explicit ``u_star``/``B_star`` arrays (leading axis 3, broadcast
    against the trailing shape of ``u``).
    """
    u = _as_states(u)
    if direction is not None:
        u_star, B_star = direction.u_star, direction.B_star
    us = np.zeros(3) if u_star is None else np.asarray(u_star, dtype=float)
    bs = np.zeros(3) if B_star is None else np.asarray(B_star, dtype=float)
    us_sq = us[0] ** 2 + us[1] ** 2 + us[2] ** 2
    bs_sq = bs[0] ** 2 + bs[1] ** 2 + bs[2] ** 2
    second = (
        0.5 * us_sq * u[RHO]
        - (us[0] * u[MX] + us[1] * u[MY] + us[2] * u[MZ])
        - (bs[0] * u[BX] + bs[1] * u[BY] + bs[2] * u[BZ])
        + u[EN]
        + 0.5 * bs_sq
    )
    return u[RHO], second


def entropy_value(u, gamma):
    """g(U) = -rho log(p rho^-gamma)."""
    u = _as_states(u)
    _require_admissible(u)
    rho = u[RHO]
    p = (gamma - 1.0) * _internal_energy(u)
    return -rho * (np.log(p) - gamma * np.log(rho))


def entropy_gradient(u, gamma):
    """Entropy variables dg/dU."""
    u = _as_states(u)
    _require_admissible(u)
    rho = u[RHO]
    p = (gamma - 1.0) * _internal_energy(u)
    a = _pressure_direction(u)
    w = -((gamma - 1.0) * rho / p) * a
    w[RHO] += gamma + gamma * np.log(rho) - np.log(p)
    return w


def _pressure_direction(u):
    """(|u|^2/2, -u, -B, 1): the gradient of p divided by gamma-1."""
    rho = u[RHO]
    a = np.empty_like(u)
    a[MX:MZ + 1] = -u[MX:MZ + 1] / rho
    a[RHO] = 0.5 * (a[MX] ** 2 + a[MY] ** 2 + a[MZ] ** 2)
    a[BX:BZ + 1] = -u[BX:BZ + 1]
    a[EN] = 1.0
    return a


def entropy_hessian(u, gamma):
    """Analytic Hessian of g; returns shape ``(..., 8, 8)`` for ``u`` of shape ``(8, ...)``."""
    u = _as_states(u)
    _require_admissible(u)
    return _entropy_hessian(u, gamma)


def _entropy_hessian(u, gamma):
    q = gamma - 1.0
    rho = u[RHO]
    p = q * _internal_energy(u)
    a = np.moveaxis(_pressure_direction(u), 0, -1)
    vel = np.moveaxis(u[MX:MZ + 1] / rho, 0, -1)
    rho_ = rho[..., None, None]
    p_ = p[..., None, None]
    h = (q * q) * rho_ / (p_ * p_) * (a[..., :, None] * a[..., None, :])
    cross = (q / p)[..., None] * a
    h[..., RHO, :] -= cross
    h[..., :, RHO] -= cross
    h[..., RHO, RHO] += gamma / rho
    # -(q rho / p) times the Jacobian of the pressure direction
    s = q * rho / p
    usq = np.sum(vel * vel, axis=-1)
    h[..., RHO, RHO] += s * usq / rho
    for i in range(3):
        h[..., RHO, MX + i] -= s * vel[..., i] / rho
        h[..., MX + i, RHO] -= s * vel[..., i] / rho
        h[..., MX + i, MX + i] += s / rho
        h[..., BX + i, BX + i] += s
    return h


def _entropy_quadratic_form(u, delta, gamma):
    """delta^T H(u) delta without forming H; ``delta`` broadcasts against ``u``."""
    q = gamma - 1.0
    rho = u[RHO]
    p = q * _internal_energy(u)
    vel = u[MX:MZ + 1] / rho
    adot = (0.5 * (vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2) * delta[RHO]
            - (vel[0] * delta[MX] + vel[1] * delta[MY] + vel[2] * delta[MZ])
            - (u[BX] * delta[BX] + u[BY] * delta[BY] + u[BZ] * delta[BZ]) + delta[EN])
    dm = delta[MX:MZ + 1] - vel * delta[RHO]
    s = q * rho / p
    return (s * q / p * adot * adot - 2.0 * (q / p) * delta[RHO] * adot + gamma * delta[RHO] ** 2 / rho
            + s * ((dm[0] ** 2 + dm[1] ** 2 + dm[2] ** 2) / rho
                   + delta[BX] ** 2 + delta[BY] ** 2 + delta[BZ] ** 2))


def fast_speed_bound(u, direction, gamma):
    """|u_l| + C_l, the one-state wave-speed bound used in the pair estimate."""
    u = _as_states(u)
    _require_admissible(u)
    speed, _ = _speed_parts(u, direction, gamma)
    return speed


def _speed_parts(u, direction, gamma):
    d = direction - 1
    rho = u[RHO]
    un = u[MX + d] / rho
    bsq = u[BX] ** 2 + u[BY] ** 2 + u[BZ] ** 2
    cs2 = 0.5 * (gamma - 1.0) * (gamma - 1.0) * _internal_energy(u) / rho
    a2 = cs2 + bsq / rho
    disc = np.maximum(a2 * a2 - 4.0 * cs2 * u[BX + d] ** 2 / rho, 0.0)
    c = np.sqrt(0.5 * (a2 + np.sqrt(disc)))
    return np.abs(un) + c, (un, c)


def max_wave_speed_pair(u, v, direction, gamma):
    """Pairwise wave-speed bound alpha_l(U, V) of the flux inequalities."""
    u = _as_states(u)
    v = _as_states(v)
    _require_admissible(u)
    _require_admissible(v)
    return _max_wave_speed_pair(u, v, direction, gamma)


def _max_wave_speed_pair(u, v, direction, gamma):
    s_u, (un_u, c_u) = _speed_parts(u, direction, gamma)
    s_v, (un_v, c_v) = _speed_parts(v, direction, gamma)
    sqrt_u = np.sqrt(u[RHO])
    sqrt_v = np.sqrt(v[RHO])
    denom = sqrt_u + sqrt_v
    roe = (sqrt_u * un_u + sqrt_v * un_v) / denom + np.maximum(c_u, c_v)
    db = np.sqrt((u[BX] - v[BX]) ** 2 + (u[BY] - v[BY]) ** 2 + (u[BZ] - v[BZ]) ** 2)
    return np.maximum(np.maximum(s_u, s_v), roe) + db / denom
