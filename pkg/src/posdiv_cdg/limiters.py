"""Point-value positivity limiter and high-moment oscillation damping.

Both act cell by cell and are vectorised over any number of leading cell
axes.  Point values are arrays ``(8, *cells, n_points)`` and cell averages
``(8, *cells)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from ._kernels import internal_energy as _fast_internal_energy, weighted_quadratic_form
from .physics import BX, BY, BZ, EN, MX, MZ, RHO, _entropy_quadratic_form, _internal_energy

FLOOR = 1e-13


@dataclass
class LimitedPointSet:
    values: np.ndarray  # (8, *cells, n_points), all admissible
    theta_rho: np.ndarray  # (*cells,)
    theta_energy: np.ndarray
    min_rho: float = None  # smallest density and internal energy over all points
    min_energy: float = None

    def __post_init__(self):
        if self.min_rho is None:
            self.min_rho = float(self.values[RHO].min())
        if self.min_energy is None:
            self.min_energy = float(_fast_internal_energy(self.values).min())

    @property
    def inactive(self):
        return bool(np.all(self.theta_rho == 1.0) and np.all(self.theta_energy == 1.0))


def _scaling(average, floor, minimum):
    """min((avg - floor) / (avg - min), 1), with 1 when nothing violates the floor
    and 0 for a degenerate denominator."""
    violated = minimum < floor
    denom = average - minimum
    safe = np.where(violated & (denom > 0), denom, 1.0)
    theta = np.where(violated, np.minimum((average - floor) / safe, 1.0), 1.0)
    return np.where(violated & ~(denom > 0), 0.0, theta)


def _with_margin(floor, average, size):
    # aim a few ulps of the node magnitudes above the floor so rounding in the
    # energy recombination cannot land below it; never more than half the gap
    return floor + np.minimum(16 * np.finfo(float).eps * size, 0.5 * (average - floor))


def pp_limit_point_set(points, average, gamma):
    """Scale point values toward the composed average until every node is admissible.

    Density is scaled first, then all conserved components for the internal
    energy.  The magnetic components B1, B2 are then restored to their
    unlimited (divergence-free) values at fixed density, velocity, B3 and
    pressure.  Cells needing no change keep their input values bit for bit;
    when no cell changes, the returned values are the input array itself.
    """
    points = np.asarray(points, dtype=float)
    average = np.asarray(average, dtype=float)
    rho_bar = average[RHO]
    if np.any(~(rho_bar > 0)):
        raise StructuralError("cell average with non-positive density reached the limiter",
                              cell=_first_bad(~(rho_bar > 0)))
    e_bar = _internal_energy(average)
    if np.any(~(e_bar > 0)):
        raise StructuralError("cell average with non-positive internal energy reached the limiter",
                              cell=_first_bad(~(e_bar > 0)))

    eps_rho = np.minimum(FLOOR, rho_bar)
    theta_rho = _scaling(rho_bar, _with_margin(eps_rho, rho_bar, rho_bar), points[RHO].min(axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        energy_raw = _fast_internal_energy(points)
    eps_e = np.minimum(FLOOR, e_bar)
    untouched = (theta_rho == 1.0) & np.all(energy_raw >= eps_e[..., None], axis=-1)
    theta_e = np.ones_like(theta_rho)
    if np.all(untouched):
        # nothing to change: hand back the input array itself
        return LimitedPointSet(points, theta_rho, theta_e, float(points[RHO].min()), float(energy_raw.min()))
    values = points.copy()

    idx = np.nonzero(~untouched)
    sub = points[(slice(None),) + idx]  # (8, n_sub, n_points)
    avg = average[(slice(None),) + idx]
    t_rho = theta_rho[idx]
    checked = sub.copy()
    checked[RHO] = (1.0 - t_rho[:, None]) * avg[RHO][:, None] + t_rho[:, None] * sub[RHO]
    e_checked = _internal_energy(checked)
    size = np.abs(sub[EN]).max(axis=-1)
    t_e = _scaling(e_bar[idx], _with_margin(eps_e[idx], e_bar[idx], size), e_checked.min(axis=-1))
    hat = (1.0 - t_e[None, :, None]) * avg[:, :, None] + t_e[None, :, None] * checked

    # primitive form, restore the divergence-free B1, B2, convert back
    # (density, momentum, B3 and internal energy are unchanged by the swap)
    out = hat.copy()
    out[BX] = sub[BX]
    out[BY] = sub[BY]
    out[EN] = _internal_energy(hat) + 0.5 * (np.sum(hat[MX:MZ + 1] ** 2, axis=0) / hat[RHO]
                                             + out[BX] ** 2 + out[BY] ** 2 + out[BZ] ** 2)
    values[(slice(None),) + idx] = out
    theta_e[idx] = t_e
    keep = untouched[..., None]
    min_rho = min(float(np.min(points[RHO], where=keep, initial=np.inf)), float(out[RHO].min()))
    min_e = min(float(np.min(energy_raw, where=keep, initial=np.inf)), float(_internal_energy(out).min()))
    return LimitedPointSet(values, theta_rho, theta_e, min_rho, min_e)


def _first_bad(mask):
    where = np.argwhere(mask)
    return tuple(int(i) for i in where[0]) if len(where) else None


def cos_indicator(own, other, weights, average, gamma, guard=1e-300):
    """Entropy-Hessian weighted mean-square jump between the two meshes' solutions.

    ``own`` and ``other`` are point values ``(8, *cells, n_points)`` at the
    tensor Gauss nodes of each cell, ``weights`` their quadrature weights.
    """
    quad = weighted_quadratic_form(average, other - own, weights, gamma)
    norm = _entropy_quadratic_form(average, average, gamma)
    return quad / (norm + guard)


def cos_damp(coeffs, degrees, indicator, dt, h, strength=1.0):
    """Multiply each moment of degree l >= 1 by exp(-(dt/h) c l psi).

    ``coeffs`` has shape ``(n_components, *cells, n_modes)``; ``degrees``
    the total degree of each mode.  The zeroth moment is never touched.
    """
    factors = np.exp(-(dt / h) * strength * indicator[..., None] * degrees)
    factors[..., 0] = 1.0
    return coeffs * factors
