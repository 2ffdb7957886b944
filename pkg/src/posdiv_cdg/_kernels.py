"""Compiled pointwise kernels for the solver's hot loops.

Each kernel has a plain numpy twin in :mod:`posdiv_cdg.physics`; numba is
used when importable and the numpy version otherwise.  No fast-math, so the
compiled and numpy paths agree to rounding.
"""

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _flat(u):
    u = np.ascontiguousarray(u, dtype=float)
    return u.reshape(u.shape[0], -1), u.shape[1:]


if numba is not None:

    @numba.njit(cache=True)
    def _fluxes_flat(u, gamma, f1, f2, g):
        for i in range(u.shape[1]):
            rho = u[0, i]
            mx, my, mz = u[1, i], u[2, i], u[3, i]
            bx, by, bz = u[4, i], u[5, i], u[6, i]
            en = u[7, i]
            ux, uy, uz = mx / rho, my / rho, mz / rho
            bsq = bx * bx + by * by + bz * bz
            kinetic = 0.5 * (mx * ux + my * uy + mz * uz)
            ptot = (gamma - 1.0) * (en - kinetic - 0.5 * bsq) + 0.5 * bsq
            udotb = ux * bx + uy * by + uz * bz
            e_plus = en + ptot
            f1[0, i] = mx
            f1[1, i] = mx * ux - bx * bx + ptot
            f1[2, i] = mx * uy - bx * by
            f1[3, i] = mx * uz - bx * bz
            f1[4, i] = ux * bz - bx * uz
            f1[5, i] = ux * e_plus - bx * udotb
            f2[0, i] = my
            f2[1, i] = f1[2, i]
            f2[2, i] = my * uy - by * by + ptot
            f2[3, i] = my * uz - by * bz
            f2[4, i] = uy * bz - by * uz
            f2[5, i] = uy * e_plus - by * udotb
            g[i] = bx * uy - by * ux

    @numba.njit(cache=True)
    def _internal_energy_flat(u, out):
        for i in range(u.shape[1]):
            kinetic = (u[1, i] ** 2 + u[2, i] ** 2 + u[3, i] ** 2) / u[0, i]
            magnetic = u[4, i] ** 2 + u[5, i] ** 2 + u[6, i] ** 2
            out[i] = u[7, i] - 0.5 * (kinetic + magnetic)

    @numba.njit(cache=True)
    def _quadratic_form_cells(avg, delta, weights, gamma, out):
        # avg (8, C), delta (8, C, P): sum_p w_p delta^T H(avg) delta
        q = gamma - 1.0
        for c in range(avg.shape[1]):
            rho = avg[0, c]
            vx, vy, vz = avg[1, c] / rho, avg[2, c] / rho, avg[3, c] / rho
            bx, by, bz = avg[4, c], avg[5, c], avg[6, c]
            e = avg[7, c] - 0.5 * rho * (vx * vx + vy * vy + vz * vz) - 0.5 * (bx * bx + by * by + bz * bz)
            p = q * e
            s = q * rho / p
            half_v2 = 0.5 * (vx * vx + vy * vy + vz * vz)
            acc = 0.0
            for j in range(delta.shape[2]):
                dr = delta[0, c, j]
                adot = half_v2 * dr - (vx * delta[1, c, j] + vy * delta[2, c, j] + vz * delta[3, c, j]) \
                    - (bx * delta[4, c, j] + by * delta[5, c, j] + bz * delta[6, c, j]) + delta[7, c, j]
                d1 = delta[1, c, j] - vx * dr
                d2 = delta[2, c, j] - vy * dr
                d3 = delta[3, c, j] - vz * dr
                val = s * q / p * adot * adot - 2.0 * (q / p) * dr * adot + gamma * dr * dr / rho \
                    + s * ((d1 * d1 + d2 * d2 + d3 * d3) / rho
                           + delta[4, c, j] ** 2 + delta[5, c, j] ** 2 + delta[6, c, j] ** 2)
                acc += weights[j] * val
            out[c] = acc

    @numba.njit(cache=True)
    def _gather_flat(src, n, out):
        # src (C, nx, ny, m*m) -> out (C, nx-1, ny-1, m*m)
        m = 2 * n
        for c in range(out.shape[0]):
            for i in range(out.shape[1]):
                for j in range(out.shape[2]):
                    for a in range(m):
                        si = i + (a >= n)
                        sa = a + n if a < n else a - n
                        for b in range(m):
                            sj = j + (b >= n)
                            sb = b + n if b < n else b - n
                            out[c, i, j, a * m + b] = src[c, si, sj, sa * m + sb]

    @numba.njit(cache=True)
    def _speed(rho, un, bn, bsq, eint, gamma):
        cs2 = 0.5 * (gamma - 1.0) * (gamma - 1.0) * eint / rho
        a2 = cs2 + bsq / rho
        disc = a2 * a2 - 4.0 * cs2 * bn * bn / rho
        if disc < 0.0:
            disc = 0.0
        return np.sqrt(0.5 * (a2 + np.sqrt(disc)))

    @numba.njit(cache=True)
    def _max_pair_speed_flat(u, v, d, gamma):
        best = 0.0
        for i in range(u.shape[1]):
            ru, rv = u[0, i], v[0, i]
            unu, unv = u[1 + d, i] / ru, v[1 + d, i] / rv
            bsq_u = u[4, i] ** 2 + u[5, i] ** 2 + u[6, i] ** 2
            bsq_v = v[4, i] ** 2 + v[5, i] ** 2 + v[6, i] ** 2
            eu = u[7, i] - 0.5 * ((u[1, i] ** 2 + u[2, i] ** 2 + u[3, i] ** 2) / ru + bsq_u)
            ev = v[7, i] - 0.5 * ((v[1, i] ** 2 + v[2, i] ** 2 + v[3, i] ** 2) / rv + bsq_v)
            cu = _speed(ru, unu, u[4 + d, i], bsq_u, eu, gamma)
            cv = _speed(rv, unv, v[4 + d, i], bsq_v, ev, gamma)
            su, sv = np.sqrt(ru), np.sqrt(rv)
            denom = su + sv
            roe = (su * unu + sv * unv) / denom + max(cu, cv)
            db = np.sqrt((u[4, i] - v[4, i]) ** 2 + (u[5, i] - v[5, i]) ** 2 + (u[6, i] - v[6, i]) ** 2)
            val = max(max(abs(unu) + cu, abs(unv) + cv), roe) + db / denom
            if not (val <= best):  # NaN propagates
                best = val
        return best


def max_pair_wave_speed(u, v, direction, gamma):
    """max over all points of the pairwise wave-speed bound between ``u`` and ``v``."""
    if numba is None:
        from .physics import _max_wave_speed_pair

        return float(np.max(_max_wave_speed_pair(u, v, direction, gamma)))
    fu, _ = _flat(u)
    fv, _ = _flat(v)
    return float(_max_pair_speed_flat(fu, fv, direction - 1, float(gamma)))


def gather_quadrants(values, n):
    """Tensor-node values of the overlapping cells seen from each target cell.

    ``values`` has shape ``(..., nx, ny, (2n)^2)`` (a-major tensor nodes);
    target cell ``(I, J)`` takes the quadrant of each of the four source
    cells ``(I..I+1, J..J+1)`` that it overlaps.
    """
    m = 2 * n
    lead = values.shape[:-3]
    nx, ny = values.shape[-3:-1]
    values = np.asarray(values, dtype=float)
    if numba is None or values.ndim > 4:
        src = values.reshape((-1, nx, ny, m, m))
        out = np.empty((src.shape[0], nx - 1, ny - 1, m, m))
        out[..., :n, :n] = src[:, :-1, :-1, n:, n:]
        out[..., n:, :n] = src[:, 1:, :-1, :n, n:]
        out[..., :n, n:] = src[:, :-1, 1:, n:, :n]
        out[..., n:, n:] = src[:, 1:, 1:, :n, :n]
        return out.reshape(lead + (nx - 1, ny - 1, m * m))
    src = np.ascontiguousarray(values if values.ndim == 4 else values[None])
    out = np.empty((src.shape[0], nx - 1, ny - 1, m * m))
    _gather_flat(src, n, out)
    return out.reshape(lead + (nx - 1, ny - 1, m * m))


def r_fluxes_and_efield(u, gamma):
    """x/y fluxes of the six R components and G, as in :func:`physics._r_fluxes_and_efield`."""
    if numba is None:
        from .physics import _r_fluxes_and_efield

        return _r_fluxes_and_efield(u, gamma)
    flat, shape = _flat(u)
    m = flat.shape[1]
    f1 = np.empty((6, m))
    f2 = np.empty((6, m))
    g = np.empty(m)
    _fluxes_flat(flat, float(gamma), f1, f2, g)
    return f1.reshape((6,) + shape), f2.reshape((6,) + shape), g.reshape(shape)


def internal_energy(u):
    if numba is None:
        from .physics import _internal_energy

        return _internal_energy(u)
    flat, shape = _flat(u)
    out = np.empty(flat.shape[1])
    _internal_energy_flat(flat, out)
    return out.reshape(shape)


def weighted_quadratic_form(average, delta, weights, gamma):
    """Sum over the last axis of ``w * delta^T H(average) delta``; ``delta`` is (8, *cells, P)."""
    if numba is None:
        from .physics import _entropy_quadratic_form

        return _entropy_quadratic_form(average[..., None], delta, gamma) @ weights
    avg, cells = _flat(average)
    d = np.ascontiguousarray(delta, dtype=float).reshape(8, avg.shape[1], -1)
    out = np.empty(avg.shape[1])
    _quadratic_form_cells(avg, d, np.ascontiguousarray(weights, dtype=float), float(gamma), out)
    return out.reshape(cells)
