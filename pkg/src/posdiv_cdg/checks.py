"""Randomised property suites behind ``posdiv check``.

Each suite draws its own samples from a seeded generator and returns a
:class:`SuiteResult`; nothing here raises on a failed property.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import legendre_values
from .divfree import EdgeNormalField, operators_for, reconstruct_df_cell_field
from .limiters import FLOOR, pp_limit_point_set
from .mesh import CUI_DING_WU, ZHANG_SHU, cad_layout, cad_quadrant_average
from .physics import (BX, EN, MX, RHO, _flux, _internal_energy, _max_wave_speed_pair, _prim_to_cons,
                      gql_dot, is_admissible)


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: int = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.failures == 0 and self.checked > 0

    def record(self, ok, note=None):
        self.checked += 1
        if not ok:
            self.failures += 1
            if note and len(self.notes) < 5:
                self.notes.append(note)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{self.name}: {status} ({self.checked - self.failures}/{self.checked})"
        return text + ("; " + "; ".join(self.notes) if self.notes else "")


def random_admissible_states(rng, n, gamma=5.0 / 3.0):
    """Conserved states with log-uniform density/pressure and O(1) velocity and field."""
    prim = np.empty((8, n))
    prim[RHO] = 10.0 ** rng.uniform(-2, 2, n)
    prim[MX:MX + 3] = rng.normal(0.0, 2.0, (3, n))
    prim[BX:BX + 3] = rng.normal(0.0, 2.0, (3, n))
    prim[EN] = 10.0 ** rng.uniform(-2, 2, n)
    return _prim_to_cons(prim, gamma)


def random_state_vectors(rng, n):
    """Arbitrary 8-vectors, about half of them outside the admissible set."""
    u = np.empty((8, n))
    u[RHO] = rng.uniform(-0.5, 2.0, n)
    u[MX:MX + 3] = rng.normal(0.0, 1.0, (3, n))
    u[BX:BX + 3] = rng.normal(0.0, 1.0, (3, n))
    safe_rho = np.where(u[RHO] > 0, u[RHO], 1.0)
    bulk = 0.5 * (np.sum(u[MX:MX + 3] ** 2, axis=0) / safe_rho + np.sum(u[BX:BX + 3] ** 2, axis=0))
    u[EN] = bulk + rng.uniform(-1.0, 1.0, n)
    return u


def gql_suite(n=1000, seed=0, n_directions=200):
    """Direct admissibility agrees with the linear form over sampled auxiliary directions."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("gql")
    states = random_state_vectors(rng, n)
    for u in states.T:
        direct = bool(is_admissible(u))
        first, _ = gql_dot(u)
        dirs_u = rng.normal(0.0, 3.0, (n_directions, 3))
        dirs_b = rng.normal(0.0, 3.0, (n_directions, 3))
        if u[RHO] > 0:
            # include the minimiser u* = m / rho, B* = B and its neighbourhood
            centre_u, centre_b = u[MX:MX + 3] / u[RHO], u[BX:BX + 3]
            grid = np.linspace(-0.5, 0.5, 5)
            offsets = np.array(np.meshgrid(grid, grid, grid, indexing="ij")).reshape(3, -1).T
            dirs_u = np.vstack((centre_u, centre_u + offsets, dirs_u, np.tile(centre_u, (len(offsets), 1))))
            dirs_b = np.vstack((centre_b, np.tile(centre_b, (len(offsets), 1)), dirs_b, centre_b + offsets))
        _, second = gql_dot(u, u_star=dirs_u.T[:, :, None], B_star=dirs_b.T[:, :, None])
        second = second.ravel() if np.ndim(second) else np.array([second])
        linear = bool(first > 0 and np.all(second > 0))
        result.record(direct == linear, f"state {np.round(u, 4).tolist()} direct={direct} linear={linear}")
    return result


def glf_suite(n_pairs=1000, n_pairs_second=200, n_directions=50, seed=1, gamma=5.0 / 3.0):
    """Both flux inequalities for random admissible pairs and auxiliary directions."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("lemma-glf")
    u = random_admissible_states(rng, n_pairs, gamma)
    v = random_admissible_states(rng, n_pairs, gamma)
    for direction in (1, 2):
        alpha = _max_wave_speed_pair(u, v, direction, gamma)
        lhs = -(_flux(u, direction, gamma)[RHO] - _flux(v, direction, gamma)[RHO])
        rhs = -alpha * (u[RHO] + v[RHO])
        for i in np.nonzero(~(lhs > rhs))[0]:
            result.record(False, f"first inequality, direction {direction}, pair {i}")
        result.checked += int(np.sum(lhs > rhs))

    u2, v2 = u[:, :n_pairs_second], v[:, :n_pairs_second]
    for direction in (1, 2):
        d = direction - 1
        alpha = _max_wave_speed_pair(u2, v2, direction, gamma)
        fu, fv = _flux(u2, direction, gamma), _flux(v2, direction, gamma)
        for _ in range(n_directions):
            us = rng.normal(0.0, 2.0, (3, 1))
            bs = rng.normal(0.0, 2.0, (3, 1))
            bs_sq = float(np.sum(bs**2))

            def dot_star(w):
                return (0.5 * float(np.sum(us**2)) * w[RHO] - np.sum(us * w[MX:MX + 3], axis=0)
                        - np.sum(bs * w[BX:BX + 3], axis=0) + w[EN])

            lhs = -(dot_star(fu) - dot_star(fv))
            rhs = (-alpha * (dot_star(u2) + dot_star(v2) + bs_sq)
                   - (u2[BX + d] - v2[BX + d]) * float(np.sum(us * bs)))
            scale = np.maximum.reduce([np.abs(lhs), np.abs(rhs), np.ones_like(lhs)])
            ok = lhs >= rhs - 1e-12 * scale
            result.checked += int(np.sum(ok))
            for i in np.nonzero(~ok)[0]:
                result.record(False, f"second inequality, direction {direction}, pair {i}")
    return result


def _random_polynomial(rng, k):
    """Random coefficients c[a, b] of sum c x^a y^b with a + b <= k."""
    return {(a, d - a): rng.normal() for d in range(k + 1) for a in range(d + 1)}


def _poly_value(coeffs, x, y):
    return sum(c * np.asarray(x, float) ** a * np.asarray(y, float) ** b for (a, b), c in coeffs.items())


def _poly_average(coeffs):
    def mono(n):
        return 0.0 if n % 2 else 1.0 / ((n + 1) * 2.0**n)
    return sum(c * mono(a) * mono(b) for (a, b), c in coeffs.items())


def cad_suite(n=100, seed=2, degrees=(1, 2, 3)):
    """Decomposition weights are nonnegative, sum to one and are exact for degree <= k."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("cad")
    for k in degrees:
        for variant in (ZHANG_SHU, CUI_DING_WU):
            for ratio in (1.0, 0.3, 3.0):
                layout = cad_layout(k, variant, ratio, 1.0)
                result.record(abs(layout.weight_total() - 1.0) <= 1e-14, f"{variant} k={k} weights sum")
                result.record(min(layout.omega_x, layout.omega_y, *layout.internal_weights) >= 0.0,
                              f"{variant} k={k} negative weight")
                for _ in range(n):
                    poly = _random_polynomial(rng, k)
                    got = cad_quadrant_average(layout, lambda x, y: _poly_value(poly, x, y))
                    want = _poly_average(poly)
                    result.record(abs(got - want) <= 1e-13 * max(1.0, abs(want)),
                                  f"{variant} k={k} ratio={ratio}: {got!r} vs {want!r}")
    return result


def random_divfree_polynomial(rng, degree=2):
    """Random stream function of degree ``degree + 1``; returns (potential, (B1, B2)) callables."""
    coeffs = _random_polynomial(rng, degree + 1)

    def potential(x, y):
        return _poly_value(coeffs, x, y)

    def field_values(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        b1 = sum(c * b * x**a * y ** (b - 1) for (a, b), c in coeffs.items() if b > 0)
        b2 = -sum(c * a * x ** (a - 1) * y**b for (a, b), c in coeffs.items() if a > 0)
        return np.broadcast_to(b1, np.broadcast(x, y).shape) + 0.0, np.broadcast_to(b2, np.broadcast(x, y).shape) + 0.0

    return potential, field_values


def edge_traces(field_values, xc, yc, dx, dy, k):
    """Legendre moments of the exact normal components on the four edges of one cell."""
    s, w = np.polynomial.legendre.leggauss(k + 4)
    s, w = s / 2.0, w / 2.0
    phi = legendre_values(k, s) * (2.0 * np.arange(k + 1) + 1.0)[:, None]
    left = phi @ (w * field_values(xc - dx / 2, yc + s * dy)[0])
    right = phi @ (w * field_values(xc + dx / 2, yc + s * dy)[0])
    bottom = phi @ (w * field_values(xc + s * dx, yc - dy / 2)[1])
    top = phi @ (w * field_values(xc + s * dx, yc + dy / 2)[1])
    return left, right, bottom, top


def divfree_suite(n=100, seed=3, k=2, degree=2):
    """Divergence-free polynomials of total degree <= ``degree`` are rebuilt exactly from edge data."""
    from .basis import tensor_values
    from .mesh import half_interval_nodes

    rng = np.random.default_rng(seed)
    result = SuiteResult("divfree")
    q, _ = half_interval_nodes(k + 1)
    m = len(q)
    xi, eta = np.repeat(q, m), np.tile(q, m)
    check_x, check_y = np.meshgrid(np.linspace(-0.5, 0.5, 7), np.linspace(-0.5, 0.5, 7), indexing="ij")
    for _ in range(n):
        dx, dy = 10.0 ** rng.uniform(-1.5, 0.0, 2)
        xc, yc = rng.uniform(-1, 1, 2)
        _, field_values = random_divfree_polynomial(rng, degree)
        left, right, bottom, top = edge_traces(field_values, xc, yc, dx, dy, k)
        edges = EdgeNormalField(np.array([[left], [right]]), np.array([[bottom, top]]))
        t1, t2 = field_values(xc + xi * dx, yc + eta * dy)
        ops = operators_for(k, dx, dy)
        rebuilt = reconstruct_df_cell_field(edges, t1[None, None], t2[None, None], ops)
        b1 = rebuilt.b1[0, 0] @ tensor_values(k + 1, k, check_x.ravel(), check_y.ravel())
        b2 = rebuilt.b2[0, 0] @ tensor_values(k, k + 1, check_x.ravel(), check_y.ravel())
        e1, e2 = field_values(xc + check_x.ravel() * dx, yc + check_y.ravel() * dy)
        scale = max(1.0, float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
        err = max(float(np.max(np.abs(b1 - e1))), float(np.max(np.abs(b2 - e2))))
        result.record(err <= 1e-12 * scale, f"reconstruction error {err:.3e} (scale {scale:.2e})")
    return result


def limiter_suite(n=200, seed=4, n_points=40, gamma=5.0 / 3.0):
    """Limited point values respect the floors; cells already admissible are untouched."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("limiter")
    for _ in range(n):
        avg = random_admissible_states(rng, 1, gamma)[:, 0]
        spread = rng.uniform(0.0, 3.0)
        points = avg[:, None] * (1.0 + spread * rng.normal(size=(8, n_points)))
        out = pp_limit_point_set(points[:, None, :], avg[:, None], gamma)
        vals = out.values[:, 0]
        eps_rho = min(FLOOR, avg[RHO])
        eps_e = min(FLOOR, _internal_energy(avg))
        result.record(bool(np.all(vals[RHO] >= eps_rho * (1 - 1e-12))), "density floor violated")
        result.record(bool(np.all(_internal_energy(vals) >= eps_e * (1 - 1e-9) - 1e-15)),
                      f"internal energy floor violated: {float(np.min(_internal_energy(vals))):.3e}")
        result.record(bool(np.array_equal(vals[BX:BX + 2], points[BX:BX + 2])), "B1/B2 were modified")
        if is_admissible(points).all() and np.all(_internal_energy(points) >= FLOOR) and np.all(points[RHO] >= FLOOR):
            result.record(bool(np.array_equal(vals, points)), "admissible cell was modified")
    return result


SUITES = {
    "gql": gql_suite,
    "lemma-glf": glf_suite,
    "cad": cad_suite,
    "divfree": divfree_suite,
    "limiter": limiter_suite,
}


def run_suites(names=None):
    names = list(SUITES) if not names or names == ["all"] else names
    return [SUITES[name]() for name in names]
