import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posdiv_cdg.errors import DomainError, InadmissibleStateError
from posdiv_cdg.physics import (
    BX, BY, EN, MX, RHO, ConservedState, GqlDirection, cons_to_prim, electric_field_z,
    entropy_gradient, entropy_hessian, entropy_value, fast_speed_bound, flux, gql_dot,
    internal_energy, is_admissible, max_wave_speed_pair, prim_to_cons, _entropy_quadratic_form,
    _r_fluxes_and_efield,
)
from posdiv_cdg import _kernels

G53 = 5.0 / 3.0


def admissible_primitive():
    pos = st.floats(1e-3, 1e3)
    vel = st.floats(-50, 50)
    mag = st.floats(-20, 20)
    return st.tuples(pos, vel, vel, vel, mag, mag, mag, pos).map(lambda t: np.array(t))


def random_primitive(rng, n):
    v = np.empty((8, n))
    v[RHO] = 10.0 ** rng.uniform(-3, 2, n)
    v[1:4] = rng.normal(0, 3, (3, n))
    v[4:7] = rng.normal(0, 3, (3, n))
    v[EN] = 10.0 ** rng.uniform(-3, 2, n)
    return v


def brute_force_flux(v, direction, gamma):
    rho, u, b, p = v[0], v[1:4], v[4:7], v[7]
    e = p / (gamma - 1) + 0.5 * rho * u @ u + 0.5 * b @ b
    ptot = p + 0.5 * b @ b
    d = direction - 1
    unit = np.eye(3)[d]
    out = np.zeros(8)
    out[0] = rho * u[d]
    out[1:4] = rho * u[d] * u - b[d] * b + ptot * unit
    out[4:7] = u[d] * b - b[d] * u
    out[7] = u[d] * (e + ptot) - b[d] * (u @ b)
    return out


class TestConversions:
    def test_static_gas_energy(self):
        assert prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, 1.0]), G53)[EN] == pytest.approx(1.5)

    def test_orszag_tang_origin_energy(self):
        u = prim_to_cons(np.array([25 / 9, 0, 0, 0, 0, 0, 0, 5 / 3]), G53)
        assert u[EN] == pytest.approx(2.5, rel=1e-15)
        assert is_admissible(u)

    def test_moving_magnetised_energy(self):
        u = prim_to_cons(np.array([1, 1, 0, 0, 0, 1, 0, 0.1]), G53)
        assert u[EN] == pytest.approx(1.15, rel=1e-14)

    def test_inverse_of_static_gas(self):
        v = cons_to_prim(np.array([1, 0, 0, 0, 0, 0, 0, 1.5]), G53)
        np.testing.assert_allclose(v, [1, 0, 0, 0, 0, 0, 0, 1.0], atol=1e-15)

    def test_pressure_subtracts_magnetic_energy(self):
        v = cons_to_prim(np.array([1, 0, 0, 0, 0, 1, 0, 1.0]), G53)
        assert v[EN] == pytest.approx(1 / 3, rel=1e-14)

    def test_negative_density_rejected(self):
        with pytest.raises(InadmissibleStateError) as info:
            cons_to_prim(np.array([-1, 0, 0, 0, 0, 0, 0, 1.0]), G53)
        assert info.value.quantity == "density"

    def test_wrong_leading_axis(self):
        with pytest.raises(ValueError):
            cons_to_prim(np.ones(7), G53)

    @settings(max_examples=200, deadline=None)
    @given(admissible_primitive())
    def test_round_trip(self, v):
        back = cons_to_prim(prim_to_cons(v, G53), G53)
        np.testing.assert_allclose(back[:7], v[:7], rtol=1e-12, atol=1e-12)
        # pressure loses relative precision when kinetic/magnetic energy dominates
        scale = v[EN] + v[RHO] * np.sum(v[1:4] ** 2) + np.sum(v[4:7] ** 2)
        assert abs(back[EN] - v[EN]) <= 1e-12 * scale

    def test_conserved_state_rejects_nan(self):
        with pytest.raises(DomainError):
            ConservedState(float("nan"), (0, 0, 0), (0, 0, 0), 1.0)

    def test_conserved_state_array_round_trip(self):
        u = np.arange(1.0, 9.0)
        np.testing.assert_array_equal(ConservedState.from_array(u).as_array(), u)


class TestInternalEnergyAndAdmissibility:
    @pytest.mark.parametrize("u, expected", [
        ([1, 0, 0, 0, 0, 1, 0, 1], 0.5),
        ([2, 2, 0, 0, 0, 0, 0, 1], 0.0),
        ([1, 0, 0, 0, 0, 0, 0, 2.5], 2.5),
    ])
    def test_values(self, u, expected):
        assert internal_energy(np.array(u, float)) == pytest.approx(expected, abs=1e-15)

    def test_zero_density_is_a_domain_error(self):
        with pytest.raises(DomainError):
            internal_energy(np.array([0, 0, 0, 0, 0, 0, 0, 1.0]))

    def test_admissibility_examples(self):
        assert not is_admissible(np.array([1, 0, 0, 0, 0, 0, 0, -0.1]))
        assert not is_admissible(np.array([-1e-16, 0, 0, 0, 0, 0, 0, 1.0]))
        assert not is_admissible(np.array([1, 0, 0, 0, 0, 0, 0, 0.0]))

    def test_vectorised_admissibility_handles_zero_density(self):
        u = np.array([[1.0, 0.0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], [1.0, 1.0]])
        np.testing.assert_array_equal(is_admissible(u), [True, False])


class TestFluxes:
    @pytest.mark.parametrize("direction", [1, 2])
    def test_static_state(self, direction):
        u = prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, 1.0]), G53)
        expected = np.zeros(8)
        expected[direction] = 1.0
        np.testing.assert_allclose(flux(u, direction, G53), expected, atol=1e-15)

    @pytest.mark.parametrize("direction", [1, 2, 3])
    def test_matches_brute_force(self, direction):
        rng = np.random.default_rng(11)
        for v in random_primitive(rng, 50).T:
            got = flux(prim_to_cons(v, G53), direction, G53)
            want = brute_force_flux(v, direction, G53)
            np.testing.assert_allclose(got, want, rtol=1e-11, atol=1e-11 * np.abs(want).max())

    def test_r_fluxes_select_the_r_components(self):
        rng = np.random.default_rng(12)
        u = prim_to_cons(random_primitive(rng, 30), G53)
        f1, f2, g = _r_fluxes_and_efield(u, G53)
        rows = [0, 1, 2, 3, 6, 7]
        np.testing.assert_allclose(f1, flux(u, 1, G53)[rows], rtol=1e-12, atol=1e-10)
        np.testing.assert_allclose(f2, flux(u, 2, G53)[rows], rtol=1e-12, atol=1e-10)
        np.testing.assert_allclose(g, electric_field_z(u), rtol=1e-12, atol=1e-12)

    def test_compiled_fluxes_agree_with_numpy(self):
        rng = np.random.default_rng(13)
        u = prim_to_cons(random_primitive(rng, 64).reshape(8, 8, 8), G53)
        for a, b in zip(_kernels.r_fluxes_and_efield(u, G53), _r_fluxes_and_efield(u, G53)):
            np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)

    def test_induction_flux_is_the_electric_field(self):
        # F1 of B2 is u1 B2 - B1 u2 = -G, F2 of B1 is u2 B1 - B2 u1 = G
        rng = np.random.default_rng(14)
        u = prim_to_cons(random_primitive(rng, 20), G53)
        g = electric_field_z(u)
        np.testing.assert_allclose(flux(u, 1, G53)[BY], -g, atol=1e-12)
        np.testing.assert_allclose(flux(u, 2, G53)[BX], g, atol=1e-12)
        np.testing.assert_allclose(flux(u, 1, G53)[BX], 0, atol=1e-12)


class TestElectricField:
    @pytest.mark.parametrize("vel, mag, expected", [
        ((1, 0, 0), (0, 1, 0), -1.0),
        ((0, 0, 0), (3, 4, 5), 0.0),
        ((0, 2, 0), (3, 0, 0), 6.0),
    ])
    def test_values(self, vel, mag, expected):
        u = prim_to_cons(np.array([1.0, *vel, *mag, 1.0]), G53)
        assert electric_field_z(u) == pytest.approx(expected)


class TestGqlForm:
    def test_zero_direction_selects_energy(self):
        u = np.array([2.0, 1, 2, 3, 4, 5, 6, 70])
        assert gql_dot(u) == (2.0, 70.0)

    def test_hand_example(self):
        u = np.array([1, 0, 0, 0, 0, 0, 0, 1.0])
        rho, second = gql_dot(u, GqlDirection(u_star=(1, 0, 0)))
        assert (rho, second) == (1.0, 1.5)

    @settings(max_examples=200, deadline=None)
    @given(admissible_primitive(), st.tuples(*[st.floats(-30, 30)] * 6))
    def test_positive_for_admissible_states(self, v, star):
        u = prim_to_cons(v, G53)
        _, second = gql_dot(u, u_star=np.array(star[:3]), B_star=np.array(star[3:]))
        # the quadratic form is minimised at u* = m/rho, B* = B where it equals rho*e
        assert second >= internal_energy(u) * (1 - 1e-9) - 1e-9 * abs(u[EN])

    def test_minimiser_value_is_internal_energy(self):
        u = prim_to_cons(np.array([2, 1, -1, 0.5, 0.3, 0.2, -0.4, 0.7]), G53)
        _, second = gql_dot(u, u_star=u[1:4] / u[0], B_star=u[4:7])
        assert second == pytest.approx(internal_energy(u), rel=1e-13)


class TestEntropy:
    def test_unit_state(self):
        assert entropy_value(prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, 1.0]), G53), G53) == pytest.approx(0, abs=1e-15)

    def test_pressure_e(self):
        u = prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, math.e]), G53)
        assert entropy_value(u, G53) == pytest.approx(-1.0, rel=1e-14)

    def test_exponent_cancellation(self):
        u = prim_to_cons(np.array([2, 0, 0, 0, 0, 0, 0, 2 ** G53]), G53)
        assert entropy_value(u, G53) == pytest.approx(0.0, abs=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        # moderate states keep the central-difference truncation error small
        for v in rng.uniform([0.5, -1, -1, -1, -1, -1, -1, 0.5], [2, 1, 1, 1, 1, 1, 1, 2], (20, 8)):
            u = prim_to_cons(v, G53)
            h = 1e-6 * np.maximum(np.abs(u), 1e-2)
            fd = np.array([(entropy_value(u + h[i] * np.eye(8)[i], G53)
                            - entropy_value(u - h[i] * np.eye(8)[i], G53)) / (2 * h[i]) for i in range(8)])
            grad = entropy_gradient(u, G53)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5 * np.abs(grad).max())

    def test_hessian_matches_finite_differences_at_rest(self):
        u = prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, 1.0]), G53)
        h = 1e-5
        fd = np.array([(entropy_gradient(u + h * e, G53) - entropy_gradient(u - h * e, G53)) / (2 * h)
                       for e in np.eye(8)])
        hess = entropy_hessian(u, G53)
        assert np.abs(hess - fd).max() <= 1e-6 * np.linalg.norm(hess)

    def test_hessian_matches_finite_differences_magnetised(self):
        u = prim_to_cons(np.array([1.3, 0.4, -0.2, 0.1, 0.7, -0.5, 0.3, 2.0]), G53)
        h = 1e-6
        fd = np.array([(entropy_gradient(u + h * e, G53) - entropy_gradient(u - h * e, G53)) / (2 * h)
                       for e in np.eye(8)])
        hess = entropy_hessian(u, G53)
        assert np.abs(hess - fd).max() <= 1e-6 * np.linalg.norm(hess)

    def test_hessian_symmetric_positive_definite(self):
        rng = np.random.default_rng(16)
        u = prim_to_cons(random_primitive(rng, 100), G53)
        hess = entropy_hessian(u, G53)
        assert np.abs(hess - np.swapaxes(hess, -1, -2)).max() <= 1e-12 * np.abs(hess).max()
        np.linalg.cholesky(hess)  # raises if any is not positive definite

    def test_quadratic_form_matches_hessian(self):
        rng = np.random.default_rng(17)
        u = prim_to_cons(random_primitive(rng, 50), G53)
        delta = rng.normal(size=(8, 50))
        direct = np.einsum("ni,nij,nj->n", delta.T, entropy_hessian(u, G53), delta.T)
        np.testing.assert_allclose(_entropy_quadratic_form(u, delta, G53), direct, rtol=1e-10)


class TestWaveSpeeds:
    def test_static_pair(self):
        u = prim_to_cons(np.array([1, 0, 0, 0, 0, 0, 0, 1.0]), G53)
        assert max_wave_speed_pair(u, u, 1, G53) == pytest.approx(1 / math.sqrt(3), rel=1e-14)

    def test_unmagnetised_equal_pair(self):
        u = prim_to_cons(np.array([2, 0.7, -0.3, 0, 0, 0, 0, 3.0]), G53)
        cs = math.sqrt((G53 - 1) ** 2 * internal_energy(u) / (2 * u[RHO]))
        assert max_wave_speed_pair(u, u, 1, G53) == pytest.approx(0.7 + cs, rel=1e-14)
        assert fast_speed_bound(u, 2, G53) == pytest.approx(0.3 + cs, rel=1e-14)

    def test_symmetry_and_compiled_kernel(self):
        rng = np.random.default_rng(18)
        u = prim_to_cons(random_primitive(rng, 100), G53)
        v = prim_to_cons(random_primitive(rng, 100), G53)
        for d in (1, 2):
            a = max_wave_speed_pair(u, v, d, G53)
            np.testing.assert_allclose(a, max_wave_speed_pair(v, u, d, G53), rtol=1e-14)
            assert _kernels.max_pair_wave_speed(u, v, d, G53) == pytest.approx(a.max(), rel=1e-14)

    def test_pair_bound_dominates_single_state_bounds(self):
        rng = np.random.default_rng(19)
        u = prim_to_cons(random_primitive(rng, 100), G53)
        v = prim_to_cons(random_primitive(rng, 100), G53)
        a = max_wave_speed_pair(u, v, 1, G53)
        assert np.all(a >= fast_speed_bound(u, 1, G53))
        assert np.all(a >= fast_speed_bound(v, 1, G53))

    def test_inadmissible_input_rejected(self):
        good = np.array([1, 0, 0, 0, 0, 0, 0, 1.0])
        bad = np.array([1, 0, 0, 0, 0, 0, 0, -1.0])
        with pytest.raises(InadmissibleStateError):
            max_wave_speed_pair(good, bad, 1, G53)


def test_magnetic_index_constants():
    assert (RHO, MX, BX, BY, EN) == (0, 1, 4, 5, 7)
