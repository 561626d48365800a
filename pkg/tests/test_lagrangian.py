import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varem.lagrangian import (
    ParticleState,
    evaluate,
    grad_x,
    interaction_term,
    interaction_terms,
    kinetic_term,
    legendre_transform,
    lorentz_gamma,
    momentum,
    partial_lagrangian,
    potentials,
    velocity_from_momentum,
)
from varem.trajectory import Trajectory

from conftest import random_pair

ORIGIN = np.zeros(3)


def static_partner(d):
    return Trajectory.static([d, 0, 0], -50, 50)


def state(v=(0, 0, 0), m=1.0, t=0.0, x=ORIGIN):
    return ParticleState(t, np.asarray(x, float), np.asarray(v, float), m)


def receding_case():
    return state(t=1.0), Trajectory.uniform(ORIGIN, [0.5, 0, 0], -10, 20)


def complex_step_lagrangian_gradient(v, mass, ev):
    """dL/dv from complex-step differentiation with the light-cone data frozen."""
    grad = np.empty(3)
    h = 1e-30
    for k in range(3):
        vc = v.astype(complex)
        vc[k] += 1j * h
        total = mass * (1 - np.sqrt(1 - vc @ vc))
        for sol in (ev.retarded, ev.advanced):
            D = sol.r * (1 + sol.sign * sol.n @ sol.v_dev)
            total += (1 - vc @ sol.v_dev) / (2 * D)
        grad[k] = total.imag / h
    return grad


class TestKinetic:
    def test_rest(self):
        assert kinetic_term(state()) == 0.0

    def test_three_four_five(self):
        assert kinetic_term(state([0.6, 0, 0])) == pytest.approx(0.2, abs=1e-15)

    def test_fast_heavy(self):
        mpmath.mp.dps = 40
        ref = 2 * (1 - mpmath.sqrt(1 - mpmath.mpf("0.99") ** 2))
        assert kinetic_term(state([0.99, 0, 0], m=2.0)) == pytest.approx(float(ref), rel=1e-14)
        assert float(ref) == pytest.approx(1.717866, abs=1e-6)

    def test_gamma_near_light_speed(self):
        v = np.array([1 - 1e-12, 0, 0])
        mpmath.mp.dps = 40
        ref = 1 / mpmath.sqrt(1 - mpmath.mpf(1 - 1e-12) ** 2)
        assert lorentz_gamma(v) == pytest.approx(float(ref), rel=1e-8)

    def test_momentum_inversion(self, rng):
        p = rng.normal(size=(50, 3)) * 3
        v = velocity_from_momentum(p, 1.7)
        assert np.all(np.linalg.norm(v, axis=1) < 1)
        np.testing.assert_allclose(1.7 * lorentz_gamma(v)[:, None] * v, p, rtol=1e-13)


class TestStaticPartner:
    @pytest.mark.parametrize("d, expected", [(2.0, 0.25), (0.5, 1.0)])
    def test_interaction_terms(self, d, expected):
        I_minus, I_plus, ret, adv = interaction_terms(state(), static_partner(d))
        assert I_minus == pytest.approx(expected)
        assert I_plus == pytest.approx(expected)
        assert ret.t_dev == pytest.approx(-d)
        assert adv.t_dev == pytest.approx(d)

    def test_potentials(self):
        A, U = potentials(state(), static_partner(2.0))
        np.testing.assert_array_equal(A, 0)
        assert U == pytest.approx(0.5)

    @pytest.mark.parametrize("d, expected", [(2.0, 0.5), (1.0, 1.0)])
    def test_lagrangian(self, d, expected):
        ev = partial_lagrangian(state(), static_partner(d))
        assert ev.L == pytest.approx(expected)
        assert ev.L_alt == pytest.approx(expected)

    def test_momentum_and_legendre(self):
        np.testing.assert_array_equal(momentum(state(), static_partner(2.0)), 0)
        assert legendre_transform(state(), static_partner(2.0)) == pytest.approx(-0.5)

    def test_moving_particle(self):
        s = state([0.6, 0, 0])
        np.testing.assert_allclose(momentum(s, static_partner(2.0)), [0.75, 0, 0], atol=1e-15)
        # both light cones meet the partner at distance 2, so U = 0.5
        assert legendre_transform(s, static_partner(2.0)) == pytest.approx(1.25 - 1 - 0.5)

    def test_grad_x_points_to_partner(self):
        np.testing.assert_allclose(grad_x(state(), static_partner(2.0)), [0.25, 0, 0], atol=1e-15)


class TestRecedingPartner:
    def test_interaction(self):
        s, partner = receding_case()
        I_minus, I_plus, _, _ = interaction_terms(s, partner)
        assert I_minus == pytest.approx(1.0, abs=1e-14)
        assert I_plus == pytest.approx(1.0, abs=1e-14)

    def test_potentials_and_lagrangian(self):
        s, partner = receding_case()
        A, U = potentials(s, partner)
        assert U == pytest.approx(2.0, abs=1e-14)
        np.testing.assert_allclose(A, [1.0, 0, 0], atol=1e-14)
        assert partial_lagrangian(s, partner).L == pytest.approx(2.0, abs=1e-14)
        np.testing.assert_allclose(momentum(s, partner), [-1.0, 0, 0], atol=1e-14)


class TestIdentities:
    def test_momentum_matches_complex_step(self, rng):
        t1, t2 = random_pair(rng)
        for t in rng.uniform(-5, 10, 10):
            v = t1.velocity(t)
            ev = evaluate(t, t1.position(t), v, 1.3, t2)
            np.testing.assert_allclose(ev.P, complex_step_lagrangian_gradient(v, 1.3, ev), rtol=1e-13, atol=1e-15)

    def test_grad_x_matches_finite_differences(self, rng):
        t1, t2 = random_pair(rng)
        for t in rng.uniform(-5, 10, 6):
            x, v = t1.position(t), t1.velocity(t)
            g = evaluate(t, x, v, 1.0, t2).dL_dx
            h = 1e-5
            fd = np.empty(3)
            for k in range(3):
                e = np.eye(3)[k] * h
                fd[k] = (evaluate(t, x + e, v, 1.0, t2).L - evaluate(t, x - e, v, 1.0, t2).L) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9 * np.linalg.norm(fd))

    def test_grad_t_matches_finite_differences(self, rng):
        t1, t2 = random_pair(rng)
        t = 2.0
        x, v = t1.position(t), t1.velocity(t)
        h = 1e-5
        fd = (evaluate(t + h, x, v, 1.0, t2).L - evaluate(t - h, x, v, 1.0, t2).L) / (2 * h)
        assert evaluate(t, x, v, 1.0, t2).dL_dt == pytest.approx(fd, rel=1e-6)

    def test_acceleration_part_is_linear(self, rng):
        v_i = rng.uniform(-0.3, 0.3, 3)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        v_j = rng.uniform(-0.3, 0.3, 3)
        a_j = rng.normal(size=3)
        for sign in (-1, 1):
            base = interaction_term(v_i, sign, 1.7, n, v_j, np.zeros(3)).dI_dx
            one = interaction_term(v_i, sign, 1.7, n, v_j, a_j).dI_dx - base
            two = interaction_term(v_i, sign, 1.7, n, v_j, 2 * a_j).dI_dx - base
            np.testing.assert_allclose(two, 2 * one, rtol=1e-13, atol=1e-16)

    def test_batched_matches_pointwise(self, rng):
        t1, t2 = random_pair(rng)
        ts = np.linspace(-3, 8, 9)
        batch = evaluate(ts, t1.position(ts), t1.velocity(ts), 1.0, t2)
        for k, t in enumerate(ts):
            one = evaluate(t, t1.position(t), t1.velocity(t), 1.0, t2)
            assert batch.L[k] == pytest.approx(one.L, rel=1e-14)
            np.testing.assert_allclose(batch.P[k], one.P, rtol=1e-13, atol=1e-16)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 10), st.lists(st.floats(-0.55, 0.55), min_size=3, max_size=3),
       st.floats(0.1, 2000))
def test_dual_form_and_legendre(seed, t, v, mass):
    t1, t2 = random_pair(np.random.default_rng(seed))
    v = np.array(v)
    ev = evaluate(t, t1.position(t), v, mass, t2)
    assert ev.M >= 0 and ev.I_minus > 0 and ev.I_plus > 0 and ev.U > 0
    assert abs(ev.L - ev.L_alt) <= 1e-13 * (ev.M + ev.I_minus + ev.I_plus + abs(v @ ev.A))
    scale = mass * (ev.gamma - 1) + ev.U
    assert abs(ev.E - ev.E_alt) <= 1e-13 * (scale + abs(v @ ev.P) + abs(ev.L))
