import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varem.action import el_residual, evaluate_action
from varem.fourspace import (
    MonotoneMap,
    legendre_identity_residual,
    lift,
    lifted_action,
    radon_nikodym_s,
    solve_param_light_cone,
    tilde_eval,
    time_component_redundancy,
)
from varem.lagrangian import evaluate
from varem.solver import find_circular_orbit
from varem.trajectory import BoundaryData, Trajectory

from conftest import random_pair

Z3 = np.zeros(3)
SPAN = (-20.0, 30.0)


def identity(traj, mass=1.0):
    return lift(traj, MonotoneMap.identity(traj.t_start, traj.t_end), mass)


def random_lift(rng, traj, mass=1.0, jumps=True):
    return lift(traj, MonotoneMap.random(rng, traj.t_start, traj.t_end, n=7, jumps=jumps), mass)


def static_lifts():
    return identity(Trajectory.static(Z3, *SPAN)), identity(Trajectory.static([2, 0, 0], *SPAN))


class TestMonotoneMap:
    def test_rejects_slow_or_fast_slopes(self):
        with pytest.raises(ValueError):
            MonotoneMap.affine(20.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            MonotoneMap.affine(0.05, 0.0, 0.0, 1.0)

    def test_inverse(self, rng):
        m = MonotoneMap.random(rng, 0.0, 10.0, n=5)
        s = np.linspace(m.s_start, m.s_end, 37)
        np.testing.assert_allclose(m.inverse(m(s)), s, atol=1e-12)

    def test_covering_hits_ends(self):
        m = MonotoneMap.covering(2.0, 7.0, [0, 1, 3], [1.0, 2.0, 0.5])
        assert m(0.0) == pytest.approx(2.0)
        assert m(3.0) == pytest.approx(7.0)


class TestLift:
    def test_identity(self, rng):
        t1, _ = random_pair(rng)
        p = identity(t1)
        s = np.linspace(-10, 20, 31)
        np.testing.assert_allclose(p.position(s), t1.position(s), atol=1e-14)

    def test_affine_chain_rule(self, rng):
        t1, _ = random_pair(rng)
        p = lift(t1, MonotoneMap.affine(2.0, 0.0, -10.0, 15.0))
        s = np.linspace(-10, 15, 26)
        np.testing.assert_allclose(p.position_prime(s), 2 * t1.velocity(2 * s), atol=1e-14)
        np.testing.assert_allclose(p.velocity(s), t1.velocity(2 * s), atol=1e-14)

    def test_cubic_chain_rule(self):
        traj = Trajectory.from_function(lambda t: np.array([np.sin(t), 0.5 * t, 0]) * 0.4,
                                        lambda t: np.array([np.cos(t), 0.5, 0]) * 0.4, np.linspace(0, 1.2, 7))
        m = MonotoneMap.from_function(lambda s: s + 0.1 * s ** 3, lambda s: 1 + 0.3 * s ** 2, [0.0, 0.5, 1.0])
        p = lift(traj, m)
        s = np.linspace(0, 1, 41)
        np.testing.assert_allclose(p.time(s), s + 0.1 * s ** 3, atol=1e-15)
        np.testing.assert_allclose(p.position(s), traj.position(s + 0.1 * s ** 3), atol=1e-15)
        xdot = traj.velocity(s + 0.1 * s ** 3)
        np.testing.assert_allclose(p.position_prime(s) / (1 + 0.3 * s ** 2)[:, None], xdot, atol=1e-12)

    def test_rejects_map_beyond_span(self):
        with pytest.raises(ValueError):
            lift(Trajectory.static(Z3, 0, 1), MonotoneMap.identity(0, 2))


class TestTildeEval:
    def test_static_identity(self):
        p1, p2 = static_lifts()
        te = tilde_eval(p1, p2, 1.0)
        assert te.M == 0
        assert te.I_minus == pytest.approx(0.25) and te.I_plus == pytest.approx(0.25)
        np.testing.assert_array_equal(te.P, 0)
        assert te.P0 == pytest.approx(0.5)
        assert legendre_identity_residual(p1, p2, 1.0) < 1e-15

    def test_static_affine_scaling(self):
        _, p2 = static_lifts()
        q1 = lift(Trajectory.static(Z3, *SPAN), MonotoneMap.affine(2.0, 0.0, -5.0, 10.0))
        assert tilde_eval(q1, p2, 0.5).L == pytest.approx(1.0)

    def test_radon_nikodym_static_and_receding(self):
        p1, p2 = static_lifts()
        sol = solve_param_light_cone(p2, 0.0, Z3, 1)
        assert radon_nikodym_s(sol, 1.0, Z3) == pytest.approx(1.0)
        partner = identity(Trajectory.uniform(Z3, [0.5, 0, 0], -10, 20))
        sol = solve_param_light_cone(partner, 1.0, Z3, -1)
        assert sol.t_dev == pytest.approx(2 / 3)
        assert radon_nikodym_s(sol, 1.0, Z3) == pytest.approx(2 / 3)
        assert radon_nikodym_s(sol, 2.0, Z3) == pytest.approx(4 / 3)

    def test_param_cone_on_nontrivial_lift(self, rng):
        t1, t2 = random_pair(rng)
        p2 = random_lift(rng, t2)
        for sign in (-1, 1):
            sol = solve_param_light_cone(p2, 2.0, t1.position(2.0), sign)
            direct = evaluate(2.0, t1.position(2.0), t1.velocity(2.0), 1.0, t2)
            ref = direct.retarded if sign < 0 else direct.advanced
            assert sol.t_dev == pytest.approx(ref.t_dev, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5.0, 10.0), st.floats(0.2, 5.0))
def test_pointwise_identities_under_random_lifts(seed, t, mass):
    rng = np.random.default_rng(seed)
    t1, t2 = random_pair(rng)
    p1, p2 = random_lift(rng, t1, mass), random_lift(rng, t2)
    s = float(p1.param_of_time(t))
    te = tilde_eval(p1, p2, s)
    ev = evaluate(te.t, t1.position(te.t), t1.velocity(te.t), mass, t2)
    assert abs(te.L - te.t_prime * ev.L) <= 1e-12 * te.t_prime * abs(ev.L)
    assert np.max(np.abs(te.P - ev.P)) <= 1e-12 * (1 + np.max(np.abs(ev.P)))
    assert abs(te.P0 + ev.E) <= 1e-12 * (1 + abs(ev.E))
    assert legendre_identity_residual(p1, p2, s) < 1e-12


def test_lifted_action_matches_time_action(rng):
    t1, t2 = random_pair(rng)
    b = BoundaryData.from_trajectories(t1, t2, 0.0, 8.0)
    S = evaluate_action(t1, t2, b, quad_tol=1e-11).S
    for _ in range(3):
        p1, p2 = random_lift(rng, t1), random_lift(rng, t2)
        assert lifted_action(p1, p2, b, quad_tol=1e-11) == pytest.approx(S, abs=2e-11)


class TestRedundancy:
    def test_static_pair(self):
        p1, p2 = static_lifts()
        chk = time_component_redundancy(p1, p2, 1.0)
        assert chk.spatial_residual == pytest.approx(0.25, rel=1e-9)
        assert abs(chk.time_residual) < 1e-12
        assert chk.holds()

    def test_identity_lift_matches_time_residual(self, rng):
        t1, t2 = random_pair(rng)
        b = BoundaryData.from_trajectories(t1, t2, 0.0, 8.0)
        t = 0.5 * sum(b.free1)
        chk = time_component_redundancy(identity(t1), identity(t2), t)
        assert chk.spatial_residual == pytest.approx(np.linalg.norm(el_residual(t1, t2, b, 1, t)), rel=1e-6)
        assert chk.holds(1e-7)

    def test_circular_orbit(self, rng):
        orbit = find_circular_orbit(10.0)
        c1, c2 = orbit.traj1, orbit.traj2
        h1 = c1.to_hermite(np.linspace(-60, 60, 1201))
        h2 = c2.to_hermite(np.linspace(-60, 60, 1201))
        p1 = lift(h1, MonotoneMap.random(rng, -60, 60, n=6, jumps=False))
        p2 = lift(h2, MonotoneMap.random(rng, -60, 60, n=6, jumps=False))
        for t in (-7.33, 1.17, 12.93):
            s = float(p1.param_of_time(t))
            chk = time_component_redundancy(p1, p2, s)
            assert chk.spatial_residual < 1e-6
            assert abs(chk.time_residual) < 1e-5
            assert chk.holds(1e-7)
