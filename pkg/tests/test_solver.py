import numpy as np
import pytest

from varem.action import evaluate_action
from varem.errors import NotShortestBoundaryError
from varem.lagrangian import evaluate
from varem.lightcone import solve_deviating_argument
from varem.solver import (
    Discretization,
    SolverOptions,
    criticality_report,
    find_circular_orbit,
    minimize_action,
    shoot_shortest_boundary,
)
from varem.solver.minimize import ActionProblem
from varem.trajectory import BoundaryData, Trajectory

Z3 = np.zeros(3)


def shortest_boundary(t1, t2, m1=1.0, m2=1.0):
    """Boundary data whose free ranges just touch: ``t_L2^- = t_O1^+``."""
    o_plus = solve_deviating_argument(t2, 0.0, t1.position(0.0), +1).t_dev
    t_L2 = solve_deviating_argument(t2, o_plus, t1.position(o_plus), +1).t_dev
    return BoundaryData.from_trajectories(t1, t2, 0.0, t_L2, m1, m2)


def sup_distance(a, b, lo, hi, n=401):
    ts = np.linspace(lo, hi, n)
    return float(np.max(np.abs(a.position(ts) - b.position(ts))))


class TestCircularOrbit:
    def test_equal_masses_are_symmetric(self):
        orbit = find_circular_orbit(20.0)
        assert orbit.r1 == orbit.r2 == 10.0
        assert orbit.report.details["el_residual_t0"] < 1e-10
        assert orbit.report.max_el_residual < 1e-10

    def test_mass_center(self):
        orbit = find_circular_orbit(200.0, 1.0, 4.0)
        # nearly Newtonian: r1 m1 = r2 m2 up to O(v^2)
        assert orbit.r1 / orbit.r2 == pytest.approx(4.0, rel=2e-2)
        assert orbit.report.details["el_residual_t0"] < 1e-10

    def test_kepler_limit(self):
        orbit = find_circular_orbit(1000.0, 1.0, 1836.0)
        assert orbit.kepler_ratio(1.0, 1836.0) == pytest.approx(1.0, rel=1e-2)

    @pytest.mark.parametrize("ell", [0.0, -3.0, 1e-12])
    def test_rejects_bad_separation(self, ell):
        with pytest.raises(ValueError):
            find_circular_orbit(ell)

    def test_unpacks(self):
        omega, r1, r2, report = find_circular_orbit(30.0)
        assert omega > 0 and r1 + r2 == pytest.approx(30.0)
        assert report.is_critical()


class TestCriticalityReport:
    def test_static_pair_is_not_critical(self, static_pair, static_boundary):
        rep = criticality_report(*static_pair, static_boundary)
        assert rep.max_el_residual == pytest.approx(0.25, rel=1e-9)
        assert rep.action == pytest.approx(2.0, abs=1e-12)
        assert rep.max_dP == 0 and rep.max_dE == 0
        assert not rep.is_critical()

    def test_orbit_is_critical(self):
        orbit = find_circular_orbit(10.0)
        ts = np.linspace(-60, 60, 241)
        h1, h2 = orbit.traj1.to_hermite(ts), orbit.traj2.to_hermite(ts)
        rep = criticality_report(h1, h2, BoundaryData.from_trajectories(h1, h2, 0.0, 20.0))
        assert rep.max_el_residual < 1e-6
        assert rep.max_dP < 1e-6 and rep.max_dE < 1e-6

    def test_artificial_jump(self, static_boundary):
        v = np.array([0.1, 0, 0])
        t1 = Trajectory([-20, 1, 10], [Z3, Z3, 9 * v], [Z3, Z3, v], [Z3, v, v])
        rep = criticality_report(t1, Trajectory.static([2, 0, 0], -20, 30), static_boundary)
        assert rep.max_dP == pytest.approx(0.1005, abs=1e-4)
        assert rep.we_nodes >= 1

    def test_serializes(self, static_pair, static_boundary):
        d = criticality_report(*static_pair, static_boundary).to_dict()
        assert set(d) >= {"action", "max_el_residual", "max_dP", "max_dE", "tv_P"}


class TestActionProblem:
    def test_gradient_matches_finite_differences(self, rng):
        t1, t2 = Trajectory.static(Z3, -20, 30), Trajectory.static([4, 0, 0], -20, 30)
        b = BoundaryData.from_trajectories(t1, t2, 0.0, 6.0)
        problem = ActionProblem(b, Discretization.uniform(b, 3))
        z = problem.pack(*b.straight_guess()) + 0.01 * rng.normal(size=problem.disc.n_variables)
        _, g = problem.evaluate(z)
        for i in rng.choice(z.size, 8, replace=False):
            def S(e, i=i):
                zz = z.copy()
                zz[i] += e
                return problem.evaluate(zz, want_grad=False)[0]

            d = [(S(e) - S(-e)) / (2 * e) for e in (1e-3, 1e-4)]
            fd = (100 * d[1] - d[0]) / 99
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_pack_roundtrip(self, static_boundary):
        problem = ActionProblem(static_boundary, Discretization.uniform(static_boundary, 4))
        z = problem.pack(*static_boundary.straight_guess())
        f1, f2 = problem.trajectories(z)
        np.testing.assert_allclose(problem.pack(f1.restrict(*static_boundary.free1),
                                                f2.restrict(*static_boundary.free2)), z, atol=1e-15)


@pytest.fixture(scope="module")
def head_on():
    t1, t2 = Trajectory.static(Z3, -40, 60), Trajectory.static([10, 0, 0], -40, 60)
    b = BoundaryData.from_trajectories(t1, t2, 0.0, 20.0)
    return b, minimize_action(b, Discretization.uniform(b, 4))


@pytest.fixture(scope="module")
def static_far():
    b = shortest_boundary(Trajectory.static(Z3, -40, 80), Trajectory.static([10, 0, 0], -40, 80))
    return b, shoot_shortest_boundary(b)


class TestMinimize:
    def test_converges_and_descends(self, head_on):
        b, res = head_on
        assert res.report.converged
        # four segments per range leave a small discretization residual
        assert res.report.max_el_residual < 1e-4
        assert res.history[-1] <= res.history[0]
        assert all(later <= earlier + 1e-12 for earlier, later in zip(res.history, res.history[1:]))
        assert res.report.action < evaluate_action(*b.straight_guess(), b).S

    def test_mirror_symmetry(self, head_on):
        b, res = head_on
        # swapping the charges and reversing time maps the problem to itself
        ts = np.linspace(0.0, 10.0, 41)
        np.testing.assert_allclose(res.traj1.position(ts)[:, 0] + res.traj2.position(20.0 - ts)[:, 0], 10.0,
                                   atol=1e-8)
        np.testing.assert_allclose(res.traj1.position(ts)[:, 1:], 0, atol=1e-12)

    def test_restart_is_idle(self, head_on):
        b, res = head_on
        again = minimize_action(b, res.disc, SolverOptions(align=False), guess=(res.traj1, res.traj2))
        assert again.report.iterations == 0
        assert again.report.action == pytest.approx(res.report.action, abs=1e-13)

    @pytest.mark.slow
    def test_reproduces_circular_orbit(self):
        orbit = find_circular_orbit(50.0)
        ts = np.arange(-260.0, 260.0 + 1e-9, 2.0)
        h1, h2 = orbit.traj1.to_hermite(ts), orbit.traj2.to_hermite(ts)
        b = BoundaryData.from_trajectories(h1, h2, 0.0, 110.0)
        res = minimize_action(b, Discretization.with_spacing(b, 20.0))
        assert res.report.action == pytest.approx(evaluate_action(h1, h2, b).S, abs=1e-9)
        for got, ref, rng_ in ((res.traj1, orbit.traj1, b.free1), (res.traj2, orbit.traj2, b.free2)):
            nodes = got.times[(got.times >= rng_[0]) & (got.times <= rng_[1])]
            assert np.max(np.abs(got.position(nodes) - ref.position(nodes))) < 1e-8
        assert res.report.max_dP < 1e-6 and res.report.max_dE < 1e-6


class TestShooting:
    def test_hits_endpoints(self, static_far):
        b, res = static_far
        assert res.endpoint_residual < 1e-8
        np.testing.assert_allclose(res.traj2.position(b.t_L2), b.x_L2, atol=1e-8)
        np.testing.assert_allclose(res.traj1.position(b.t_L2_minus), b.future1.position(b.t_L2_minus), atol=1e-8)
        assert res.report.max_el_residual < 1e-6

    def test_newtonian_sag(self, static_far):
        b, res = static_far
        # pinned at both ends under a pull 1/d^2 toward the partner: x(5) = -a 5^2 / 2
        assert b.free1 == pytest.approx((0.0, 10.0))
        assert res.traj1.position(5.0)[0] == pytest.approx(-0.5 * 25 / 100, rel=5e-2)

    def test_agrees_with_minimizer(self, static_far):
        b, res = static_far
        m = minimize_action(b, Discretization.uniform(b, 10))
        assert m.report.action == pytest.approx(res.report.action, abs=1e-6)
        for p in (1, 2):
            got, ref = (m.traj1, m.traj2)[p - 1], (res.traj1, res.traj2)[p - 1]
            assert sup_distance(got, ref, *b.free_range(p)) < 1e-4

    def test_partner_jump_keeps_momentum_continuous(self):
        # particle 2 starts drifting at t = -4 inside the past segment
        v = np.array([0.0, 0.05, 0.0])
        x2 = np.array([10.0, 0, 0])
        t2 = Trajectory([-40, -4, 80], [x2, x2, x2 + 84 * v], [Z3, Z3, v], [Z3, v, v])
        b = shortest_boundary(Trajectory.static(Z3, -40, 80), t2)
        res = shoot_shortest_boundary(b)
        assert res.endpoint_residual < 1e-8
        assert len(res.breaks) >= 1
        tb = res.breaks[0]["t1"]
        x = res.traj1.position(tb)
        P = [evaluate(tb, x, res.traj1.velocity(tb, side=s), 1.0, res.traj2, side=s).P for s in ("left", "right")]
        assert res.breaks[0]["dv1"] > 1e-4
        assert np.linalg.norm(P[1] - P[0]) < 1e-12
        assert res.report.details["max_break_dE"] > 0

    def test_rejects_overlapping_ranges(self, static_pair):
        b = BoundaryData.from_trajectories(*static_pair, 0.0, 8.0)
        with pytest.raises(NotShortestBoundaryError):
            shoot_shortest_boundary(b)
