import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from varem.errors import CollisionError, SpanExhaustedError
from varem.lightcone import deviating_partials, radon_nikodym, solve_deviating_argument
from varem.trajectory import Trajectory

from conftest import random_pair

ORIGIN = np.zeros(3)


@pytest.fixture
def receding():
    """Partner moving away along x as ``(0.5 s, 0, 0)``."""
    return Trajectory.uniform(ORIGIN, [0.5, 0, 0], -10, 20)


def test_static_advanced():
    sol = solve_deviating_argument(Trajectory.static([2, 0, 0], -10, 10), 0.0, ORIGIN, +1)
    assert sol.t_dev == pytest.approx(2.0, abs=1e-14)
    assert sol.r == pytest.approx(2.0, abs=1e-14)
    np.testing.assert_allclose(sol.n, [-1, 0, 0])


def test_receding_retarded(receding):
    sol = solve_deviating_argument(receding, 1.0, ORIGIN, -1)
    assert sol.t_dev == pytest.approx(2 / 3, abs=1e-14)
    assert sol.r == pytest.approx(1 / 3, abs=1e-14)
    np.testing.assert_allclose(sol.n, [-1, 0, 0], atol=1e-15)


def test_receding_advanced(receding):
    sol = solve_deviating_argument(receding, 1.0, ORIGIN, +1)
    assert sol.t_dev == pytest.approx(2.0, abs=1e-14)
    assert sol.r == pytest.approx(1.0, abs=1e-14)


def test_static_partials():
    sol = solve_deviating_argument(Trajectory.static([2, 0, 0], -10, 10), 0.0, ORIGIN, +1)
    dt_dx, dt_dt = deviating_partials(sol)
    np.testing.assert_allclose(dt_dx, [-1, 0, 0])
    assert dt_dt == pytest.approx(1.0)
    assert radon_nikodym(sol, ORIGIN) == pytest.approx(1.0)


def test_receding_partials(receding):
    sol = solve_deviating_argument(receding, 1.0, ORIGIN, -1)
    dt_dx, dt_dt = deviating_partials(sol)
    assert dt_dt == pytest.approx(2 / 3, abs=1e-14)
    np.testing.assert_allclose(dt_dx, [2 / 3, 0, 0], atol=1e-14)
    assert radon_nikodym(sol, ORIGIN) == pytest.approx(2 / 3, abs=1e-14)


def test_partials_match_finite_differences(rng):
    t1, t2 = random_pair(rng)
    x = t1.position(3.0)
    v = t1.velocity(3.0)
    for sign in (-1, 1):
        sol = solve_deviating_argument(t2, 3.0, x, sign)
        dt_dx, dt_dt = deviating_partials(sol)
        h = 1e-6
        up = solve_deviating_argument(t2, 3.0 + h, x, sign).t_dev
        dn = solve_deviating_argument(t2, 3.0 - h, x, sign).t_dev
        assert dt_dt == pytest.approx((up - dn) / (2 * h), abs=1e-6)
        for k in range(3):
            e = np.eye(3)[k] * h
            up = solve_deviating_argument(t2, 3.0, x + e, sign).t_dev
            dn = solve_deviating_argument(t2, 3.0, x - e, sign).t_dev
            assert dt_dx[k] == pytest.approx((up - dn) / (2 * h), abs=1e-6)
        # along the worldline the total derivative is the Radon-Nikodym factor
        up = solve_deviating_argument(t2, 3.0 + h, t1.position(3.0 + h), sign).t_dev
        dn = solve_deviating_argument(t2, 3.0 - h, t1.position(3.0 - h), sign).t_dev
        assert radon_nikodym(sol, v) == pytest.approx((up - dn) / (2 * h), abs=1e-6)


def test_forward_and_inverse_maps_compose_to_one(rng):
    t1, t2 = random_pair(rng)
    fwd = solve_deviating_argument(t2, 2.0, t1.position(2.0), +1)
    back = solve_deviating_argument(t1, fwd.t_dev, fwd.x_dev, -1)
    assert back.t_dev == pytest.approx(2.0, abs=1e-12)
    ratio = radon_nikodym(fwd, t1.velocity(2.0)) * radon_nikodym(back, t2.velocity(fwd.t_dev))
    assert ratio == pytest.approx(1.0, abs=1e-12)


def test_batch_matches_scalar(rng):
    t1, t2 = random_pair(rng)
    ts = np.linspace(-5, 10, 17)
    batch = solve_deviating_argument(t2, ts, t1.position(ts), -1)
    for k, t in enumerate(ts):
        one = solve_deviating_argument(t2, t, t1.position(t), -1)
        assert batch.t_dev[k] == pytest.approx(one.t_dev, abs=1e-13)


def test_agrees_with_bracketing_oracle(rng):
    t1, t2 = random_pair(rng)
    for t in rng.uniform(-5, 15, 10):
        x = t1.position(t)
        for sign in (-1, 1):
            def f(s):
                return s - t - sign * np.linalg.norm(x - t2.position(s))

            lo, hi = (t2.t_start, t) if sign < 0 else (t, t2.t_end)
            ref = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
            assert solve_deviating_argument(t2, t, x, sign).t_dev == pytest.approx(ref, abs=1e-12)


def test_span_exhausted():
    partner = Trajectory.static([2, 0, 0], 0, 1)
    with pytest.raises(SpanExhaustedError):
        solve_deviating_argument(partner, 0.5, ORIGIN, +1)


def test_collision():
    partner = Trajectory.static([1e-9, 0, 0], -5, 5)
    with pytest.raises(CollisionError):
        solve_deviating_argument(partner, 0.0, ORIGIN, -1)


def test_sign_validation():
    with pytest.raises(ValueError):
        solve_deviating_argument(Trajectory.static([2, 0, 0], -5, 5), 0.0, ORIGIN, 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.9), st.sampled_from([-1.0, 1.0]), st.floats(0.5, 8.0), st.sampled_from([-1, 1]))
def test_uniform_closed_form(speed, direction, t, sign):
    """A partner leaving the origin at t = 0 with speed |v| is seen at t / (1 - sign |v|)."""
    partner = Trajectory.uniform(ORIGIN, [direction * speed, 0, 0], -200, 200)
    sol = solve_deviating_argument(partner, t, ORIGIN, sign)
    expected = t / (1 - sign * speed)
    assert sol.t_dev == pytest.approx(expected, abs=1e-12 * (1 + abs(expected)))
    assert abs(sol.residual) < 1e-12 * (1 + abs(expected))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 10))
def test_light_cone_residual_property(seed, t):
    t1, t2 = random_pair(np.random.default_rng(seed))
    x = t1.position(t)
    for sign in (-1, 1):
        sol = solve_deviating_argument(t2, t, x, sign)
        assert abs(sol.t_dev - t - sign * np.linalg.norm(x - t2.position(sol.t_dev))) < 1e-12
        assert sign * (sol.t_dev - t) > 0
        assert sol.denominator > 0
