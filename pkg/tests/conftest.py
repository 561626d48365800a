import numpy as np
import pytest

from varem.trajectory import BoundaryData, Trajectory

_Z3 = np.zeros(3)


def wiggly(rng, center, t_start, t_end, *, speed=0.4, modes=3, spacing=0.5):
    """Smooth random worldline about ``center`` with speed below ``speed``."""
    center = np.asarray(center, dtype=float)
    amp = rng.normal(size=(modes, 3))
    freq = rng.uniform(0.2, 1.2, modes)
    phase = rng.uniform(0, 2 * np.pi, (modes, 3))
    scale = speed / np.sum(np.linalg.norm(amp, axis=1) * freq)
    amp *= scale

    def pos(t):
        return center + np.sum(amp * np.sin(freq[:, None] * t + phase), axis=0)

    def vel(t):
        return np.sum(amp * freq[:, None] * np.cos(freq[:, None] * t + phase), axis=0)

    n = int(np.ceil((t_end - t_start) / spacing))
    return Trajectory.from_function(pos, vel, np.linspace(t_start, t_end, n + 1))


def random_pair(rng, *, sep=3.0, span=(-20.0, 30.0), speed=0.4):
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t1 = wiggly(rng, np.zeros(3), *span, speed=speed)
    t2 = wiggly(rng, sep * direction, *span, speed=speed)
    return t1, t2


def hat(lo, hi, direction, peak=None):
    """Piecewise-linear bump vanishing at ``lo`` and ``hi``."""
    peak = 0.5 * (lo + hi) if peak is None else peak
    d = np.asarray(direction, float)
    up, down = d / (peak - lo), -d / (hi - peak)
    return Trajectory([lo, peak, hi], [_Z3, d, _Z3], [up, up, down], [up, down, down], check_speed=False)


def smooth_bump(lo, hi, direction, n=8):
    """``sin^2`` bump on ``[lo, hi]`` sampled as a Hermite curve."""
    d = np.asarray(direction, float)
    w = np.pi / (hi - lo)
    return Trajectory.from_function(lambda t: d * np.sin(w * (t - lo)) ** 2,
                                    lambda t: d * w * np.sin(2 * w * (t - lo)),
                                    np.linspace(lo, hi, n + 1), check_speed=False)


def richardson_derivative(S, eps=(1e-3, 1e-4)):
    """Central differences at two steps combined to cancel the eps^2 term."""
    d = [(S(e) - S(-e)) / (2 * e) for e in eps]
    ratio = (eps[0] / eps[1]) ** 2
    return (ratio * d[1] - d[0]) / (ratio - 1)


def kinked_partner_case():
    """Particle 2 at rest until t = 0, then drifting along y; particle 1 at rest."""
    t1 = Trajectory.static(_Z3, -20, 30)
    v = np.array([0.0, 0.2, 0.0])
    x2 = np.array([2.0, 0, 0])
    t2 = Trajectory([-20, 0, 30], [x2, x2, x2 + 30 * v], [_Z3, _Z3, v], [_Z3, v, v])
    return t1, t2, BoundaryData.from_trajectories(t1, t2, 0.0, 6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def static_pair():
    """Two charges at rest a distance 2 apart on the x axis."""
    return Trajectory.static([0, 0, 0], -20, 30), Trajectory.static([2, 0, 0], -20, 30)


@pytest.fixture
def static_boundary(static_pair):
    t1, t2 = static_pair
    return BoundaryData.from_trajectories(t1, t2, 0.0, 4.0)


# -- acceptance summary ---------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        line = f"criterion {number}: {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
