"""Shooting integrator for boundary data with the shortest time separation.

With the shortest separation, particle 1's retarded partner always lies on
the fixed past segment of particle 2 and particle 2's advanced partner on the
fixed future segment of particle 1.  The two remaining interactions couple
the particles along light-cone-paired times ``t2 = t1 + |x1(t1) - x2(t2)|``.
The integrator marches both particles together in ``t1`` with state
``(x1, P1, x2, P2)``:

* velocities follow from the momenta, ``v = p / sqrt(m^2 + p^2)`` with
  ``p = P + A``, by a fixed-point iteration (``A`` of each particle depends
  on the other's current velocity);
* ``dP/dt = dL/dx`` needs the partner acceleration, and each acceleration is
  an affine function of the other one, so both follow from a small linear
  solve;
* whenever a light-cone image crosses a node of a fixed segment the
  integration restarts with the next polynomial piece.  ``P`` stays
  continuous there, the velocities jump with ``A``, and the energy jump is
  recorded.

The unknown initial momenta are found by damped Newton iteration on the
endpoint conditions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import CollisionError, ConvergenceError, NotShortestBoundaryError
from ..lagrangian import interaction_term, lorentz_gamma, velocity_from_momentum
from ..lightcone import R_MIN, solve_deviating_argument
from ..trajectory import BoundaryData, ExtendedSegment, Trajectory, _power_coefficients
from .report import CriticalityReport, criticality_report

log = logging.getLogger(__name__)

_EYE_ROWS = np.vstack([np.zeros(3), np.eye(3)])


@dataclass
class ShootingOptions:
    rtol: float = 1e-12
    atol: float = 1e-14
    endpoint_tol: float = 1e-10
    max_newton: int = 30
    fd_step: float = 1e-7
    samples_per_unit: float = 8.0
    min_samples: int = 64
    r_min: float = R_MIN
    quad_tol: float = 1e-10
    report_samples: int = 3


@dataclass
class ShootingState:
    """Integrated state of one particle: time, position and momentum ``P``."""

    t: float
    x: np.ndarray
    P: np.ndarray


@dataclass
class ShootingResult:
    traj1: Trajectory
    traj2: Trajectory
    report: CriticalityReport
    initial_momenta: tuple[np.ndarray, np.ndarray]
    endpoint_residual: float
    breaks: list[dict] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (traj1, traj2, report)
        return iter((self.traj1, self.traj2, self.report))


def check_shortest(boundary: BoundaryData, tol: float = 1e-12) -> None:
    """Raise unless the boundary data have the shortest time separation.

    This holds exactly when the end of the past segment and the start of the
    future segment are not timelike separated.
    """
    x2 = boundary.past2.position(boundary.t_O1_plus)
    x1 = boundary.future1.position(boundary.t_L2_minus)
    gap = boundary.t_L2_minus - boundary.t_O1_plus
    dist = float(np.linalg.norm(x1 - x2))
    if gap > dist + tol * (1 + dist):
        raise NotShortestBoundaryError(
            f"the free ranges overlap by {gap - dist:.6g}: particle 1's retarded image leaves the past segment"
        )


def _dv_dp(p: np.ndarray, mass: float) -> np.ndarray:
    s = math.sqrt(mass * mass + float(p @ p))
    v = p / s
    return (np.eye(3) - np.outer(v, v)) / s


@dataclass
class _Cone:
    t_dev: float
    r: float
    n: np.ndarray
    v_dev: np.ndarray
    a_dev: np.ndarray


class _Cubic:
    """One cubic piece in power form with a scalar Newton light-cone solve.

    Falls back to the general solver on the extrapolated segment if Newton
    does not settle.
    """

    def __init__(self, traj: Trajectory, k: int, pad: float, r_min: float):
        self.t0 = float(traj.times[k])
        h = float(traj.times[k + 1] - traj.times[k])
        self.c = _power_coefficients(traj.x[k], traj.v_right[k], traj.x[k + 1], traj.v_left[k + 1], h)
        self.segment = ExtendedSegment(traj, k, pad)
        self.r_min = r_min

    def cone(self, t: float, x: np.ndarray, sign: int) -> _Cone:
        c0, c1, c2, c3 = self.c
        u = t - self.t0
        for _ in range(60):
            X = c0 + u * (c1 + u * (c2 + u * c3))
            V = c1 + u * (2 * c2 + u * 3 * c3)
            diff = x - X
            r = math.sqrt(float(diff @ diff))
            g = u + self.t0 - t - sign * r
            dg = 1.0 + sign * float(diff @ V) / r
            step = g / dg
            u -= step
            if abs(step) <= 1e-15 * (1.0 + abs(u + self.t0)):
                break
        else:
            sol = solve_deviating_argument(self.segment, t, x, sign, r_min=self.r_min, snap=False)
            return _Cone(float(sol.t_dev), float(sol.r), sol.n, sol.v_dev, sol.a_dev)
        X = c0 + u * (c1 + u * (c2 + u * c3))
        diff = x - X
        r = math.sqrt(float(diff @ diff))
        if r < self.r_min:
            raise CollisionError(f"separation {r:.3g} below r_min={self.r_min:g} at t={t!r}")
        return _Cone(u + self.t0, r, diff / r, c1 + u * (2 * c2 + u * 3 * c3), 2 * c2 + 6 * c3 * u)


class _Dynamics:
    """Right-hand side of the coupled march for fixed polynomial pieces of the boundary segments."""

    def __init__(self, boundary: BoundaryData, kp: int, kf: int, r_min: float):
        self.b = boundary
        self.kp = kp
        self.kf = kf
        self.r_min = r_min
        past, fut = boundary.past2, boundary.future1
        pad_p = float(past.times[kp + 1] - past.times[kp])
        pad_f = float(fut.times[kf + 1] - fut.times[kf])
        self.past = _Cubic(past, kp, max(pad_p, 1.0), r_min)
        self.fut = _Cubic(fut, kf, max(pad_f, 1.0), r_min)
        self._v = None

    def geometry(self, t1: float, y: np.ndarray) -> dict:
        x1, P1, x2, P2 = y[0:3], y[3:6], y[6:9], y[9:12]
        diff = x1 - x2
        r12 = float(np.linalg.norm(diff))
        t2 = t1 + r12
        ret = self.past.cone(t1, x1, -1)
        adv = self.fut.cone(t2, x2, +1)
        return {"x1": x1, "P1": P1, "x2": x2, "P2": P2, "r12": r12, "n12": diff / r12, "t2": t2,
                "ret": ret, "adv": adv}

    def velocities(self, g: dict) -> tuple[np.ndarray, np.ndarray]:
        b = self.b
        ret, adv = g["ret"], g["adv"]
        r12, n12 = g["r12"], g["n12"]
        A1_ret = ret.v_dev / (2.0 * ret.r * (1.0 - ret.n @ ret.v_dev))
        A2_adv = adv.v_dev / (2.0 * adv.r * (1.0 + adv.n @ adv.v_dev))
        if self._v is None:
            v1 = velocity_from_momentum(g["P1"], b.m1)
            v2 = velocity_from_momentum(g["P2"], b.m2)
        else:
            v1, v2 = self._v
        for _ in range(200):
            A1 = A1_ret + v2 / (2.0 * r12 * (1.0 + n12 @ v2))
            v1_new = velocity_from_momentum(g["P1"] + A1, b.m1)
            A2 = v1_new / (2.0 * r12 * (1.0 + n12 @ v1_new)) + A2_adv
            v2_new = velocity_from_momentum(g["P2"] + A2, b.m2)
            delta = max(np.max(np.abs(v1_new - v1)), np.max(np.abs(v2_new - v2)))
            v1, v2 = v1_new, v2_new
            if delta <= 1e-17:
                break
        self._v = (v1, v2)
        return v1, v2

    def rates(self, t1: float, y: np.ndarray, full: bool = False):
        b = self.b
        g = self.geometry(t1, y)
        v1, v2 = self.velocities(g)
        ret, adv = g["ret"], g["adv"]
        r12, n12 = g["r12"], g["n12"]
        t1_ret = interaction_term(v1, -1, ret.r, ret.n, ret.v_dev, ret.a_dev)
        t2_adv = interaction_term(v2, +1, adv.r, adv.n, adv.v_dev, adv.a_dev)
        t1_adv = interaction_term(v1, +1, r12, n12, v2, _EYE_ROWS)
        t2_ret = interaction_term(v2, -1, r12, -n12, v1, _EYE_ROWS)
        dP1 = t1_ret.dI_dx + t1_adv.dI_dx
        dP2 = t2_ret.dI_dx + t2_adv.dI_dx
        p1 = g["P1"] + t1_ret.A + t1_adv.A
        p2 = g["P2"] + t2_ret.A + t2_adv.A
        a1_of = (dP1 + t1_ret.dA_dt + t1_adv.dA_dt) @ _dv_dp(p1, b.m1).T
        a2_of = (dP2 + t2_ret.dA_dt + t2_adv.dA_dt) @ _dv_dp(p2, b.m2).T
        c1, J12 = a1_of[0], (a1_of[1:] - a1_of[0]).T
        c2, J21 = a2_of[0], (a2_of[1:] - a2_of[0]).T
        a1 = np.linalg.solve(np.eye(3) - J12 @ J21, c1 + J12 @ c2)
        a2 = c2 + J21 @ a1
        # the dI/dx rows are affine in the partner acceleration as well
        F1 = dP1[0] + (dP1[1:] - dP1[0]).T @ a2
        F2 = dP2[0] + (dP2[1:] - dP2[0]).T @ a1
        rho = (1.0 + n12 @ v1) / (1.0 + n12 @ v2)
        dy = np.concatenate([v1, F1, rho * v2, rho * F2])
        if not full:
            return dy
        return dy, {"t2": g["t2"], "v1": v1, "v2": v2, "a1": a1, "a2": a2, "rho": rho, "ret": ret, "adv": adv,
                    "E1": _energy(v1, b.m1, t1_ret.U + t1_adv.U),
                    "E2": _energy(v2, b.m2, t2_ret.U + t2_adv.U)}

    def __call__(self, t1, y):
        return self.rates(t1, y)

    def past_event(self):
        past = self.b.past2
        if self.kp + 1 >= past.times.size - 1:
            return None
        target = float(past.times[self.kp + 1])

        def ev(t1, y):
            return self.past.cone(t1, y[0:3], -1).t_dev - target
        ev.terminal = True
        ev.direction = 1
        return ev

    def future_event(self):
        fut = self.b.future1
        if self.kf + 1 >= fut.times.size - 1:
            return None
        target = float(fut.times[self.kf + 1])

        def ev(t1, y):
            t2 = t1 + float(np.linalg.norm(y[0:3] - y[6:9]))
            return self.fut.cone(t2, y[6:9], +1).t_dev - target
        ev.terminal = True
        ev.direction = 1
        return ev


def _energy(v, mass, U):
    v2 = float(v @ v)
    gamma = float(lorentz_gamma(v))
    return mass * gamma * gamma * v2 / (gamma + 1.0) - U


@dataclass
class _Phase:
    t_start: float
    t_end: float
    kp: int
    kf: int
    sol: object


def _segment_of(traj: Trajectory, t: float) -> int:
    k = int(np.searchsorted(traj.times, t, side="right") - 1)
    return min(max(k, 0), traj.n_segments - 1)


class _Shooter:
    def __init__(self, boundary: BoundaryData, opts: ShootingOptions):
        self.b = boundary
        self.opts = opts
        self.x2_start = boundary.past2.position(boundary.t_O1_plus)
        self.x1_end = boundary.future1.position(boundary.t_L2_minus)
        adv0 = solve_deviating_argument(boundary.future1, boundary.t_O1_plus, self.x2_start, +1,
                                        r_min=opts.r_min, snap=False)
        self.kf0 = _segment_of(boundary.future1, adv0.t_dev)
        lengths = np.concatenate([np.diff(boundary.past2.times), np.diff(boundary.future1.times),
                                  [boundary.t_L2_minus - boundary.t_O1]])
        self.max_step = 0.25 * float(np.min(lengths))
        self.n_runs = 0

    def run(self, P1: np.ndarray, P2: np.ndarray, dense: bool = False) -> tuple[np.ndarray, list[_Phase]]:
        self.n_runs += 1
        b = self.b
        y = np.concatenate([b.x_O1, P1, self.x2_start, P2])
        t = b.t_O1
        kp, kf = 0, self.kf0
        phases = []
        while True:
            dyn = _Dynamics(b, kp, kf, self.opts.r_min)
            tagged = [(k, e) for k, e in (("past", dyn.past_event()), ("future", dyn.future_event())) if e is not None]
            kinds = [k for k, _ in tagged]
            events = [e for _, e in tagged]
            sol = solve_ivp(dyn, (t, b.t_L2_minus), y, method="DOP853", rtol=self.opts.rtol, atol=self.opts.atol,
                            events=events or None, dense_output=dense, max_step=self.max_step)
            if sol.status == -1:
                raise ConvergenceError(f"integration failed: {sol.message}")
            phases.append(_Phase(t, float(sol.t[-1]), kp, kf, sol))
            y = sol.y[:, -1]
            t = float(sol.t[-1])
            if sol.status == 0:
                break
            fired = [i for i, te in enumerate(sol.t_events or []) if len(te)]
            for i in fired:
                if kinds[i] == "past":
                    kp += 1
                else:
                    kf += 1
            if t >= b.t_L2_minus:
                break
        return y, phases

    def residual(self, u: np.ndarray) -> np.ndarray:
        y, _ = self.run(u[:3], u[3:])
        return np.concatenate([y[0:3] - self.x1_end, y[6:9] - self.b.x_L2])

    def initial_guess(self) -> np.ndarray:
        b = self.b
        v1 = (self.x1_end - b.x_O1) / (b.t_L2_minus - b.t_O1)
        v2 = (b.x_L2 - self.x2_start) / (b.t_L2 - b.t_O1_plus)
        dyn = _Dynamics(b, 0, self.kf0, self.opts.r_min)
        y = np.concatenate([b.x_O1, np.zeros(3), self.x2_start, np.zeros(3)])
        g = dyn.geometry(b.t_O1, y)
        ret, adv = g["ret"], g["adv"]
        r12, n12 = g["r12"], g["n12"]
        A1 = ret.v_dev / (2 * ret.r * (1 - ret.n @ ret.v_dev)) + v2 / (2 * r12 * (1 + n12 @ v2))
        A2 = v1 / (2 * r12 * (1 + n12 @ v1)) + adv.v_dev / (2 * adv.r * (1 + adv.n @ adv.v_dev))
        P1 = b.m1 * lorentz_gamma(v1) * v1 - A1
        P2 = b.m2 * lorentz_gamma(v2) * v2 - A2
        return np.concatenate([P1, P2])


def shoot_shortest_boundary(boundary: BoundaryData, guess=None, opts: ShootingOptions | None = None) -> ShootingResult:
    """Solve the shortest-boundary problem by shooting on the initial momenta.

    ``guess`` may be ``None`` (momenta of constant-velocity motion), a pair of
    initial momenta ``(P1, P2)`` or a pair of initial velocities given as
    ``{"v1": ..., "v2": ...}``.
    """
    opts = opts or ShootingOptions()
    boundary.validate()
    check_shortest(boundary)
    shooter = _Shooter(boundary, opts)
    u = _initial(shooter, guess)
    F = shooter.residual(u)
    norm = float(np.linalg.norm(F))
    iters = 0
    J = None
    while norm > opts.endpoint_tol and iters < opts.max_newton:
        iters += 1
        fresh = J is None
        if fresh:
            J = _fd_jacobian(shooter, u, opts.fd_step)
        step = -np.linalg.solve(J, F)
        lam, F_new = _line_search(shooter, u, step, norm)
        if F_new is None or (lam < 0.25 and not fresh):
            if fresh:
                raise ConvergenceError(f"shooting Newton stalled with endpoint residual {norm:.3g}")
            # the secant Jacobian went stale, rebuild it before the next step
            J = None
            iters -= 1
            continue
        s_k = lam * step
        # Broyden update keeps one integration per iteration after the first
        J = J + np.outer(F_new - F - J @ s_k, s_k) / (s_k @ s_k)
        u = u + s_k
        F = F_new
        norm = float(np.linalg.norm(F))
        log.info("shooting iteration %d: endpoint residual %.3g", iters, norm)
    if norm > opts.endpoint_tol:
        raise ConvergenceError(f"shooting did not converge: endpoint residual {norm:.3g} after {iters} iterations")
    traj1, traj2, breaks = _assemble(shooter, u)
    report = criticality_report(traj1, traj2, boundary, opts.report_samples, quad_tol=opts.quad_tol,
                                iterations=iters, converged=True, r_min=opts.r_min)
    dE = [max(abs(bk["dE1"]), abs(bk["dE2"])) for bk in breaks]
    report.details.update({"endpoint_residual": norm, "integrations": shooter.n_runs, "breaks": len(breaks),
                           "max_break_dE": max(dE) if dE else 0.0})
    return ShootingResult(traj1, traj2, report, (u[:3].copy(), u[3:].copy()), norm, breaks)



def _fd_jacobian(shooter: _Shooter, u: np.ndarray, fd_step: float) -> np.ndarray:
    J = np.empty((6, 6))
    for i in range(6):
        d = fd_step * max(1.0, abs(u[i]))
        up = u.copy()
        up[i] += d
        um = u.copy()
        um[i] -= d
        J[:, i] = (shooter.residual(up) - shooter.residual(um)) / (2 * d)
    return J


def _line_search(shooter: _Shooter, u: np.ndarray, step: np.ndarray, norm: float):
    lam = 1.0
    while lam > 1e-4:
        try:
            F_new = shooter.residual(u + lam * step)
        except (ConvergenceError, ValueError) as exc:
            log.debug("shooting trial rejected: %s", exc)
            lam *= 0.5
            continue
        if np.linalg.norm(F_new) < norm:
            return lam, F_new
        lam *= 0.5
    return lam, None

def _initial(shooter: _Shooter, guess) -> np.ndarray:
    if guess is None:
        return shooter.initial_guess()
    if isinstance(guess, dict):
        b = shooter.b
        v1 = np.asarray(guess["v1"], dtype=float)
        v2 = np.asarray(guess["v2"], dtype=float)
        P = shooter.initial_guess()
        base1 = (shooter.x1_end - b.x_O1) / (b.t_L2_minus - b.t_O1)
        base2 = (b.x_L2 - shooter.x2_start) / (b.t_L2 - b.t_O1_plus)
        P[:3] += b.m1 * (lorentz_gamma(v1) * v1 - lorentz_gamma(base1) * base1)
        P[3:] += b.m2 * (lorentz_gamma(v2) * v2 - lorentz_gamma(base2) * base2)
        return P
    P1, P2 = guess
    return np.concatenate([np.asarray(P1, dtype=float), np.asarray(P2, dtype=float)])


def _assemble(shooter: _Shooter, u: np.ndarray):
    b = shooter.b
    _, phases = shooter.run(u[:3], u[3:], dense=True)
    rows1, rows2 = [], []
    total = b.t_L2_minus - b.t_O1
    for ph in phases:
        length = ph.t_end - ph.t_start
        n = max(2, int(math.ceil(max(shooter.opts.min_samples * length / total,
                                      shooter.opts.samples_per_unit * length))))
        ts = np.linspace(ph.t_start, ph.t_end, n + 1)
        dyn = _Dynamics(b, ph.kp, ph.kf, shooter.opts.r_min)
        for j, t in enumerate(ts):
            # exact endpoint states avoid dense-output round-off at the phase ends
            y = ph.sol.y[:, 0] if j == 0 else ph.sol.y[:, -1] if j == n else ph.sol.sol(t)
            _, info = dyn.rates(float(t), y, full=True)
            rows1.append((float(t), y[0:3].copy(), info["v1"], info["E1"]))
            rows2.append((info["t2"], y[6:9].copy(), info["v2"], info["E2"]))
    traj1, jumps1 = _build(rows1, b.t_O1, b.t_L2_minus, b.x_O1, shooter.x1_end)
    traj2, jumps2 = _build(rows2, b.t_O1_plus, b.t_L2, shooter.x2_start, b.x_L2)
    breaks = [{"t1": j1[0], "t2": j2[0], "dv1": j1[1], "dv2": j2[1], "dE1": j1[2], "dE2": j2[2]}
              for j1, j2 in zip(jumps1, jumps2)]
    full1, full2 = b.assemble(traj1, traj2)
    return full1, full2, breaks


def _build(rows, t_lo, t_hi, x_lo, x_hi):
    """Hermite nodes from samples; a repeated time becomes one node with two velocities."""
    times, xs, vl, vr, energies, jumps = [], [], [], [], [], []
    for t, x, v, E in rows:
        if times and abs(t - times[-1]) <= 1e-12 * (1 + abs(t)):
            jumps.append((t, float(np.linalg.norm(v - vl[-1])), float(E - energies[-1])))
            vr[-1] = v
            continue
        times.append(t)
        xs.append(x)
        vl.append(v)
        vr.append(v)
        energies.append(E)
    times[0], xs[0] = t_lo, np.asarray(x_lo, dtype=float)
    times[-1], xs[-1] = t_hi, np.asarray(x_hi, dtype=float)
    return Trajectory(np.array(times), np.array(xs), np.array(vl), np.array(vr)), jumps


__all__ = ["ShootingOptions", "ShootingResult", "ShootingState", "check_shortest", "shoot_shortest_boundary"]
