"""The two-body action functional, its first variation and pointwise residuals.

The action is a sum of four integrals over the particle times (kinetic terms
of both particles and the retarded/advanced interaction terms), available in
two forms: ``"aFokker"`` integrates both interaction terms over particle 1's
time and ``"L2"`` over particle 2's time.  The two forms agree under the
change of variables induced by the light-cone map.

Every integral is split into panels at the nodes of the integrated
trajectory and at the light-cone images of the partner's nodes, so that the
integrand is smooth on each panel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import (
    BoundaryDataError,
    InvalidPerturbationError,
    NotANodeError,
    TooCloseToNodeError,
)
from .lagrangian import evaluate, interaction_term, kinetic
from .lightcone import R_MIN, _dot, image_times, solve_deviating_argument
from .trajectory import BoundaryData, Path, Trajectory

QUAD_TOL = 1e-10
FORMS = ("aFokker", "L2")


def _pair(traj1: Path, traj2: Path, particle: int) -> tuple[Path, Path]:
    return (traj1, traj2) if particle == 1 else (traj2, traj1)


def partner_images(traj_i: Path, traj_j: Path, signs=(-1, 1), *, r_min: float = R_MIN) -> np.ndarray:
    """Times on ``traj_i`` whose light-cone images hit a kink of ``traj_j``.

    For a term read on the ``sign`` cone, the partner kink ``tau`` is reached
    when ``t_i`` is the image of ``tau`` on the opposite cone.
    """
    kinks = np.asarray(traj_j.kink_times)
    if kinks.size == 0 or not signs:
        return np.empty(0)
    out = [image_times(traj_j, traj_i, kinks, -s, r_min=r_min) for s in signs]
    return np.sort(np.concatenate(out))


def integrand_breaks(traj_i: Path, traj_j: Path, lo: float, hi: float, signs=(-1, 1), extra=(),
                     r_min: float = R_MIN) -> np.ndarray:
    pts = [np.asarray(traj_i.kink_times), partner_images(traj_i, traj_j, signs, r_min=r_min),
           np.asarray(extra, dtype=float)]
    return quadrature.clean_breaks(np.concatenate(pts), lo, hi)


def _interaction_integrand(traj_i: Path, traj_j: Path, sign: int, r_min: float):
    def f(t):
        x = traj_i.position(t)
        v = traj_i.velocity(t)
        sol = solve_deviating_argument(traj_j, t, x, sign, r_min=r_min)
        return interaction_term(v, sign, sol.r, sol.n, sol.v_dev, sol.a_dev).I
    return f


def _kinetic_integrand(traj: Path, mass: float):
    def f(t):
        return kinetic(traj.velocity(t), mass)
    return f


@dataclass
class ActionBreakdown:
    """Value of the action and its constituent integrals.

    ``fokker`` holds ``M1, M2, I12_minus, I12_plus`` and ``l2`` holds
    ``M1, M2, I21_plus, I21_minus``; either may be ``None`` when that form
    was not requested.
    """

    S: float
    form: str
    fokker: dict | None = None
    l2: dict | None = None
    error: float = 0.0
    errors: dict = field(default_factory=dict)

    @property
    def form_difference(self) -> float | None:
        if self.fokker is None or self.l2 is None:
            return None
        return math.fsum(self.fokker.values()) - math.fsum(self.l2.values())

    def to_dict(self) -> dict:
        out = {"S": self.S, "form": self.form, "error_estimate": self.error}
        if self.fokker is not None:
            out["aFokker"] = dict(self.fokker, S=math.fsum(self.fokker.values()))
        if self.l2 is not None:
            out["L2"] = dict(self.l2, S=math.fsum(self.l2.values()))
        if self.form_difference is not None:
            out["form_difference"] = self.form_difference
        out["term_errors"] = dict(self.errors)
        return out


def check_orbits(traj1: Path, traj2: Path, boundary: BoundaryData, tol: float = 1e-8) -> None:
    """Raise unless the worldlines cover the ranges the action needs."""
    need1 = (boundary.t_O1, boundary.t_L2_plus)
    need2 = (boundary.t_O1_minus, boundary.t_L2)
    for name, traj, (lo, hi) in (("particle 1", traj1, need1), ("particle 2", traj2, need2)):
        if not (traj.contains(lo) and traj.contains(hi)):
            raise BoundaryDataError(
                f"{name} spans [{traj.t_start}, {traj.t_end}] but the action needs [{lo}, {hi}]"
            )
    if not boundary.t_L2_minus > boundary.t_O1 or not boundary.t_L2 > boundary.t_O1_plus:
        raise BoundaryDataError("empty integration window")
    gap1 = np.linalg.norm(traj1.position(boundary.t_O1) - boundary.x_O1)
    gap2 = np.linalg.norm(traj2.position(boundary.t_L2) - boundary.x_L2)
    if max(gap1, gap2) > tol * (1 + np.linalg.norm(boundary.x_O1) + np.linalg.norm(boundary.x_L2)):
        raise BoundaryDataError(f"worldlines miss the boundary points by {max(gap1, gap2):.3g}")


def evaluate_action(traj1: Path, traj2: Path, boundary: BoundaryData, form: str = "aFokker",
                    quad_tol: float = QUAD_TOL, *, r_min: float = R_MIN) -> ActionBreakdown:
    """Evaluate the action in the ``"aFokker"`` form, the ``"L2"`` form, or ``"both"``.

    Each term is integrated to ``quad_tol / 4``, so a single form carries a
    total error estimate of at most ``quad_tol``.
    """
    if form not in ("aFokker", "L2", "both"):
        raise ValueError(f"unknown form {form!r}")
    check_orbits(traj1, traj2, boundary)
    b = boundary
    tol = quad_tol / 4.0
    errors: dict[str, float] = {}

    def run(name, func, traj_i, traj_j, lo, hi, signs):
        breaks = integrand_breaks(traj_i, traj_j, lo, hi, signs, r_min=r_min)
        val, err = quadrature.integrate(func, breaks, tol)
        errors[name] = err
        return val

    M1 = run("M1", _kinetic_integrand(traj1, b.m1), traj1, traj2, b.t_O1, b.t_L2_minus, ())
    M2 = run("M2", _kinetic_integrand(traj2, b.m2), traj2, traj1, b.t_O1_plus, b.t_L2, ())
    fokker = l2 = None
    if form in ("aFokker", "both"):
        fokker = {
            "M1": M1,
            "M2": M2,
            "I12_minus": run("I12_minus", _interaction_integrand(traj1, traj2, -1, r_min), traj1, traj2,
                             b.t_O1, b.t_L2_plus, (-1,)),
            "I12_plus": run("I12_plus", _interaction_integrand(traj1, traj2, +1, r_min), traj1, traj2,
                            b.t_O1, b.t_L2_minus, (1,)),
        }
    if form in ("L2", "both"):
        l2 = {
            "M1": M1,
            "M2": M2,
            "I21_plus": run("I21_plus", _interaction_integrand(traj2, traj1, +1, r_min), traj2, traj1,
                            b.t_O1_minus, b.t_L2, (1,)),
            "I21_minus": run("I21_minus", _interaction_integrand(traj2, traj1, -1, r_min), traj2, traj1,
                             b.t_O1_plus, b.t_L2, (-1,)),
        }
    main = fokker if fokker is not None else l2
    S = math.fsum(main.values())
    return ActionBreakdown(S=S, form=form, fokker=fokker, l2=l2, error=math.fsum(errors.values()), errors=errors)


def crossing_forces(traj_i: Path, traj_j: Path, lo: float, hi: float, *, r_min: float = R_MIN,
                    jump_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Point forces on particle ``i`` from partner velocity jumps.

    When the partner velocity jumps at ``tau``, the interaction integrand of
    particle ``i`` jumps at the time ``t*`` whose light-cone image is
    ``tau``.  Moving ``x_i`` moves ``t*``, which adds
    ``(I(t*+) - I(t*-)) sign n / (1 + sign n . v_i)`` (dotted with the
    variation at ``t*``) to the first variation.  Returns the times ``t*``
    inside ``(lo, hi)`` and the force vectors, shape ``(k, 3)``.
    """
    times, forces = [], []
    kinks = np.asarray(traj_j.kink_times)
    if kinks.size:
        jumps = np.linalg.norm(traj_j.velocity(kinks, side="right") - traj_j.velocity(kinks, side="left"), axis=-1)
        kinks = kinks[jumps > jump_tol]
    if kinks.size == 0:
        return np.empty(0), np.empty((0, 3))
    xj = traj_j.position(kinks)
    vj_r = traj_j.velocity(kinks, side="right")
    vj_l = traj_j.velocity(kinks, side="left")
    for sign in (-1, 1):
        t_star, kept = image_times(traj_j, traj_i, kinks, -sign, r_min=r_min, keep_mask=True)
        inside = (t_star > lo) & (t_star < hi)
        if not np.any(inside):
            continue
        t_star = t_star[inside]
        sel = np.nonzero(kept)[0][inside]
        xi = traj_i.position(t_star)
        vi = traj_i.velocity(t_star)
        diff = xi - xj[sel]
        r = np.linalg.norm(diff, axis=-1)
        n = diff / r[:, None]
        i_plus = (1.0 - _dot(vi, vj_r[sel])) / (2.0 * r * (1.0 + sign * _dot(n, vj_r[sel])))
        i_minus = (1.0 - _dot(vi, vj_l[sel])) / (2.0 * r * (1.0 + sign * _dot(n, vj_l[sel])))
        times.append(t_star)
        forces.append(((i_plus - i_minus) * sign / (1.0 + sign * _dot(n, vi)))[:, None] * n)
    if not times:
        return np.empty(0), np.empty((0, 3))
    return np.concatenate(times), np.concatenate(forces)


def gateaux_derivative(traj1: Path, traj2: Path, boundary: BoundaryData, perturbation: Trajectory,
                       particle: int, quad_tol: float = 1e-12, *, r_min: float = R_MIN) -> float:
    """First variation of the action along ``perturbation`` of one particle.

    ``perturbation`` is a variation ``b(t)`` living inside the particle's free
    range and vanishing at its own end times (it is extended by zero).  The
    returned value is ``int [dL/dx . b + P . db/dt] dt`` plus the point
    terms of :func:`crossing_forces` where partner velocity jumps are seen.
    """
    lo, hi = boundary.free_range(particle)
    slack = 1e-12 * (1 + abs(lo) + abs(hi))
    if perturbation.t_start < lo - slack or perturbation.t_end > hi + slack:
        raise InvalidPerturbationError(
            f"variation spans [{perturbation.t_start}, {perturbation.t_end}] outside free range [{lo}, {hi}]"
        )
    ends = (perturbation.position(perturbation.t_start), perturbation.position(perturbation.t_end))
    if max(np.linalg.norm(e) for e in ends) > 1e-12:
        raise InvalidPerturbationError("variation must vanish at its end times")
    traj_i, traj_j = _pair(traj1, traj2, particle)
    mass = boundary.mass(particle)

    def f(t):
        ev = evaluate(t, traj_i.position(t), traj_i.velocity(t), mass, traj_j, r_min=r_min)
        return (np.sum(ev.dL_dx * perturbation.position(t), axis=-1)
                + np.sum(ev.P * perturbation.velocity(t), axis=-1))

    breaks = integrand_breaks(traj_i, traj_j, perturbation.t_start, perturbation.t_end,
                              extra=perturbation.kink_times, r_min=r_min)
    val, _ = quadrature.integrate(f, breaks, quad_tol)
    t_star, forces = crossing_forces(traj_i, traj_j, perturbation.t_start, perturbation.t_end, r_min=r_min)
    if t_star.size:
        val += math.fsum(np.sum(forces * perturbation.position(t_star), axis=-1))
    return val


def kink_set(traj_i: Path, traj_j: Path, *, r_min: float = R_MIN) -> np.ndarray:
    """All times where the partial Lagrangian of particle ``i`` may be non-smooth.

    Trajectories are treated as immutable, so the result is cached on ``traj_i``.
    """
    cache = traj_i.__dict__.setdefault("_kink_cache", [])
    for other, rm, kinks in cache:
        if other is traj_j and rm == r_min:
            return kinks
    kinks = np.sort(np.concatenate([np.asarray(traj_i.kink_times), partner_images(traj_i, traj_j, r_min=r_min)]))
    kinks.flags.writeable = False
    cache.append((traj_j, r_min, kinks))
    return kinks


def fd_step(distance: float) -> float:
    """Finite-difference step for momentum derivatives, given the distance to the nearest kink."""
    return max(1e-5, 0.01 * min(distance, 10.0))


def momentum_rate(traj_i: Path, traj_j: Path, mass: float, t: float, h: float, *, r_min: float = R_MIN) -> np.ndarray:
    """Five-point centred derivative of the momentum along the worldline."""
    ts = t + h * np.array([-2.0, -1.0, 1.0, 2.0])
    P = evaluate(ts, traj_i.position(ts), traj_i.velocity(ts), mass, traj_j, r_min=r_min).P
    return (P[0] - 8.0 * P[1] + 8.0 * P[2] - P[3]) / (12.0 * h)


def el_residual(traj1: Path, traj2: Path, boundary: BoundaryData | None, particle: int, t: float,
                *, masses: tuple[float, float] | None = None, r_min: float = R_MIN) -> np.ndarray:
    """Euler-Lagrange residual ``dL/dx - dP/dt`` of one particle at a smooth time.

    With ``boundary=None`` the whole span of the particle counts as free and
    ``masses`` must be given (used for globally defined orbits).
    """
    traj_i, traj_j = _pair(traj1, traj2, particle)
    if boundary is None:
        if masses is None:
            raise ValueError("masses are required when no boundary data are given")
        lo, hi = traj_i.t_start, traj_i.t_end
        mass = float(masses[particle - 1])
    else:
        lo, hi = boundary.free_range(particle)
        mass = boundary.mass(particle)
    if not lo < t < hi:
        raise ValueError(f"t={t} is not interior to the free range [{lo}, {hi}]")
    kinks = np.concatenate([kink_set(traj_i, traj_j, r_min=r_min), [lo, hi]])
    dist = float(np.min(np.abs(kinks - t)))
    h = fd_step(dist)
    if 2.0 * h >= dist:
        raise TooCloseToNodeError(f"t={t} is {dist:.3g} from a kink; use we_residuals there")
    ev = evaluate(t, traj_i.position(t), traj_i.velocity(t), mass, traj_j, r_min=r_min)
    return ev.dL_dx - momentum_rate(traj_i, traj_j, mass, t, h, r_min=r_min)


def is_node(traj_i: Path, traj_j: Path, t: float, tol: float = 1e-9, *, r_min: float = R_MIN) -> bool:
    kinks = kink_set(traj_i, traj_j, r_min=r_min)
    return bool(kinks.size and np.min(np.abs(kinks - t)) <= tol * (1 + abs(t)))


def snap_to_own_node(traj_i: Path, t: float, tol: float = 1e-9) -> float:
    """Replace ``t`` by an own node time within ``tol`` so one-sided reads see the jump."""
    own = getattr(traj_i, "times", None)
    if own is None or not np.size(own):
        return t
    k = int(np.argmin(np.abs(own - t)))
    return float(own[k]) if abs(own[k] - t) <= tol * (1 + abs(t)) else t


def one_sided_eval(traj_i: Path, traj_j: Path, mass: float, t: float, side: str, *, r_min: float = R_MIN):
    return evaluate(t, traj_i.position(t), traj_i.velocity(t, side=side), mass, traj_j, side=side, r_min=r_min)


def we_residuals(traj1: Path, traj2: Path, boundary: BoundaryData, particle: int, node_time: float,
                 *, r_min: float = R_MIN) -> tuple[np.ndarray, float]:
    """Jumps ``(P(t+) - P(t-), E(t+) - E(t-))`` of momentum and Legendre transform at a node."""
    traj_i, traj_j = _pair(traj1, traj2, particle)
    if not is_node(traj_i, traj_j, node_time, r_min=r_min):
        raise NotANodeError(f"t={node_time} is neither a node nor a light-cone image of a partner node")
    mass = boundary.mass(particle)
    node_time = snap_to_own_node(traj_i, node_time)
    plus = one_sided_eval(traj_i, traj_j, mass, node_time, "right", r_min=r_min)
    minus = one_sided_eval(traj_i, traj_j, mass, node_time, "left", r_min=r_min)
    return plus.P - minus.P, float(plus.E - minus.E)
