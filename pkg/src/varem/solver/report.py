"""Residual certificates for candidate solutions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..action import crossing_forces, el_residual, evaluate_action, kink_set, partner_images, snap_to_own_node, we_residuals
from ..errors import TooCloseToNodeError
from ..lagrangian import evaluate
from ..lightcone import R_MIN, solve_deviating_argument
from ..trajectory import BoundaryData, Path

DEFAULT_THRESHOLD = 1e-6


@dataclass
class CriticalityReport:
    """How close a pair of worldlines is to a critical point of the action.

    All residual fields are non-negative; ``None`` marks a quantity that was
    not computed (for instance the action of a global orbit).
    """

    action: float | None
    gradient_norm: float | None
    max_el_residual: float
    max_dP: float
    max_dE: float
    max_light_cone_residual: float
    tv_P: float
    iterations: int = 0
    converged: bool | None = None
    el_samples: int = 0
    we_nodes: int = 0
    details: dict = field(default_factory=dict)

    def is_critical(self, threshold: float = DEFAULT_THRESHOLD) -> bool:
        return max(self.max_el_residual, self.max_dP, self.max_dE) < threshold

    def to_dict(self) -> dict:
        return asdict(self)


def _merge(times: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    times = np.unique(np.asarray(times, dtype=float))
    if times.size < 2:
        return times
    keep = np.concatenate([[True], np.diff(times) > tol * (1 + np.abs(times[1:]))])
    return times[keep]


def node_times(traj_i: Path, traj_j: Path, lo: float, hi: float, *, r_min: float = R_MIN) -> np.ndarray:
    """Own kinks and partner-kink images strictly inside ``(lo, hi)``."""
    kinks = _merge(kink_set(traj_i, traj_j, r_min=r_min))
    slack = 1e-9 * (1 + abs(lo) + abs(hi))
    return kinks[(kinks > lo + slack) & (kinks < hi - slack)]


def el_sample_times(traj_i: Path, traj_j: Path, lo: float, hi: float, per_cell: int = 1,
                    *, r_min: float = R_MIN) -> np.ndarray:
    """Interior points of the smoothness cells of ``[lo, hi]``."""
    edges = np.concatenate([[lo], node_times(traj_i, traj_j, lo, hi, r_min=r_min), [hi]])
    frac = (np.arange(per_cell) + 0.5) / per_cell
    return (edges[:-1, None] + np.diff(edges)[:, None] * frac[None, :]).ravel()


def momentum_tv(traj_i: Path, traj_j: Path, mass: float, lo: float, hi: float, n: int,
                *, r_min: float = R_MIN) -> float:
    """Polygonal total variation of ``P(t)`` sampled at ``n + 1`` uniform times."""
    ts = np.linspace(lo, hi, n + 1)
    P = evaluate(ts, traj_i.position(ts), traj_i.velocity(ts), mass, traj_j, r_min=r_min).P
    return math.fsum(np.linalg.norm(np.diff(P, axis=0), axis=1))


def _ranges(traj1: Path, traj2: Path, boundary: BoundaryData | None, window=None):
    if boundary is not None:
        return boundary.free1, boundary.free2
    if window is None:
        raise ValueError("a sampling window is required without boundary data")
    return (window, window)


def criticality_report(traj1: Path, traj2: Path, boundary: BoundaryData | None, samples: int = 3, *,
                       masses: tuple[float, float] | None = None, window: tuple[float, float] | None = None,
                       tv_points: int = 400, quad_tol: float = 1e-10, gradient_norm: float | None = None,
                       iterations: int = 0, converged: bool | None = None, r_min: float = R_MIN) -> CriticalityReport:
    """Assemble the residual suite for a candidate solution.

    ``samples`` Euler-Lagrange probes are placed in every smoothness cell of
    each free range.  Without ``boundary`` (global orbits) the residuals are
    taken over ``window`` and ``masses`` must be given; no action is computed.
    """
    if boundary is not None:
        masses = (boundary.m1, boundary.m2)
    elif masses is None:
        raise ValueError("masses are required without boundary data")
    ranges = _ranges(traj1, traj2, boundary, window)
    el_max = 0.0
    n_el = 0
    dP_max = 0.0
    dE_max = 0.0
    n_we = 0
    lc_max = 0.0
    tv = 0.0
    per_particle = {}
    for particle, (lo, hi) in zip((1, 2), ranges):
        traj_i, traj_j = (traj1, traj2) if particle == 1 else (traj2, traj1)
        for t in el_sample_times(traj_i, traj_j, lo, hi, samples, r_min=r_min):
            try:
                res = el_residual(traj1, traj2, boundary, particle, float(t), masses=masses, r_min=r_min)
            except TooCloseToNodeError:
                continue
            el_max = max(el_max, float(np.linalg.norm(res)))
            n_el += 1
        nodes = node_times(traj_i, traj_j, lo, hi, r_min=r_min)
        f_times, forces = crossing_forces(traj_i, traj_j, lo, hi, r_min=r_min)
        p_dP = p_dE = p_corr = 0.0
        for t in nodes:
            dP, dE = _we(traj1, traj2, boundary, masses, particle, float(t), r_min)
            p_dP = max(p_dP, float(np.linalg.norm(dP)))
            p_dE = max(p_dE, abs(dE))
            # natural corner condition where a partner jump is seen: dP = F
            hit = np.abs(f_times - t) <= 1e-9 * (1 + abs(t))
            corr = dP - forces[hit].sum(axis=0) if np.any(hit) else dP
            p_corr = max(p_corr, float(np.linalg.norm(corr)))
            n_we += 1
        dP_max, dE_max = max(dP_max, p_dP), max(dE_max, p_dE)
        probe = np.linspace(lo, hi, 33)
        x = traj_i.position(probe)
        for sign in (-1, 1):
            sol = solve_deviating_argument(traj_j, probe, x, sign, r_min=r_min)
            lc_max = max(lc_max, float(np.max(np.abs(sol.residual))))
        p_tv = momentum_tv(traj_i, traj_j, masses[particle - 1], lo, hi, tv_points, r_min=r_min)
        tv += p_tv
        per_particle[particle] = {"max_dP": p_dP, "max_dP_minus_force": p_corr, "max_dE": p_dE, "tv_P": p_tv,
                                  "we_nodes": int(nodes.size)}
    action = None
    if boundary is not None:
        action = evaluate_action(traj1, traj2, boundary, quad_tol=quad_tol, r_min=r_min).S
        lc_max = max(lc_max, max(boundary.light_cone_residuals()))
    return CriticalityReport(action=action, gradient_norm=gradient_norm, max_el_residual=el_max, max_dP=dP_max,
                             max_dE=dE_max, max_light_cone_residual=lc_max, tv_P=tv, iterations=iterations,
                             converged=converged, el_samples=n_el, we_nodes=n_we,
                             details={"particles": per_particle,
                                      "max_dP_minus_force": max(v["max_dP_minus_force"] for v in per_particle.values())})


def _we(traj1, traj2, boundary, masses, particle, t, r_min):
    if boundary is not None:
        return we_residuals(traj1, traj2, boundary, particle, t, r_min=r_min)
    traj_i, traj_j = (traj1, traj2) if particle == 1 else (traj2, traj1)
    mass = masses[particle - 1]
    t = snap_to_own_node(traj_i, t)
    plus = evaluate(t, traj_i.position(t), traj_i.velocity(t, side="right"), mass, traj_j, side="right", r_min=r_min)
    minus = evaluate(t, traj_i.position(t), traj_i.velocity(t, side="left"), mass, traj_j, side="left", r_min=r_min)
    return plus.P - minus.P, float(plus.E - minus.E)


__all__ = ["CriticalityReport", "criticality_report", "momentum_tv", "node_times", "el_sample_times",
           "partner_images"]
