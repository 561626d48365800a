"""Circular two-body orbits.

Both charges move on concentric circles about the origin with opposite
phase and a common angular frequency.  Along such an orbit the momentum
rotates rigidly, ``dP/dt = omega z x P``, so the Euler-Lagrange equations
reduce to a time-independent balance at ``t = 0``.  Its tangential
component cancels by time-reversal symmetry; the two radial components fix
the radius split and the frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import root

from ..action import el_residual
from ..errors import ConvergenceError, SuperluminalError
from ..lagrangian import evaluate
from ..lightcone import R_MIN
from ..trajectory import CircularTrajectory
from .report import CriticalityReport, criticality_report

_Z = np.array([0.0, 0.0, 1.0])
_X = np.array([1.0, 0.0, 0.0])


@dataclass
class CircularOrbit:
    omega: float
    r1: float
    r2: float
    traj1: CircularTrajectory
    traj2: CircularTrajectory
    report: CriticalityReport

    @property
    def separation(self) -> float:
        return self.r1 + self.r2

    def kepler_ratio(self, m1: float, m2: float) -> float:
        """``omega^2 mu l^3``, which tends to 1 in the Coulomb limit."""
        mu = m1 * m2 / (m1 + m2)
        return self.omega ** 2 * mu * self.separation ** 3

    def __iter__(self):
        # unpacks as (omega, r1, r2, report)
        return iter((self.omega, self.r1, self.r2, self.report))


def circular_pair(ell: float, r1: float, omega: float, span: float | None = None):
    """Worldlines of the opposite-phase circular ansatz with separation ``ell``."""
    span = 10.0 * ell + 100.0 if span is None else span
    t1 = CircularTrajectory(r1, omega, 0.0, t_start=-span, t_end=span)
    t2 = CircularTrajectory(ell - r1, omega, math.pi, t_start=-span, t_end=span)
    return t1, t2


def balance_residual(ell: float, r1: float, omega: float, m1: float, m2: float, *, r_min: float = R_MIN) -> np.ndarray:
    """Radial components of ``dL/dx - omega z x P`` for both particles at ``t = 0``."""
    traj1, traj2 = circular_pair(ell, r1, omega)
    out = np.empty(2)
    for k, (ti, tj, m) in enumerate(((traj1, traj2, m1), (traj2, traj1, m2))):
        x = ti.position(0.0)
        ev = evaluate(0.0, x, ti.velocity(0.0), m, tj, r_min=r_min)
        res = ev.dL_dx - omega * np.cross(_Z, ev.P)
        out[k] = res @ (x / np.linalg.norm(x))
    return out


def find_circular_orbit(ell: float, m1: float = 1.0, m2: float = 1.0, *, tol: float = 1e-13,
                        r_min: float = R_MIN, report_samples: int = 3) -> CircularOrbit:
    """Solve for the circular orbit of separation ``ell``.

    Unknowns are ``r1 / ell`` and ``omega sqrt(mu ell^3)``, both of order one
    and started from the Coulomb-limit values.  For equal masses ``r1 = r2``
    by symmetry and only ``omega`` is solved for.  Residuals are scaled by
    ``ell^2`` so they are of order one as well.
    """
    if not ell > r_min:
        raise ValueError(f"separation {ell} must exceed r_min={r_min}")
    if not (m1 > 0 and m2 > 0):
        raise ValueError("masses must be positive")
    mu = m1 * m2 / (m1 + m2)
    w_scale = 1.0 / math.sqrt(mu * ell ** 3)
    symmetric = m1 == m2

    def unpack(z):
        frac = 0.5 if symmetric else z[0]
        return frac * ell, z[-1] * w_scale

    def fun(z):
        r1, omega = unpack(z)
        try:
            res = balance_residual(ell, r1, omega, m1, m2, r_min=r_min) * ell ** 2
        except SuperluminalError:
            return np.full(z.size, 1e3)
        return res[:1] if symmetric else res

    z0 = np.array([1.0]) if symmetric else np.array([m2 / (m1 + m2), 1.0])
    sol = root(fun, z0, method="hybr", options={"xtol": tol})
    if not sol.success or np.max(np.abs(fun(sol.x))) > 1e-9:
        raise ConvergenceError(f"circular orbit not found for ell={ell}: {sol.message}")
    r1, omega = unpack(sol.x)
    traj1, traj2 = circular_pair(ell, r1, omega)
    window = (-ell, ell)
    report = criticality_report(traj1, traj2, None, report_samples, masses=(m1, m2), window=window,
                                iterations=int(sol.nfev), converged=True, r_min=r_min)
    el = max(float(np.linalg.norm(el_residual(traj1, traj2, None, p, 0.0, masses=(m1, m2), r_min=r_min)))
             for p in (1, 2))
    report.details.update({"el_residual_t0": el, "kepler_ratio": omega ** 2 * mu * ell ** 3,
                           "balance": fun(sol.x).tolist()})
    return CircularOrbit(omega, r1, ell - r1, traj1, traj2, report)


__all__ = ["CircularOrbit", "balance_residual", "circular_pair", "find_circular_orbit"]
