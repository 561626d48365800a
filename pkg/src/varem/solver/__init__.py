"""Solvers for the two-body boundary-value problem and their certificates."""

from .minimize import Discretization, MinimizeResult, SolverOptions, minimize_action, sewing_times
from .orbits import CircularOrbit, find_circular_orbit
from .report import CriticalityReport, criticality_report
from .shooting import ShootingOptions, ShootingResult, ShootingState, check_shortest, shoot_shortest_boundary

__all__ = [
    "CircularOrbit",
    "CriticalityReport",
    "Discretization",
    "MinimizeResult",
    "ShootingOptions",
    "ShootingResult",
    "ShootingState",
    "SolverOptions",
    "check_shortest",
    "criticality_report",
    "find_circular_orbit",
    "minimize_action",
    "sewing_times",
    "shoot_shortest_boundary",
]
