"""Variational two-body electrodynamics with retarded and advanced interactions.

Worldlines are piecewise cubic Hermite curves whose velocities may jump at
nodes.  The package evaluates the two-body action and its first variation,
solves boundary-value problems by direct minimization or by shooting, finds
circular orbits, and reports how close a candidate is to criticality.
"""

from .action import ActionBreakdown, el_residual, evaluate_action, gateaux_derivative, we_residuals
from .errors import (
    BoundaryDataError,
    CollisionError,
    ConfigError,
    ConvergenceError,
    InvalidPerturbationError,
    NotANodeError,
    NotShortestBoundaryError,
    SpanExhaustedError,
    SuperluminalError,
    TimeOutOfRangeError,
    TooCloseToNodeError,
    VaremError,
)
from .fourspace import MonotoneMap, ParamTrajectory, lift, tilde_eval
from .lagrangian import ParticleState, evaluate, legendre_transform, momentum, partial_lagrangian
from .lightcone import solve_deviating_argument
from .solver import (
    CriticalityReport,
    Discretization,
    SolverOptions,
    criticality_report,
    find_circular_orbit,
    minimize_action,
    shoot_shortest_boundary,
)
from .trajectory import BoundaryData, CircularTrajectory, Trajectory, build_sewing_grid

__version__ = "0.1.0"

__all__ = [
    "ActionBreakdown",
    "BoundaryData",
    "BoundaryDataError",
    "CircularTrajectory",
    "CollisionError",
    "ConfigError",
    "ConvergenceError",
    "CriticalityReport",
    "Discretization",
    "InvalidPerturbationError",
    "MonotoneMap",
    "NotANodeError",
    "NotShortestBoundaryError",
    "ParamTrajectory",
    "ParticleState",
    "SolverOptions",
    "SpanExhaustedError",
    "SuperluminalError",
    "TimeOutOfRangeError",
    "TooCloseToNodeError",
    "Trajectory",
    "VaremError",
    "build_sewing_grid",
    "criticality_report",
    "el_residual",
    "evaluate",
    "evaluate_action",
    "find_circular_orbit",
    "gateaux_derivative",
    "legendre_transform",
    "lift",
    "minimize_action",
    "momentum",
    "partial_lagrangian",
    "shoot_shortest_boundary",
    "solve_deviating_argument",
    "tilde_eval",
    "we_residuals",
]
