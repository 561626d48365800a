"""Partial Lagrangians, momenta, Legendre transforms and spatial gradients.

Units: ``c = 1``, charges ``e1 = -1`` and ``e2 = +1``.  For particle ``i`` with
partner ``j`` the partial Lagrangian is::

    L_i = M_i + I^- + I^+
    M_i = m (1 - sqrt(1 - v^2))
    I^pm = (1 - v . v_pm) / (2 D_pm),   D_pm = r_pm (1 pm n_pm . v_pm)

and equivalently ``L_i = M_i - v . A + U`` with the potentials ``A`` and
``U`` collecting the two retarded/advanced terms.

Every function here accepts a single state or batches (leading axis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lightcone import R_MIN, LightConeSolution, solve_deviating_argument
from .trajectory import Path


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def lorentz_gamma(v) -> np.ndarray:
    """``1/sqrt(1 - |v|^2)`` written as ``1/sqrt((1-|v|)(1+|v|))``."""
    speed = np.linalg.norm(v, axis=-1)
    return 1.0 / np.sqrt((1.0 - speed) * (1.0 + speed))


def velocity_from_momentum(p, mass) -> np.ndarray:
    """Invert ``p = m gamma v``: ``v = p / sqrt(m^2 + |p|^2)`` (always sub-luminal)."""
    p = np.asarray(p, dtype=float)
    return p / np.sqrt(mass * mass + _dot(p, p))[..., None]


@dataclass(frozen=True)
class ParticleState:
    """Position and velocity of particle ``index`` at time ``t``."""

    t: float
    x: np.ndarray
    v: np.ndarray
    mass: float
    index: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if np.any(np.linalg.norm(self.v, axis=-1) >= 1.0):
            raise ValueError("particle state must be sub-luminal")


@dataclass(frozen=True)
class InteractionTerm:
    """One retarded or advanced interaction term and its first derivatives."""

    sign: int
    I: np.ndarray
    D: np.ndarray
    A: np.ndarray
    U: np.ndarray
    dt_dx: np.ndarray
    dt_dt: np.ndarray
    dD_dx: np.ndarray
    dD_dt: np.ndarray
    dI_dx: np.ndarray
    dI_dt: np.ndarray
    dA_dt: np.ndarray  # total derivative along the particle's own motion


def interaction_term(v_i, sign: int, r, n, v_j, a_j, a_i=None) -> InteractionTerm:
    """Evaluate ``I^pm`` and its derivatives from solved light-cone data.

    ``a_i`` is not needed; the total derivative ``dA/dt`` only involves the
    partner acceleration ``a_j`` and the own velocity ``v_i``.
    """
    v_i = np.asarray(v_i, dtype=float)
    r = np.asarray(r, dtype=float)
    den = 1.0 + sign * _dot(n, v_j)
    D = r * den
    I = (1.0 - _dot(v_i, v_j)) / (2.0 * D)
    A = v_j / (2.0 * D)[..., None]
    U = 1.0 / (2.0 * D)
    dt_dx = sign * n / den[..., None]
    dt_dt = 1.0 / den
    K = 1.0 - _dot(v_j, v_j) + r * _dot(n, a_j)
    # D = sign [(t_j - t) + (x_i - x_j(t_j)) . v_j(t_j)]
    dD_dx = sign * (K[..., None] * dt_dx + v_j)
    dD_dt = sign * (K * dt_dt - 1.0)
    via = _dot(v_i, a_j)
    dI_dx = -(I / D)[..., None] * dD_dx - (via / (2.0 * D))[..., None] * dt_dx
    dI_dt = -(I / D) * dD_dt - via / (2.0 * D) * dt_dt
    rho = dt_dt + _dot(v_i, dt_dx)
    d_dot = dD_dt + _dot(dD_dx, v_i)
    dA_dt = (a_j * rho[..., None]) / (2.0 * D)[..., None] - v_j * (d_dot / (2.0 * D * D))[..., None]
    return InteractionTerm(sign, I, D, A, U, dt_dx, dt_dt, dD_dx, dD_dt, dI_dx, dI_dt, dA_dt)


def term_from_solution(v_i, sol: LightConeSolution, side: str = "right") -> InteractionTerm:
    return interaction_term(v_i, sol.sign, sol.r, sol.n, sol.velocity(side), sol.acceleration(side))


@dataclass(frozen=True)
class LagrangianEval:
    """All partial-Lagrangian quantities of one particle at one (or many) times.

    ``L`` is the sum ``M + I_minus + I_plus``; ``L_alt`` is ``M - v.A + U``.
    ``E`` is the closed form ``m gamma - m - U`` and ``E_alt`` is
    ``v . P - L``.
    """

    M: np.ndarray
    I_minus: np.ndarray
    I_plus: np.ndarray
    L: np.ndarray
    L_alt: np.ndarray
    A: np.ndarray
    U: np.ndarray
    P: np.ndarray
    E: np.ndarray
    E_alt: np.ndarray
    dL_dx: np.ndarray
    dL_dt: np.ndarray
    gamma: np.ndarray
    retarded: LightConeSolution
    advanced: LightConeSolution
    terms: tuple[InteractionTerm, InteractionTerm]


def kinetic(v, mass) -> np.ndarray:
    """``m (1 - sqrt(1 - v^2))`` without cancellation at small speeds."""
    v2 = _dot(np.asarray(v, dtype=float), np.asarray(v, dtype=float))
    return mass * v2 / (1.0 + np.sqrt(1.0 - v2))


def evaluate(t, x, v, mass: float, other: Path, *, side: str = "right", r_min: float = R_MIN,
             retarded: LightConeSolution | None = None,
             advanced: LightConeSolution | None = None) -> LagrangianEval:
    """Evaluate the partial Lagrangian of a particle against a fixed partner.

    ``side`` selects the one-sided partner data when a light-cone image lands
    on a partner node.  Pre-solved light-cone solutions may be passed in.
    """
    v = np.asarray(v, dtype=float)
    if retarded is None:
        retarded = solve_deviating_argument(other, t, x, -1, r_min=r_min)
    if advanced is None:
        advanced = solve_deviating_argument(other, t, x, +1, r_min=r_min)
    minus = term_from_solution(v, retarded, side)
    plus = term_from_solution(v, advanced, side)
    M = kinetic(v, mass)
    gamma = lorentz_gamma(v)
    A = minus.A + plus.A
    U = minus.U + plus.U
    L = M + minus.I + plus.I
    L_alt = M - _dot(v, A) + U
    P = mass * gamma[..., None] * v - A
    v2 = _dot(v, v)
    E = mass * gamma * gamma * v2 / (gamma + 1.0) - U
    E_alt = _dot(v, P) - L
    return LagrangianEval(
        M=M, I_minus=minus.I, I_plus=plus.I, L=L, L_alt=L_alt, A=A, U=U, P=P, E=E, E_alt=E_alt,
        dL_dx=minus.dI_dx + plus.dI_dx, dL_dt=minus.dI_dt + plus.dI_dt, gamma=gamma,
        retarded=retarded, advanced=advanced, terms=(minus, plus),
    )


def _eval_state(state: ParticleState, other: Path, side: str = "right", r_min: float = R_MIN) -> LagrangianEval:
    return evaluate(state.t, state.x, state.v, state.mass, other, side=side, r_min=r_min)


def kinetic_term(state: ParticleState) -> float:
    return kinetic(state.v, state.mass)


def interaction_terms(state: ParticleState, other: Path, *, r_min: float = R_MIN):
    """``(I_minus, I_plus, retarded, advanced)`` for ``state`` against ``other``."""
    ev = _eval_state(state, other, r_min=r_min)
    return ev.I_minus, ev.I_plus, ev.retarded, ev.advanced


def potentials(state: ParticleState, other: Path, *, r_min: float = R_MIN):
    """Vector and scalar potentials ``(A, U)`` felt by ``state``."""
    ev = _eval_state(state, other, r_min=r_min)
    return ev.A, ev.U


def partial_lagrangian(state: ParticleState, other: Path, *, r_min: float = R_MIN) -> LagrangianEval:
    return _eval_state(state, other, r_min=r_min)


def momentum(state: ParticleState, other: Path, *, r_min: float = R_MIN) -> np.ndarray:
    """Canonical momentum ``m gamma v - A``."""
    return _eval_state(state, other, r_min=r_min).P


def legendre_transform(state: ParticleState, other: Path, *, r_min: float = R_MIN) -> float:
    """``v . dL/dv - L``, evaluated through the closed form ``m gamma - m - U``."""
    return _eval_state(state, other, r_min=r_min).E


def grad_x(state: ParticleState, other: Path, *, r_min: float = R_MIN) -> np.ndarray:
    """Spatial gradient of the partial Lagrangian, partner worldline held fixed."""
    return _eval_state(state, other, r_min=r_min).dL_dx
