"""Parametrized worldlines ``s -> (t(s), x(s))`` and the tilde Lagrangians.

Each particle's time becomes a strictly increasing function of a free
parameter.  The tilde Lagrangian is homogeneous of degree one in
``(t', x')``, so it equals ``t' L`` and the action is unchanged by the lift.
The zeroth momentum component is minus the Legendre transform ``E``, and
the time component of the four-dimensional Euler-Lagrange equation follows
from the spatial one.  This module is a verification layer: nothing is
minimized here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .action import fd_step, integrand_breaks, kink_set
from .errors import CollisionError, SpanExhaustedError, TimeOutOfRangeError, TooCloseToNodeError
from .lagrangian import evaluate
from .lightcone import R_MIN, ROOT_TOL, monotone_root
from .trajectory import BoundaryData, Path, _hermite_basis

T_PRIME_MIN = 0.1
T_PRIME_MAX = 10.0


def _dot(a, b):
    return np.sum(a * b, axis=-1)


class MonotoneMap:
    """Piecewise-cubic Hermite map ``s -> t(s)`` with ``t' > 0``.

    Slopes may jump at the nodes (``slope_left``/``slope_right``), so ``t'``
    is of bounded variation.  ``t'`` is confined to ``[t_prime_min,
    t_prime_max]`` on every segment.
    """

    def __init__(self, s_nodes, t_nodes, slope_left, slope_right=None, *,
                 t_prime_min: float = T_PRIME_MIN, t_prime_max: float = T_PRIME_MAX):
        s = np.array(s_nodes, dtype=float)
        t = np.array(t_nodes, dtype=float)
        dl = np.array(slope_left, dtype=float)
        dr = dl.copy() if slope_right is None else np.array(slope_right, dtype=float)
        if s.ndim != 1 or s.size < 2 or not (t.shape == dl.shape == dr.shape == s.shape):
            raise ValueError("need at least two nodes with matching values and slopes")
        if np.any(np.diff(s) <= 0):
            raise ValueError("parameter nodes must be strictly increasing")
        self.s = s
        self.t = t
        self.slope_left = dl
        self.slope_right = dr
        for arr in (s, t, dl, dr):
            arr.setflags(write=False)
        lo, hi = self._slope_range()
        if lo < t_prime_min * (1 - 1e-12) or hi > t_prime_max * (1 + 1e-12):
            raise ValueError(f"t' ranges over [{lo:.6g}, {hi:.6g}], outside [{t_prime_min}, {t_prime_max}]")

    def _slope_range(self) -> tuple[float, float]:
        lo, hi = np.inf, -np.inf
        for k in range(self.s.size - 1):
            h = self.s[k + 1] - self.s[k]
            # t'(u) is a quadratic on the segment; check ends and the vertex
            cand = [self._seg_deriv(k, np.array([0.0, 1.0]), 1)]
            d = (self.t[k + 1] - self.t[k]) / h
            c2 = (3 * d - 2 * self.slope_right[k] - self.slope_left[k + 1]) / h
            c3 = (-2 * d + self.slope_right[k] + self.slope_left[k + 1]) / (h * h)
            if c3 != 0.0:
                uv = -c2 / (3 * c3) / h
                if 0.0 < uv < 1.0:
                    cand.append(self._seg_deriv(k, np.array([uv]), 1))
            vals = np.concatenate(cand)
            lo, hi = min(lo, vals.min()), max(hi, vals.max())
        return float(lo), float(hi)

    def _seg_deriv(self, k: int, u: np.ndarray, deriv: int) -> np.ndarray:
        h = self.s[k + 1] - self.s[k]
        b00, b10, b01, b11 = _hermite_basis(u, deriv)
        val = b00 * self.t[k] + b01 * self.t[k + 1] + h * (b10 * self.slope_right[k] + b11 * self.slope_left[k + 1])
        return val / h ** deriv

    @classmethod
    def identity(cls, s_start: float, s_end: float) -> "MonotoneMap":
        return cls.affine(1.0, 0.0, s_start, s_end)

    @classmethod
    def affine(cls, scale: float, offset: float, s_start: float, s_end: float, **kw) -> "MonotoneMap":
        """``t(s) = scale * s + offset``."""
        s = np.array([s_start, s_end], dtype=float)
        return cls(s, scale * s + offset, [scale, scale], **kw)

    @classmethod
    def from_function(cls, func, deriv, s_nodes, **kw) -> "MonotoneMap":
        s = np.asarray(s_nodes, dtype=float)
        return cls(s, [func(x) for x in s], [deriv(x) for x in s], **kw)

    @classmethod
    def covering(cls, t_start: float, t_end: float, s_nodes, slopes_left, slopes_right=None) -> "MonotoneMap":
        """Map of ``[s_nodes[0], s_nodes[-1]]`` onto ``[t_start, t_end]`` with prescribed node slopes.

        Node values are obtained by integrating piecewise-linear slopes and the
        result is rescaled so the ends match.
        """
        s = np.asarray(s_nodes, dtype=float)
        dl = np.asarray(slopes_left, dtype=float)
        dr = dl if slopes_right is None else np.asarray(slopes_right, dtype=float)
        inc = 0.5 * (dr[:-1] + dl[1:]) * np.diff(s)
        t = np.concatenate([[0.0], np.cumsum(inc)])
        scale = (t_end - t_start) / t[-1]
        return cls(s, t_start + scale * t, scale * dl, scale * dr)

    @classmethod
    def random(cls, rng: np.random.Generator, t_start: float, t_end: float, n: int = 4,
               jumps: bool = True, spread: float = 0.6) -> "MonotoneMap":
        """Random monotone lift of ``[t_start, t_end]`` onto a parameter interval of the same length.

        Slopes are drawn in ``[1 - spread, 1 + spread]`` (optionally with jumps)
        and then rescaled; the result stays inside the default slope limits
        for ``spread < 0.9``.
        """
        s = np.linspace(t_start, t_end, n + 1)
        dl = rng.uniform(1 - spread, 1 + spread, n + 1)
        dr = rng.uniform(1 - spread, 1 + spread, n + 1) if jumps else dl
        dr[-1] = dl[-1]
        dl[0] = dr[0]
        # keep slopes of a segment comparable so t' stays positive inside it
        return cls.covering(t_start, t_end, s, dl, dr)

    @property
    def s_start(self) -> float:
        return float(self.s[0])

    @property
    def s_end(self) -> float:
        return float(self.s[-1])

    @property
    def kink_params(self) -> np.ndarray:
        return self.s[1:-1]

    def _index(self, s: np.ndarray, side: str) -> np.ndarray:
        if side == "right":
            k = np.searchsorted(self.s, s, side="right") - 1
        else:
            k = np.searchsorted(self.s, s, side="left") - 1
        return np.clip(k, 0, self.s.size - 2)

    def _eval(self, s, deriv: int, side: str) -> np.ndarray:
        s_arr = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s_arr)
        slack = 1e-12 * (1 + abs(self.s_start) + abs(self.s_end))
        if np.any(flat < self.s_start - slack) or np.any(flat > self.s_end + slack):
            raise TimeOutOfRangeError(f"parameter outside [{self.s_start}, {self.s_end}]")
        flat = np.clip(flat, self.s_start, self.s_end)
        k = self._index(flat, side)
        h = self.s[k + 1] - self.s[k]
        u = (flat - self.s[k]) / h
        b00, b10, b01, b11 = _hermite_basis(u, deriv)
        val = b00 * self.t[k] + b01 * self.t[k + 1] + h * (b10 * self.slope_right[k] + b11 * self.slope_left[k + 1])
        val = val / h ** deriv
        return val.reshape(s_arr.shape) if s_arr.ndim else float(val[0])

    def __call__(self, s, side: str = "right"):
        return self._eval(s, 0, side)

    def derivative(self, s, side: str = "right"):
        return self._eval(s, 1, side)

    def second_derivative(self, s, side: str = "right"):
        return self._eval(s, 2, side)

    def inverse(self, t, tol: float = 1e-14):
        """Parameter ``s`` with ``t(s) = t`` (vectorised)."""
        t_arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t_arr).astype(float)
        lo = np.full(flat.shape, self.s_start)
        hi = np.full(flat.shape, self.s_end)
        slack = 1e-12 * (1 + abs(self.t[0]) + abs(self.t[-1]))
        if np.any(flat < self.t[0] - slack) or np.any(flat > self.t[-1] + slack):
            raise TimeOutOfRangeError(f"time outside [{self.t[0]}, {self.t[-1]}]")
        flat = np.clip(flat, self.t[0], self.t[-1])

        def f(s, idx):
            return self._eval(s, 0, "right") - flat[idx], self._eval(s, 1, "right")

        s0 = np.interp(flat, self.t, self.s)
        s, _ = monotone_root(f, lo, hi, s0, tol=tol * (1 + np.max(np.abs(flat))))
        return s.reshape(t_arr.shape) if t_arr.ndim else float(s[0])


class ParamTrajectory:
    """Worldline ``s -> (t(s), x(s))`` obtained by lifting a time-parametrized path."""

    def __init__(self, path: Path, reparam: MonotoneMap, mass: float = 1.0):
        tol = 1e-9 * (1 + abs(path.t_start) + abs(path.t_end))
        if reparam.t[0] < path.t_start - tol or reparam.t[-1] > path.t_end + tol:
            raise ValueError(
                f"reparametrization covers [{reparam.t[0]}, {reparam.t[-1]}], beyond the span "
                f"[{path.t_start}, {path.t_end}]"
            )
        self.path = path
        self.reparam = reparam
        self.mass = float(mass)

    @property
    def s_start(self) -> float:
        return self.reparam.s_start

    @property
    def s_end(self) -> float:
        return self.reparam.s_end

    def time(self, s, side: str = "right"):
        return self.reparam(s, side)

    def time_prime(self, s, side: str = "right"):
        return self.reparam.derivative(s, side)

    def position(self, s, side: str = "right") -> np.ndarray:
        return self.path.position(self.reparam(s, side), side=side)

    def position_prime(self, s, side: str = "right") -> np.ndarray:
        """``x'(s) = xdot(t(s)) t'(s)``."""
        tp = np.asarray(self.reparam.derivative(s, side))
        return self.path.velocity(self.reparam(s, side), side=side) * tp[..., None]

    def velocity(self, s, side: str = "right") -> np.ndarray:
        """``xdot = x'/t'`` (the chain rule)."""
        tp = np.asarray(self.reparam.derivative(s, side))
        return self.position_prime(s, side) / tp[..., None]

    def param_of_time(self, t):
        return self.reparam.inverse(t)

    def kink_params(self, other: "ParamTrajectory | None" = None) -> np.ndarray:
        """Parameters where the tilde Lagrangian may be non-smooth."""
        times = np.asarray(self.path.kink_times) if other is None else kink_set(self.path, other.path)
        lo, hi = self.reparam.t[0], self.reparam.t[-1]
        times = times[(times > lo) & (times < hi)]
        mapped = self.reparam.inverse(times) if times.size else np.empty(0)
        return np.unique(np.concatenate([self.reparam.kink_params, mapped]))


def lift(traj: Path, reparam: MonotoneMap, mass: float = 1.0) -> ParamTrajectory:
    """Lift a worldline to the four-space by ``x(s) = traj(t(s))``."""
    return ParamTrajectory(traj, reparam, mass)


@dataclass(frozen=True)
class ParamLightCone:
    """Solution ``s_j`` of ``t_j(s_j) = t_i(s) + sign |x_i(s) - x_j(s_j)|``."""

    sign: int
    s_dev: float
    t_dev: float
    r: float
    n: np.ndarray
    t_prime_dev: float
    x_prime_dev: np.ndarray
    residual: float


def _param_cone(other: ParamTrajectory, t_i: np.ndarray, x_i: np.ndarray, sign: int, tol: float):
    lo = np.full(t_i.shape, other.s_start)
    hi = np.full(t_i.shape, other.s_end)

    def f(s, idx):
        diff = x_i[idx] - other.position(s)
        r = np.linalg.norm(diff, axis=-1)
        n = diff / np.where(r > 0, r, 1.0)[:, None]
        val = other.time(s) - t_i[idx] - sign * r
        return val, other.time_prime(s) + sign * _dot(n, other.position_prime(s))

    idx = np.arange(t_i.size)
    f_lo, _ = f(lo, idx)
    f_hi, _ = f(hi, idx)
    bad = (f_lo > tol) | (f_hi < -tol)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SpanExhaustedError(
            f"{'advanced' if sign > 0 else 'retarded'} image of t={t_i[k]!r} outside the partner parameter span"
        )
    path = other.path
    r0 = np.linalg.norm(x_i - path.position(np.clip(t_i, path.t_start, path.t_end)), axis=-1)
    s0 = other.param_of_time(np.clip(t_i + sign * r0, other.reparam.t[0], other.reparam.t[-1]))
    return monotone_root(f, lo, hi, s0, tol=tol)


def solve_param_light_cone(other: ParamTrajectory, t_i: float, x_i, sign: int, *,
                           side: str = "right", r_min: float = R_MIN, tol: float = ROOT_TOL) -> ParamLightCone:
    """Four-space light-cone condition solved for the partner parameter.

    ``f(s) = t_j(s) - t_i - sign |x_i - x_j(s)|`` is increasing with slope
    ``t_j' + sign n.x_j' > 0``, so the monotone Newton solver applies.
    """
    x_i = np.asarray(x_i, dtype=float)
    s, res = _param_cone(other, np.array([float(t_i)]), x_i.reshape(1, 3), sign, tol)
    s = float(s[0])
    diff = x_i - other.position(s)
    r = float(np.linalg.norm(diff))
    if r < r_min:
        raise CollisionError(f"separation {r:.3g} below r_min={r_min:g}")
    return ParamLightCone(sign, s, float(other.time(s)), r, diff / r, float(other.time_prime(s, side)),
                          other.position_prime(s, side), float(res[0]))


def tilde_terms(p_i: ParamTrajectory, other: ParamTrajectory, s, *, r_min: float = R_MIN,
                tol: float = ROOT_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(M~, I~-, I~+)`` at an array of parameters."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.asarray(p_i.time(s))
    x = p_i.position(s)
    tp = np.asarray(p_i.time_prime(s))
    xp = p_i.position_prime(s)
    xp2 = _dot(xp, xp)
    xn = np.sqrt(xp2)
    M = p_i.mass * xp2 / (tp + np.sqrt((tp - xn) * (tp + xn)))
    out = [M]
    for sign in (-1, 1):
        sj, _ = _param_cone(other, t, x, sign, tol)
        diff = x - other.position(sj)
        r = np.linalg.norm(diff, axis=-1)
        if np.any(r < r_min):
            raise CollisionError(f"separation {r.min():.3g} below r_min={r_min:g}")
        n = diff / r[:, None]
        tpj = np.asarray(other.time_prime(sj))
        xpj = other.position_prime(sj)
        out.append((tp * tpj - _dot(xp, xpj)) / (2.0 * r * (tpj + sign * _dot(n, xpj))))
    return out[0], out[1], out[2]


def radon_nikodym_s(sol: ParamLightCone, t_prime_i: float, x_prime_i) -> float:
    """``d s_j / d s_i = (t_i' + sign n.x_i') / (t_j' + sign n.x_j')``."""
    num = t_prime_i + sol.sign * float(np.dot(sol.n, x_prime_i))
    den = sol.t_prime_dev + sol.sign * float(np.dot(sol.n, sol.x_prime_dev))
    return num / den


@dataclass(frozen=True)
class TildeEval:
    """Tilde Lagrangian and four-momentum of one particle at one parameter value."""

    M: float
    I_minus: float
    I_plus: float
    L: float
    P: np.ndarray
    P0: float
    t: float
    x: np.ndarray
    t_prime: float
    x_prime: np.ndarray
    retarded: ParamLightCone
    advanced: ParamLightCone

    @property
    def velocity(self) -> np.ndarray:
        return self.x_prime / self.t_prime


def tilde_eval(p_i: ParamTrajectory, other: ParamTrajectory, s: float, *, side: str = "right",
               r_min: float = R_MIN) -> TildeEval:
    """Evaluate the tilde partial Lagrangian of ``p_i`` against ``other`` at ``s``."""
    t = float(p_i.time(s, side))
    x = p_i.position(s, side)
    tp = float(p_i.time_prime(s, side))
    xp = p_i.position_prime(s, side)
    if tp <= 0:
        raise ValueError("t' must be positive")
    m = p_i.mass
    xp2 = float(np.dot(xp, xp))
    root = math.sqrt((tp - math.sqrt(xp2)) * (tp + math.sqrt(xp2)))
    M = m * xp2 / (tp + root)
    I = {}
    P = m * xp / root
    P0 = m - m * tp / root
    sols = {}
    for sign in (-1, 1):
        sol = solve_param_light_cone(other, t, x, sign, side=side, r_min=r_min)
        sols[sign] = sol
        den = 2.0 * sol.r * (sol.t_prime_dev + sign * float(np.dot(sol.n, sol.x_prime_dev)))
        I[sign] = (tp * sol.t_prime_dev - float(np.dot(xp, sol.x_prime_dev))) / den
        P = P - sol.x_prime_dev / den
        P0 = P0 + sol.t_prime_dev / den
    return TildeEval(M=M, I_minus=I[-1], I_plus=I[1], L=M + I[-1] + I[1], P=P, P0=P0, t=t, x=x,
                     t_prime=tp, x_prime=xp, retarded=sols[-1], advanced=sols[1])


def time_eval(p_i: ParamTrajectory, other: ParamTrajectory, s: float, *, side: str = "right", r_min: float = R_MIN):
    """The time-parametrized Lagrangian evaluation at the point ``s`` of the lift."""
    t = float(p_i.time(s, side))
    return evaluate(t, p_i.path.position(t, side=side), p_i.path.velocity(t, side=side), p_i.mass, other.path,
                    side=side, r_min=r_min)


def legendre_identity_residual(p_i: ParamTrajectory, other: ParamTrajectory, s: float, *,
                               r_min: float = R_MIN) -> float:
    """``|P0 + (v.P - L)|`` with all quantities from the tilde layer and ``v = x'/t'``.

    ``v.P - L`` is assembled from ``L = L~/t'`` and the spatial tilde momentum,
    so the check does not reuse the closed form ``m gamma - m - U``.
    """
    te = tilde_eval(p_i, other, s, r_min=r_min)
    legendre = float(np.dot(te.velocity, te.P)) - te.L / te.t_prime
    return abs(te.P0 + legendre)


@dataclass(frozen=True)
class RedundancyCheck:
    """Time-component versus spatial Euler-Lagrange residuals at one parameter value.

    ``time_residual`` is ``dL~/dt - dP0/ds`` and ``spatial_residual`` the norm
    of ``dL~/dx - dP~/ds``.  The time residual equals ``-v`` dotted with the
    spatial residual, so it is bounded by ``C`` times the spatial one with
    ``C = (1 + |v|) gamma``.
    """

    time_residual: float
    spatial_residual: float
    C: float
    speed: float

    @property
    def excess(self) -> float:
        """``|time| - C |spatial|``; non-positive up to finite-difference error."""
        return abs(self.time_residual) - self.C * self.spatial_residual

    def holds(self, tol: float = 1e-8) -> bool:
        return self.excess <= tol


def time_component_redundancy(p_i: ParamTrajectory, other: ParamTrajectory, s: float, *,
                              r_min: float = R_MIN) -> RedundancyCheck:
    """Evaluate both Euler-Lagrange residuals of the four-space problem at ``s``.

    ``d/ds`` of the tilde momenta uses five-point differences with a step
    adapted to the distance from the nearest kink parameter.
    """
    kinks = np.concatenate([p_i.kink_params(other), [p_i.s_start, p_i.s_end]])
    dist = float(np.min(np.abs(kinks - s)))
    h = fd_step(dist)
    if 2.0 * h >= dist:
        raise TooCloseToNodeError(f"s={s} is {dist:.3g} from a kink")
    tp = float(p_i.time_prime(s))
    ev = time_eval(p_i, other, s, r_min=r_min)
    stencil = s + h * np.array([-2.0, -1.0, 1.0, 2.0])
    evs = [tilde_eval(p_i, other, float(u), r_min=r_min) for u in stencil]
    w = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    dP0 = float(sum(wk * e.P0 for wk, e in zip(w, evs)))
    dP = sum(wk * e.P for wk, e in zip(w, evs))
    time_res = tp * float(ev.dL_dt) - dP0
    spatial = tp * ev.dL_dx - dP
    v = np.asarray(p_i.velocity(s))
    speed = float(np.linalg.norm(v))
    C = (1.0 + speed) / math.sqrt((1.0 - speed) * (1.0 + speed))
    return RedundancyCheck(time_res, float(np.linalg.norm(spatial)), C, speed)


def lifted_action(p1: ParamTrajectory, p2: ParamTrajectory, boundary: BoundaryData,
                  quad_tol: float = 1e-10, *, r_min: float = R_MIN) -> float:
    """The action integrated over the lift parameters (four integrals of the fokker form)."""
    b = boundary
    if (p1.mass, p2.mass) != (b.m1, b.m2):
        raise ValueError("lifted trajectories must carry the boundary masses")
    tol = quad_tol / 4.0

    def term(p_i, p_j, t_lo, t_hi, which, signs):
        s_lo, s_hi = p_i.param_of_time(t_lo), p_i.param_of_time(t_hi)
        tb = integrand_breaks(p_i.path, p_j.path, t_lo, t_hi, signs, r_min=r_min)
        breaks = np.concatenate([p_i.param_of_time(tb), p_i.reparam.kink_params])
        breaks = quadrature.clean_breaks(breaks, s_lo, s_hi)

        def f(ss):
            return tilde_terms(p_i, p_j, ss, r_min=r_min)[which]

        return quadrature.integrate(f, breaks, tol)[0]

    parts = [
        term(p2, p1, b.t_O1_plus, b.t_L2, 0, ()),
        term(p1, p2, b.t_O1, b.t_L2_minus, 0, ()),
        term(p1, p2, b.t_O1, b.t_L2_plus, 1, (-1,)),
        term(p1, p2, b.t_O1, b.t_L2_minus, 2, (1,)),
    ]
    return math.fsum(parts)
