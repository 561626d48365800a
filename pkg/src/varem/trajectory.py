"""Sub-luminal trajectories with velocities of bounded variation.

A :class:`Trajectory` is a chain of cubic Hermite segments.  Positions are
continuous at the nodes while the velocity is stored one-sided
(``v_left``/``v_right``) so it may jump there.  Inside a segment the velocity
is a quadratic polynomial, which makes the velocity a function of bounded
variation over the whole span.

All evaluation methods accept a scalar time (returning a ``(3,)`` array) or an
array of times (returning ``(n, 3)``).  At a node the ``side`` argument picks
the one-sided limit; ``"right"`` is the default everywhere in the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BoundaryDataError,
    SpanExhaustedError,
    SuperluminalError,
    TimeOutOfRangeError,
)

# relative slack used when matching node times
TIME_TOL = 1e-12

_GL20 = np.polynomial.legendre.leggauss(20)


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _check_side(side: str) -> None:
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")


class Path:
    """Common evaluation interface for particle worldlines ``t -> x(t)``."""

    t_start: float
    t_end: float

    def position(self, t, side: str = "right") -> np.ndarray:
        raise NotImplementedError

    def velocity(self, t, side: str = "right") -> np.ndarray:
        raise NotImplementedError

    def acceleration(self, t, side: str = "right") -> np.ndarray:
        raise NotImplementedError

    def position_velocity(self, t, side: str = "right") -> tuple[np.ndarray, np.ndarray]:
        return self.position(t, side), self.velocity(t, side)

    @property
    def kink_times(self) -> np.ndarray:
        """Interior times where the velocity or acceleration may jump."""
        return np.empty(0)

    @property
    def speed_bound(self) -> float:
        """An upper bound on the speed over the span (used for bracketing)."""
        raise NotImplementedError

    @property
    def span(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        slack = TIME_TOL * (1.0 + np.abs(t))
        return (t >= self.t_start - slack) & (t <= self.t_end + slack)

    def _check_range(self, t: np.ndarray) -> np.ndarray:
        inside = self.contains(t)
        if not np.all(inside):
            bad = t[~inside] if t.ndim else t
            raise TimeOutOfRangeError(
                f"time {np.ravel(bad)[0]!r} outside span [{self.t_start}, {self.t_end}]"
            )
        return np.minimum(np.maximum(t, self.t_start), self.t_end)


def _hermite_basis(s: np.ndarray, deriv: int):
    if deriv == 0:
        s2 = s * s
        s3 = s2 * s
        return 2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2
    if deriv == 1:
        s2 = s * s
        return 6 * s2 - 6 * s, 3 * s2 - 4 * s + 1, -6 * s2 + 6 * s, 3 * s2 - 2 * s
    if deriv == 2:
        return 12 * s - 6, 6 * s - 4, -12 * s + 6, 6 * s - 2
    if deriv == 3:
        one = np.ones_like(s)
        return 12 * one, 6 * one, -12 * one, 6 * one
    raise ValueError("deriv must be 0..3")


def hermite_eval(x0, v0, x1, v1, h, s, deriv: int = 0) -> np.ndarray:
    """Evaluate a cubic Hermite segment (or one of its derivatives) in local ``s``.

    ``x0, v0, x1, v1`` have shape ``(n, 3)`` (or broadcast), ``h`` and ``s``
    shape ``(n,)``.  ``s`` outside ``[0, 1]`` extrapolates the cubic.
    """
    b00, b10, b01, b11 = _hermite_basis(s, deriv)
    h = np.asarray(h, dtype=float)
    hc = h[..., None]
    scale = hc ** (-deriv) if deriv else 1.0
    out = (b00[..., None] * x0 + b01[..., None] * x1) * scale
    vscale = hc ** (1 - deriv)
    out = out + (b10[..., None] * v0 + b11[..., None] * v1) * vscale
    return out


def _power_coefficients(x0, v0, x1, v1, h):
    """Coefficients of ``x(u) = c0 + c1 u + c2 u^2 + c3 u^3`` with ``u = t - t0``."""
    d = (x1 - x0) / h
    c2 = (3 * d - 2 * v0 - v1) / h
    c3 = (-2 * d + v0 + v1) / (h * h)
    return x0, v0, c2, c3


def _segment_max_speed(v0, c2, c3, h) -> float:
    # |v|^2 is a quartic in u; its stationary points are roots of v . a
    coeffs = [
        18.0 * c3 @ c3,
        18.0 * c2 @ c3,
        6.0 * v0 @ c3 + 4.0 * c2 @ c2,
        2.0 * v0 @ c2,
    ]
    candidates = [0.0, h]
    if any(abs(c) > 0 for c in coeffs):
        for root in np.roots(coeffs):
            if abs(root.imag) <= 1e-12 * max(1.0, abs(root.real)) and 0.0 < root.real < h:
                candidates.append(root.real)
    best = 0.0
    for u in candidates:
        vel = v0 + 2 * c2 * u + 3 * c3 * u * u
        best = max(best, float(np.linalg.norm(vel)))
    return best


def _segment_max_speeds(v0: np.ndarray, c2: np.ndarray, c3: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Batched :func:`_segment_max_speed` over rows of ``(n, 3)`` coefficient arrays."""
    a = 18.0 * np.sum(c3 * c3, axis=1)
    b = 18.0 * np.sum(c2 * c3, axis=1)
    c = 6.0 * np.sum(v0 * c3, axis=1) + 4.0 * np.sum(c2 * c2, axis=1)
    d = 2.0 * np.sum(v0 * c2, axis=1)

    def speed(u):
        return np.linalg.norm(v0 + 2 * c2 * u[:, None] + 3 * c3 * (u * u)[:, None], axis=1)

    best = np.maximum(speed(np.zeros_like(h)), speed(h))
    cubic = a != 0
    if np.any(cubic):
        # companion matrices of the monic cubics, as np.roots would build them
        k = np.nonzero(cubic)[0]
        comp = np.zeros((k.size, 3, 3))
        comp[:, 0, 0] = -b[k] / a[k]
        comp[:, 0, 1] = -c[k] / a[k]
        comp[:, 0, 2] = -d[k] / a[k]
        comp[:, 1, 0] = 1.0
        comp[:, 2, 1] = 1.0
        roots = np.linalg.eigvals(comp)
        for j in range(3):
            r = roots[:, j]
            ok = (np.abs(r.imag) <= 1e-12 * np.maximum(1.0, np.abs(r.real))) & (r.real > 0) & (r.real < h[k])
            u = np.where(ok, r.real, 0.0)
            best[k] = np.maximum(best[k], np.where(ok, np.linalg.norm(
                v0[k] + 2 * c2[k] * u[:, None] + 3 * c3[k] * (u * u)[:, None], axis=1), 0.0))
    for i in np.nonzero(~cubic)[0]:
        best[i] = _segment_max_speed(v0[i], c2[i], c3[i], float(h[i]))
    return best


def _hodograph_length(alpha: np.ndarray, beta: np.ndarray, h: float) -> float:
    """Exact ``int_0^h |alpha + beta u| du`` for vectors ``alpha``, ``beta``."""
    A = float(beta @ beta)
    C = float(alpha @ alpha)
    if A == 0.0:
        return math.sqrt(C) * h
    if A * h * h < 1e-4 * C:
        # nearly constant integrand: closed form cancels badly, Gauss is exact enough
        nodes, weights = _GL20
        u = 0.5 * h * (nodes + 1.0)
        vals = np.linalg.norm(alpha[None, :] + u[:, None] * beta[None, :], axis=1)
        return float(0.5 * h * weights @ vals)
    k2 = float(np.cross(alpha, beta) @ np.cross(alpha, beta)) / (A * A)
    shift = float(alpha @ beta) / A
    k = math.sqrt(k2)

    def prim(w: float) -> float:
        root = math.sqrt(w * w + k2)
        tail = k2 * math.asinh(w / k) if k > 0 else 0.0
        return 0.5 * (w * root + tail)

    return math.sqrt(A) * (prim(h + shift) - prim(shift))


class Trajectory(Path):
    """Piecewise cubic Hermite worldline with velocity jumps allowed at nodes.

    Parameters
    ----------
    times : array_like, shape (n,)
        Strictly increasing node times, ``n >= 2``.
    x : array_like, shape (n, 3)
        Node positions.
    v_left, v_right : array_like, shape (n, 3)
        One-sided node velocities.  ``v_right`` defaults to ``v_left``.  The
        left value at the first node and the right value at the last node are
        never used for evaluation.
    check_speed : bool
        Reject trajectories whose speed reaches 1 anywhere.  Disable for
        variations ``b(t)``, which are not worldlines.
    """

    def __init__(self, times, x, v_left, v_right=None, *, check_speed: bool = True):
        times = np.asarray(times, dtype=float).copy()
        x = np.asarray(x, dtype=float).reshape(-1, 3).copy()
        v_left = np.asarray(v_left, dtype=float).reshape(-1, 3).copy()
        v_right = v_left.copy() if v_right is None else np.asarray(v_right, dtype=float).reshape(-1, 3).copy()
        n = times.shape[0]
        if times.ndim != 1 or n < 2:
            raise ValueError("a trajectory needs at least two node times")
        if not (x.shape[0] == v_left.shape[0] == v_right.shape[0] == n):
            raise ValueError("node arrays must have matching lengths")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(x))
                and np.all(np.isfinite(v_left)) and np.all(np.isfinite(v_right))):
            raise ValueError("node data must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("node times must be strictly increasing (zero-length segments are rejected)")
        for arr in (times, x, v_left, v_right):
            arr.setflags(write=False)
        self.times = times
        self.x = x
        self.v_left = v_left
        self.v_right = v_right
        self.t_start = float(times[0])
        self.t_end = float(times[-1])
        self._h = np.diff(times)
        self._max_speed: float | None = None
        self._power = None
        if check_speed:
            vmax = self.max_speed()
            if vmax >= 1.0:
                seg = self._fastest_segment()
                raise SuperluminalError(
                    f"segment {seg} [{times[seg]}, {times[seg + 1]}] reaches speed {vmax:.6g} >= 1"
                )

    # -- constructors -------------------------------------------------

    @classmethod
    def static(cls, point, t_start: float, t_end: float) -> "Trajectory":
        p = np.asarray(point, dtype=float)
        return cls([t_start, t_end], [p, p], np.zeros((2, 3)))

    @classmethod
    def uniform(cls, x_ref, velocity, t_start: float, t_end: float, t_ref: float = 0.0) -> "Trajectory":
        """Constant-velocity worldline ``x(t) = x_ref + velocity (t - t_ref)``."""
        x_ref = np.asarray(x_ref, dtype=float)
        v = np.asarray(velocity, dtype=float)
        xs = [x_ref + v * (t_start - t_ref), x_ref + v * (t_end - t_ref)]
        return cls([t_start, t_end], xs, [v, v])

    @classmethod
    def from_function(cls, pos, vel, times, *, check_speed: bool = True) -> "Trajectory":
        """Hermite interpolant of a smooth worldline sampled at ``times``."""
        times = np.asarray(times, dtype=float)
        xs = np.array([pos(t) for t in times], dtype=float)
        vs = np.array([vel(t) for t in times], dtype=float)
        return cls(times, xs, vs, check_speed=check_speed)

    @classmethod
    def from_path(cls, path: Path, times) -> "Trajectory":
        """Hermite interpolant of another path using its one-sided node velocities."""
        times = np.asarray(times, dtype=float)
        return cls(
            times,
            path.position(times),
            path.velocity(times, side="left"),
            path.velocity(times, side="right"),
        )

    @classmethod
    def join(cls, *parts: "Trajectory", tol: float = 1e-9) -> "Trajectory":
        """Concatenate contiguous trajectories; the junctions become nodes."""
        times = [parts[0].times]
        xs = [parts[0].x]
        vl = [parts[0].v_left]
        vr = [parts[0].v_right.copy()]
        for prev, nxt in zip(parts[:-1], parts[1:]):
            if abs(prev.t_end - nxt.t_start) > TIME_TOL * (1 + abs(prev.t_end)) * 10:
                raise ValueError(f"trajectories are not contiguous: {prev.t_end} vs {nxt.t_start}")
            gap = np.linalg.norm(prev.x[-1] - nxt.x[0])
            if gap > tol * (1.0 + np.linalg.norm(prev.x[-1])):
                raise ValueError(f"position jump {gap:.3g} at junction t={nxt.t_start}")
            vr[-1][-1] = nxt.v_right[0]
            times.append(nxt.times[1:])
            xs.append(nxt.x[1:])
            vl.append(nxt.v_left[1:])
            vr.append(nxt.v_right[1:].copy())
        return cls(np.concatenate(times), np.concatenate(xs), np.concatenate(vl), np.concatenate(vr),
                   check_speed=False)

    # -- evaluation ---------------------------------------------------

    def _segment_index(self, t: np.ndarray, side: str) -> np.ndarray:
        n_seg = self.times.shape[0] - 1
        if side == "right":
            idx = np.searchsorted(self.times, t, side="right") - 1
        else:
            idx = np.searchsorted(self.times, t, side="left") - 1
        return np.minimum(np.maximum(idx, 0), n_seg - 1)

    def _evaluate(self, t, side: str, deriv: int) -> np.ndarray:
        _check_side(side)
        t, scalar = _as_times(t)
        t = self._check_range(t)
        flat = np.atleast_1d(t)
        idx = self._segment_index(flat, side)
        h = self._h[idx]
        s = (flat - self.times[idx]) / h
        out = hermite_eval(self.x[idx], self.v_right[idx], self.x[idx + 1], self.v_left[idx + 1], h, s, deriv)
        return out[0] if scalar else out.reshape(t.shape + (3,))

    def position(self, t, side: str = "right") -> np.ndarray:
        shape, scalar, idx, u = self._locate(t, side)
        c0, c1, c2, c3 = (c[idx] for c in self._power_form())
        x = c0 + u * (c1 + u * (c2 + u * c3))
        return x[0] if scalar else x.reshape(shape + (3,))

    def velocity(self, t, side: str = "right") -> np.ndarray:
        return self._evaluate(t, side, 1)

    def acceleration(self, t, side: str = "right") -> np.ndarray:
        return self._evaluate(t, side, 2)

    def _power_form(self):
        if self._power is None:
            self._power = _power_coefficients(self.x[:-1], self.v_right[:-1], self.x[1:], self.v_left[1:],
                                              self._h[:, None])
        return self._power

    def _locate(self, t, side: str):
        _check_side(side)
        t, scalar = _as_times(t)
        flat = np.atleast_1d(self._check_range(t))
        idx = self._segment_index(flat, side)
        return t.shape, scalar, idx, (flat - self.times[idx])[:, None]

    def position_velocity(self, t, side: str = "right") -> tuple[np.ndarray, np.ndarray]:
        # one segment lookup for both, in power form; the light-cone Newton loop lives on this
        shape, scalar, idx, u = self._locate(t, side)
        c0, c1, c2, c3 = (c[idx] for c in self._power_form())
        x = c0 + u * (c1 + u * (c2 + u * c3))
        v = c1 + u * (2.0 * c2 + 3.0 * u * c3)
        if scalar:
            return x[0], v[0]
        return x.reshape(shape + (3,)), v.reshape(shape + (3,))

    # -- structure ----------------------------------------------------

    @property
    def n_segments(self) -> int:
        return self.times.shape[0] - 1

    @property
    def kink_times(self) -> np.ndarray:
        return self.times[1:-1]

    @property
    def speed_bound(self) -> float:
        return self.max_speed()

    def jump_times(self, tol: float = 0.0) -> np.ndarray:
        """Interior node times where the velocity is discontinuous."""
        jumps = np.linalg.norm(self.v_right[1:-1] - self.v_left[1:-1], axis=1)
        return self.times[1:-1][jumps > tol]

    def segment_coefficients(self, k: int):
        """Power-form coefficients ``(c0, c1, c2, c3)`` of segment ``k`` in ``u = t - t_k``."""
        return _power_coefficients(self.x[k], self.v_right[k], self.x[k + 1], self.v_left[k + 1], self._h[k])

    def _segment_speeds(self) -> np.ndarray:
        h = self._h
        _, v0, c2, c3 = _power_coefficients(self.x[:-1], self.v_right[:-1], self.x[1:], self.v_left[1:], h[:, None])
        return _segment_max_speeds(v0, c2, c3, h)

    def _fastest_segment(self) -> int:
        return int(np.argmax(self._segment_speeds()))

    def max_speed(self) -> float:
        """Supremum of ``|v|`` over the span, from the exact polynomial extrema."""
        if self._max_speed is None:
            self._max_speed = float(np.max(self._segment_speeds()))
        return self._max_speed

    def bv_norm(self) -> float:
        """``|v(t_start)|`` plus the total variation of the velocity."""
        total = [float(np.linalg.norm(self.v_right[0]))]
        for k in range(self.n_segments):
            _, _, c2, c3 = self.segment_coefficients(k)
            total.append(_hodograph_length(2.0 * c2, 6.0 * c3, float(self._h[k])))
        total.extend(np.linalg.norm(self.v_right[1:-1] - self.v_left[1:-1], axis=1))
        return math.fsum(total)

    def restrict(self, t0: float, t1: float) -> "Trajectory":
        """The same worldline on the sub-span ``[t0, t1]``."""
        if not (self.contains(t0) and self.contains(t1)) or t1 <= t0:
            raise TimeOutOfRangeError(f"cannot restrict [{self.t_start}, {self.t_end}] to [{t0}, {t1}]")
        slack = TIME_TOL * (1 + abs(t0) + abs(t1))
        inner = self.times[(self.times > t0 + slack) & (self.times < t1 - slack)]
        times = np.concatenate([[t0], inner, [t1]])
        vl = self.velocity(times, side="left")
        vr = self.velocity(times, side="right")
        vr[-1] = vl[-1]
        vl[0] = vr[0]
        return Trajectory(times, self.position(times), vl, vr, check_speed=False)

    def shifted(self, dt: float = 0.0, dx=None) -> "Trajectory":
        dx = np.zeros(3) if dx is None else np.asarray(dx, dtype=float)
        return Trajectory(self.times + dt, self.x + dx, self.v_left, self.v_right, check_speed=False)

    def plus(self, other: "Trajectory", eps: float = 1.0, *, check_speed: bool = True) -> "Trajectory":
        """``x(t) + eps * b(t)`` with ``b`` zero outside its own span."""
        lo, hi = other.t_start, other.t_end
        times = np.union1d(self.times, other.times)
        keep = np.concatenate([[True], np.diff(times) > TIME_TOL * (1 + np.abs(times[1:]))])
        times = times[keep]
        inside = (times >= lo) & (times <= hi)
        bx = np.zeros((times.size, 3))
        bvl = np.zeros((times.size, 3))
        bvr = np.zeros((times.size, 3))
        bx[inside] = other.position(times[inside])
        left_in = (times > lo) & (times <= hi)
        right_in = (times >= lo) & (times < hi)
        bvl[left_in] = other.velocity(times[left_in], side="left")
        bvr[right_in] = other.velocity(times[right_in], side="right")
        return Trajectory(
            times,
            self.position(times) + eps * bx,
            self.velocity(times, side="left") + eps * bvl,
            self.velocity(times, side="right") + eps * bvr,
            check_speed=check_speed,
        )

    def nodes(self) -> list[dict]:
        return [
            {"t": float(t), "x": x.tolist(), "v_left": vl.tolist(), "v_right": vr.tolist()}
            for t, x, vl, vr in zip(self.times, self.x, self.v_left, self.v_right)
        ]

    @classmethod
    def from_nodes(cls, nodes: Sequence[dict], *, check_speed: bool = True) -> "Trajectory":
        times = [n["t"] for n in nodes]
        xs = [n["x"] for n in nodes]
        vl = [n.get("v_left", n.get("v")) for n in nodes]
        vr = [n.get("v_right", n.get("v_left", n.get("v"))) for n in nodes]
        return cls(times, xs, vl, vr, check_speed=check_speed)

    def __repr__(self) -> str:
        return f"Trajectory(span=[{self.t_start:g}, {self.t_end:g}], segments={self.n_segments})"


class ExtendedSegment(Path):
    """One cubic segment of a trajectory, extrapolated beyond its ends.

    Integrators that must not feel a node's kink evaluate the partner through
    the polynomial piece that is active on the current phase.
    """

    def __init__(self, traj: Trajectory, k: int, pad: float):
        self._data = (traj.x[k], traj.v_right[k], traj.x[k + 1], traj.v_left[k + 1])
        self._t0 = float(traj.times[k])
        self._h = float(traj.times[k + 1] - traj.times[k])
        self.t_start = self._t0 - pad
        self.t_end = self._t0 + self._h + pad
        c0, c1, c2, c3 = _power_coefficients(*self._data, self._h)
        self._bound = max(
            _segment_max_speed(c1, c2, c3, self._h),
            float(np.linalg.norm(c1 + 2 * c2 * (-pad) + 3 * c3 * pad * pad)),
            float(np.linalg.norm(c1 + 2 * c2 * (self._h + pad) + 3 * c3 * (self._h + pad) ** 2)),
        )

    def _evaluate(self, t, deriv):
        t, scalar = _as_times(t)
        t = self._check_range(t)
        flat = np.atleast_1d(t)
        s = (flat - self._t0) / self._h
        h = np.full(flat.shape, self._h)
        out = hermite_eval(*self._data, h, s, deriv)
        return out[0] if scalar else out.reshape(t.shape + (3,))

    def position(self, t, side: str = "right"):
        return self._evaluate(t, 0)

    def velocity(self, t, side: str = "right"):
        return self._evaluate(t, 1)

    def acceleration(self, t, side: str = "right"):
        return self._evaluate(t, 2)

    @property
    def speed_bound(self) -> float:
        return self._bound


class CircularTrajectory(Path):
    """Uniform circular motion ``center + R (cos(w t + phi), sin(w t + phi), 0)``."""

    def __init__(self, radius: float, omega: float, phase: float = 0.0, center=(0.0, 0.0, 0.0),
                 t_start: float = -1e4, t_end: float = 1e4):
        self.radius = float(radius)
        self.omega = float(omega)
        self.phase = float(phase)
        self.center = np.asarray(center, dtype=float)
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        if abs(self.omega) * self.radius >= 1.0:
            raise SuperluminalError(f"circular speed {abs(self.omega) * self.radius} >= 1")

    def _angle(self, t):
        t, scalar = _as_times(t)
        t = self._check_range(t)
        return self.omega * t + self.phase, scalar

    def position(self, t, side: str = "right"):
        th, _ = self._angle(t)
        out = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1) * self.radius
        return out + self.center

    def velocity(self, t, side: str = "right"):
        th, _ = self._angle(t)
        c = self.radius * self.omega
        return np.stack([-np.sin(th), np.cos(th), np.zeros_like(th)], axis=-1) * c

    def acceleration(self, t, side: str = "right"):
        th, _ = self._angle(t)
        c = -self.radius * self.omega ** 2
        return np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1) * c

    @property
    def speed_bound(self) -> float:
        return abs(self.omega) * self.radius

    def to_hermite(self, times) -> Trajectory:
        return Trajectory(times, self.position(times), self.velocity(times))


# -- module-level operations ---------------------------------------------------


def eval_position(traj: Path, t, side: str = "right") -> np.ndarray:
    return traj.position(t, side)


def eval_velocity(traj: Path, t, side: str = "right") -> np.ndarray:
    return traj.velocity(t, side)


def eval_acceleration(traj: Path, t, side: str = "right") -> np.ndarray:
    return traj.acceleration(t, side)


def bv_norm(traj: Trajectory) -> float:
    return traj.bv_norm()


def check_subluminal(traj: Trajectory) -> float:
    """Maximum speed along ``traj``; the caller decides whether it is below 1."""
    return traj.max_speed()


@dataclass(frozen=True)
class SewingGrid:
    """Alternating chain of forward light-cone images between two trajectories.

    ``chain`` lists ``(particle, time)`` pairs starting with the seed point on
    particle 2; ``times1``/``times2`` are the chain times on each trajectory.
    """

    chain: tuple[tuple[int, float], ...]
    residuals: tuple[float, ...] = field(default=())

    @property
    def times1(self) -> np.ndarray:
        return np.array([t for p, t in self.chain if p == 1])

    @property
    def times2(self) -> np.ndarray:
        return np.array([t for p, t in self.chain if p == 2])

    @property
    def images(self) -> np.ndarray:
        return np.array([t for _, t in self.chain[1:]])


def build_sewing_grid(traj1: Path, traj2: Path, start: float, end_limit: float, *,
                      r_min: float = 1e-6, max_links: int = 100000) -> SewingGrid:
    """Forward sewing chain seeded at time ``start`` on particle 2.

    Each link maps a point to the forward light cone on the other trajectory.
    The chain stops before the first image later than ``end_limit``; an image
    that leaves the available data before that raises
    :class:`~varem.errors.SpanExhaustedError`.
    """
    from .lightcone import solve_deviating_argument

    chain = [(2, float(start))]
    residuals = []
    trajs = {1: traj1, 2: traj2}
    particle, t = 2, float(start)
    while len(chain) <= max_links:
        other = 3 - particle
        x = trajs[particle].position(t)
        sol = solve_deviating_argument(trajs[other], t, x, +1, r_min=r_min, snap=False)
        if sol.t_dev > end_limit:
            break
        chain.append((other, float(sol.t_dev)))
        residuals.append(float(abs(sol.residual)))
        particle, t = other, float(sol.t_dev)
    return SewingGrid(tuple(chain), tuple(residuals))


@dataclass(frozen=True)
class BoundaryData:
    """Fixed data of the two-body boundary-value problem.

    Particle 1 starts at ``(t_O1, x_O1)``; particle 2 ends at ``(t_L2, x_L2)``.
    ``past2`` is particle 2 on ``[t_O1^-, t_O1^+]`` (the light-cone times of
    ``O1``) and ``future1`` is particle 1 on ``[t_L2^-, t_L2^+]``.
    """

    m1: float
    m2: float
    t_O1: float
    x_O1: np.ndarray
    t_L2: float
    x_L2: np.ndarray
    past2: Trajectory
    future1: Trajectory

    def __post_init__(self):
        object.__setattr__(self, "x_O1", np.asarray(self.x_O1, dtype=float))
        object.__setattr__(self, "x_L2", np.asarray(self.x_L2, dtype=float))
        if self.m1 <= 0 or self.m2 <= 0:
            raise BoundaryDataError("masses must be positive")

    @property
    def t_O1_minus(self) -> float:
        return self.past2.t_start

    @property
    def t_O1_plus(self) -> float:
        return self.past2.t_end

    @property
    def t_L2_minus(self) -> float:
        return self.future1.t_start

    @property
    def t_L2_plus(self) -> float:
        return self.future1.t_end

    @property
    def free1(self) -> tuple[float, float]:
        """Time range on which particle 1 is varied."""
        return (self.t_O1, self.t_L2_minus)

    @property
    def free2(self) -> tuple[float, float]:
        return (self.t_O1_plus, self.t_L2)

    def mass(self, particle: int) -> float:
        return self.m1 if particle == 1 else self.m2

    def free_range(self, particle: int) -> tuple[float, float]:
        return self.free1 if particle == 1 else self.free2

    def free_endpoints(self, particle: int) -> tuple[np.ndarray, np.ndarray]:
        """Fixed positions at the two ends of a particle's free range."""
        if particle == 1:
            return self.x_O1, self.future1.position(self.t_L2_minus)
        return self.past2.position(self.t_O1_plus), self.x_L2

    def light_cone_residuals(self) -> list[float]:
        """Residuals of the four light-cone conditions that define the segment ends."""
        p2_lo = self.past2.position(self.t_O1_minus)
        p2_hi = self.past2.position(self.t_O1_plus)
        p1_lo = self.future1.position(self.t_L2_minus)
        p1_hi = self.future1.position(self.t_L2_plus)
        return [
            abs(self.t_O1_plus - self.t_O1 - np.linalg.norm(self.x_O1 - p2_hi)),
            abs(self.t_O1 - self.t_O1_minus - np.linalg.norm(self.x_O1 - p2_lo)),
            abs(self.t_L2_plus - self.t_L2 - np.linalg.norm(self.x_L2 - p1_hi)),
            abs(self.t_L2 - self.t_L2_minus - np.linalg.norm(self.x_L2 - p1_lo)),
        ]

    def validate(self, tol: float = 1e-9) -> None:
        """Raise :class:`BoundaryDataError` unless the data are consistent."""
        res = self.light_cone_residuals()
        names = ["t_O1+", "t_O1-", "t_L2+", "t_L2-"]
        for name, r in zip(names, res):
            if r > tol:
                raise BoundaryDataError(f"boundary segment end {name} violates the light cone by {r:.3g}")
        for name, seg in (("past segment of particle 2", self.past2), ("future segment of particle 1", self.future1)):
            speed = seg.max_speed()
            if speed >= 1.0:
                raise SuperluminalError(f"{name} reaches speed {speed:.6g} >= 1")
        if not self.t_L2_minus > self.t_O1:
            raise BoundaryDataError("empty free range for particle 1 (t_L2^- <= t_O1)")
        if not self.t_L2 > self.t_O1_plus:
            raise BoundaryDataError("empty free range for particle 2 (t_L2 <= t_O1^+)")

    @classmethod
    def from_trajectories(cls, traj1: Trajectory, traj2: Trajectory, t_O1: float, t_L2: float,
                          m1: float = 1.0, m2: float = 1.0) -> "BoundaryData":
        """Cut boundary data out of two worldlines that cover the needed spans."""
        from .lightcone import solve_deviating_argument

        x_O1 = traj1.position(t_O1)
        x_L2 = traj2.position(t_L2)
        try:
            o_plus = solve_deviating_argument(traj2, t_O1, x_O1, +1, snap=False).t_dev
            o_minus = solve_deviating_argument(traj2, t_O1, x_O1, -1, snap=False).t_dev
            l_plus = solve_deviating_argument(traj1, t_L2, x_L2, +1, snap=False).t_dev
            l_minus = solve_deviating_argument(traj1, t_L2, x_L2, -1, snap=False).t_dev
        except SpanExhaustedError as exc:
            raise BoundaryDataError(f"trajectories too short for the requested window: {exc}") from exc
        data = cls(m1, m2, t_O1, x_O1, t_L2, x_L2,
                   traj2.restrict(o_minus, o_plus), traj1.restrict(l_minus, l_plus))
        data.validate()
        return data

    def assemble(self, free1: Trajectory, free2: Trajectory) -> tuple[Trajectory, Trajectory]:
        """Full worldlines from the free parts and the fixed segments."""
        return Trajectory.join(free1, self.future1), Trajectory.join(self.past2, free2)

    def straight_guess(self, n1: int = 1, n2: int = 1) -> tuple[Trajectory, Trajectory]:
        """Constant-velocity free parts between the fixed endpoints."""
        out = []
        for particle, n in ((1, n1), (2, n2)):
            a, b = self.free_range(particle)
            xa, xb = self.free_endpoints(particle)
            times = np.linspace(a, b, n + 1)
            v = (xb - xa) / (b - a)
            xs = xa + np.outer((times - a) / (b - a), xb - xa)
            xs[-1] = xb
            out.append(Trajectory(times, xs, np.tile(v, (n + 1, 1))))
        return self.assemble(out[0], out[1])
