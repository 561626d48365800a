"""Advanced and retarded deviating arguments of the light-cone condition.

For a point ``(t, x_i)`` and a partner worldline ``x_j`` the deviating
argument ``t_dev`` solves ``t_dev = t + sign * |x_i - x_j(t_dev)|`` with
``sign = +1`` (advanced) or ``-1`` (retarded).  The function
``f(s) = s - t - sign |x_i - x_j(s)|`` has ``f'(s) = 1 + sign n.v_j(s) > 0`` on
sub-luminal worldlines, so a bracketed Newton iteration with bisection
fallback always converges to the unique root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollisionError, SpanExhaustedError
from .trajectory import Path

R_MIN = 1e-6
ROOT_TOL = 1e-12
# partner data within this relative distance of a kink are read at the kink
SNAP_TOL = 1e-10


_EPS4 = 4 * np.finfo(float).eps


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def monotone_root(func, lo, hi, s0, tol: float = ROOT_TOL, max_iter: int = 200):
    """Vectorised safeguarded Newton for increasing functions.

    ``func(s, mask)`` returns ``(f, df)`` for the entries selected by ``mask``.
    ``lo``/``hi`` must bracket the root (``f(lo) <= 0 <= f(hi)``).  Returns
    the roots and the final residuals.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    s = np.clip(np.array(s0, dtype=float), lo, hi)
    resid = np.full(s.shape, np.inf)
    polish = np.zeros(s.shape, dtype=int)
    active = np.ones(s.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        f, df = func(s[idx], idx)
        resid[idx] = f
        neg = f < 0
        lo[idx[neg]] = s[idx[neg]]
        hi[idx[~neg]] = s[idx[~neg]]
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = f / df
            step = s[idx] - delta
        # within tol, polish (at most three steps) until the correction is at round-off level
        within = np.abs(f) <= tol
        polish[idx[within]] += 1
        settled = ~(np.abs(delta) > _EPS4 * np.maximum(1.0, np.abs(s[idx])))
        done = within & (settled | (polish[idx] > 3))
        bad = ~np.isfinite(step) | (step <= lo[idx]) | (step >= hi[idx])
        step[bad] = 0.5 * (lo[idx[bad]] + hi[idx[bad]])
        tiny = (hi[idx] - lo[idx]) <= _EPS4 * np.maximum(1.0, np.abs(s[idx]))
        finished = done | tiny
        s[idx[~finished]] = step[~finished]
        active[idx[finished]] = False
    if np.any(active):
        idx = np.nonzero(active)[0]
        resid[idx] = func(s[idx], idx)[0]
    return s, resid


def _setup(path: Path, t: np.ndarray, x_i: np.ndarray, sign: int, tol: float):
    """Brackets, the residual function and the mask of points whose image lies in the span."""
    a, b = path.t_start, path.t_end
    if sign > 0:
        lo = np.maximum(t, a)
        hi = np.full(t.shape, b)
    else:
        lo = np.full(t.shape, a)
        hi = np.minimum(t, b)

    def f_and_df(s, idx):
        x_j, v_j = path.position_velocity(s)
        diff = x_i[idx] - x_j
        r = np.linalg.norm(diff, axis=-1)
        f = s - t[idx] - sign * r
        with np.errstate(divide="ignore", invalid="ignore"):
            n = diff / r[:, None]
        n = np.where(r[:, None] > 0, n, 0.0)
        df = 1.0 + sign * _dot(n, v_j)
        return f, df

    ok = lo <= hi
    if np.any(ok):
        idx = np.nonzero(ok)[0]
        f_lo, _ = f_and_df(lo[idx], idx)
        f_hi, _ = f_and_df(hi[idx], idx)
        ok[idx] = (f_lo <= tol) & (f_hi >= -tol)
    return lo, hi, ok, f_and_df


def _solve_times(path: Path, t: np.ndarray, x_i: np.ndarray, sign: int, tol: float,
                 drop: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi, ok, f_and_df = _setup(path, t, x_i, sign, tol)
    if not drop and not np.all(ok):
        k = int(np.argmin(ok))
        raise SpanExhaustedError(
            f"{'advanced' if sign > 0 else 'retarded'} image of t={t[k]!r} lies outside [{path.t_start}, {path.t_end}]"
        )
    idx = np.nonzero(ok)[0]
    s = np.full(t.shape, np.nan)
    resid = np.full(t.shape, np.nan)
    if idx.size:
        # first guess: delay measured at the clipped current time
        tc = np.clip(t[idx], path.t_start, path.t_end)
        r0 = np.linalg.norm(x_i[idx] - path.position(tc), axis=-1)

        def sub(sv, j):
            return f_and_df(sv, idx[j])
        s[idx], resid[idx] = monotone_root(sub, lo[idx], hi[idx], t[idx] + sign * r0, tol=tol)
    return s, resid, ok


def _snap_to_kinks(path: Path, s: np.ndarray) -> np.ndarray:
    kinks = np.concatenate([[path.t_start], path.kink_times, [path.t_end]])
    pos = np.clip(np.searchsorted(kinks, s), 1, kinks.size - 1)
    left = kinks[pos - 1]
    right = kinks[pos]
    nearest = np.where(np.abs(s - left) <= np.abs(s - right), left, right)
    close = np.abs(s - nearest) <= SNAP_TOL * (1.0 + np.abs(s))
    return np.where(close, nearest, s)


@dataclass(frozen=True)
class LightConeSolution:
    """Solved deviating argument and the partner data read there.

    Array fields carry a leading batch axis when the solver was called with
    an array of times.  ``v_dev``/``a_dev`` are right limits at partner nodes;
    the ``*_left`` fields hold the left limits.
    """

    t: np.ndarray
    x_i: np.ndarray
    sign: int
    t_dev: np.ndarray
    r: np.ndarray
    n: np.ndarray
    x_dev: np.ndarray
    v_dev: np.ndarray
    a_dev: np.ndarray
    v_dev_left: np.ndarray
    a_dev_left: np.ndarray
    residual: np.ndarray

    def velocity(self, side: str = "right") -> np.ndarray:
        return self.v_dev if side == "right" else self.v_dev_left

    def acceleration(self, side: str = "right") -> np.ndarray:
        return self.a_dev if side == "right" else self.a_dev_left

    @property
    def denominator(self) -> np.ndarray:
        """``1 + sign n.v_dev``, positive for sub-luminal partners."""
        return 1.0 + self.sign * _dot(self.n, self.v_dev)


def solve_deviating_argument(traj_j: Path, t, x_i, sign: int, *, r_min: float = R_MIN,
                             tol: float = ROOT_TOL, snap: bool = True) -> LightConeSolution:
    """Solve the light-cone condition of ``(t, x_i)`` on the partner worldline.

    Parameters
    ----------
    traj_j : Path
        Partner worldline; the image must lie inside its span.
    t, x_i : float or array, array
        Time and position of the source point(s); ``x_i`` has shape ``(3,)``
        or ``(n, 3)``.
    sign : {+1, -1}
        ``+1`` for the advanced (future) cone, ``-1`` for the retarded one.
    r_min : float
        Separations below this raise :class:`CollisionError`.
    snap : bool
        Read partner velocity/acceleration exactly at a partner node when the
        image lands within rounding distance of it.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_flat = np.atleast_1d(t_arr).astype(float)
    x_flat = np.asarray(x_i, dtype=float).reshape(-1, 3)
    if x_flat.shape[0] == 1 and t_flat.size > 1:
        x_flat = np.repeat(x_flat, t_flat.size, axis=0)
    s, resid, _ = _solve_times(traj_j, t_flat, x_flat, sign, tol)
    x_dev = traj_j.position(s)
    diff = x_flat - x_dev
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r < r_min):
        k = int(np.argmin(r))
        raise CollisionError(f"separation {r[k]:.3g} below r_min={r_min:g} at t={t_flat[k]!r}")
    n = diff / r[:, None]
    s_eval = _snap_to_kinks(traj_j, s) if snap else s
    v_r = traj_j.velocity(s_eval, side="right")
    v_l = traj_j.velocity(s_eval, side="left")
    a_r = traj_j.acceleration(s_eval, side="right")
    a_l = traj_j.acceleration(s_eval, side="left")
    resid = s - t_flat - sign * r
    if scalar:
        return LightConeSolution(float(t_flat[0]), x_flat[0], sign, float(s[0]), float(r[0]), n[0], x_dev[0],
                                 v_r[0], a_r[0], v_l[0], a_l[0], float(resid[0]))
    return LightConeSolution(t_flat, x_flat, sign, s, r, n, x_dev, v_r, a_r, v_l, a_l, resid)


def deviating_partials(sol: LightConeSolution, side: str = "right") -> tuple[np.ndarray, np.ndarray]:
    """Implicit-function partials ``(d t_dev / d x_i, d t_dev / d t)``."""
    v = sol.velocity(side)
    denom = 1.0 + sol.sign * _dot(sol.n, v)
    dt_dt = 1.0 / denom
    dt_dx = sol.sign * sol.n / np.asarray(denom)[..., None]
    return dt_dx, dt_dt


def radon_nikodym(sol: LightConeSolution, v_i, side: str = "right") -> np.ndarray:
    """``d t_dev / d t`` along a worldline moving with velocity ``v_i``."""
    v = sol.velocity(side)
    return (1.0 + sol.sign * _dot(sol.n, v_i)) / (1.0 + sol.sign * _dot(sol.n, v))


def image_times(source: Path, target: Path, times, sign: int, *, r_min: float = R_MIN,
                keep_mask: bool = False):
    """Light-cone images on ``target`` of the points ``source(times)``.

    Images that leave the target span are dropped; with ``keep_mask`` the
    mask of kept input times is returned as well.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        return (times, np.zeros(0, dtype=bool)) if keep_mask else times
    x = np.asarray(source.position(times), dtype=float).reshape(-1, 3)
    s, _, ok = _solve_times(target, times, x, sign, ROOT_TOL, drop=True)
    if np.any(ok):
        r = np.linalg.norm(x[ok] - target.position(s[ok]), axis=-1)
        if np.any(r < r_min):
            raise CollisionError(f"separation {np.min(r):.3g} below r_min={r_min:g}")
    return (s[ok], ok) if keep_mask else s[ok]
