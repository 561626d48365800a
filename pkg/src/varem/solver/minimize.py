"""Direct minimization of the discretized action.

Each free range is split into cubic Hermite segments.  Decision variables
are the interior node positions and the one-sided node velocities, so
corners are representable but never imposed or forbidden.  The action and
its gradient are evaluated with a fixed composite Gauss-Legendre rule whose
panels break at the nodes and at the light-cone images of partner kinks,
recomputed at every iterate.  The gradient is the Gateaux derivative along
each Hermite basis function, assembled from the same quadrature points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import quadrature
from ..action import crossing_forces, partner_images
from ..errors import CollisionError, ConvergenceError, SpanExhaustedError, SuperluminalError, TimeOutOfRangeError
from ..lagrangian import evaluate, kinetic
from ..lightcone import R_MIN, solve_deviating_argument
from ..trajectory import BoundaryData, Trajectory, _hermite_basis
from .report import CriticalityReport, criticality_report

log = logging.getLogger(__name__)

_PENALTY = 1e6


@dataclass
class SolverOptions:
    """Tunable settings of :func:`minimize_action`.

    ``gtol`` bounds the Euclidean norm of the gradient with respect to node
    positions and velocities.  ``max_panel`` caps quadrature panel lengths
    (default: a quarter of the smallest boundary separation).
    """

    gtol: float = 1e-8
    max_iter: int = 3000
    newton_iter: int = 12
    realign: int = 5
    align: bool = True
    realign_tol: float = 1e-3
    order: int = quadrature.ORDER
    max_panel: float | None = None
    r_min: float = R_MIN
    quad_tol: float = 1e-10
    report_samples: int = 3


@dataclass
class Discretization:
    """Node times of both free ranges (ends included)."""

    times1: np.ndarray
    times2: np.ndarray
    sewing1: np.ndarray = field(default_factory=lambda: np.empty(0))
    sewing2: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        for name in ("times1", "times2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size < 2 or np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be strictly increasing with at least two entries")
            setattr(self, name, arr)

    def times(self, particle: int) -> np.ndarray:
        return self.times1 if particle == 1 else self.times2

    @property
    def n_variables(self) -> int:
        return sum(3 * (t.size - 2) + 6 * (t.size - 1) for t in (self.times1, self.times2))

    @classmethod
    def uniform(cls, boundary: BoundaryData, n1: int, n2: int | None = None) -> "Discretization":
        n2 = n1 if n2 is None else n2
        return cls(np.linspace(*boundary.free1, n1 + 1), np.linspace(*boundary.free2, n2 + 1))

    @classmethod
    def with_spacing(cls, boundary: BoundaryData, spacing: float) -> "Discretization":
        n1 = max(1, math.ceil((boundary.free1[1] - boundary.free1[0]) / spacing - 1e-9))
        n2 = max(1, math.ceil((boundary.free2[1] - boundary.free2[0]) / spacing - 1e-9))
        return cls.uniform(boundary, n1, n2)

    def aligned(self, sewing1, sewing2, min_fraction: float = 0.3) -> "Discretization":
        """Copy with sewing times inserted as nodes (moving a nearby node instead when one is close)."""
        return Discretization(_insert_nodes(self.times1, sewing1, min_fraction),
                              _insert_nodes(self.times2, sewing2, min_fraction),
                              np.asarray(sewing1, dtype=float), np.asarray(sewing2, dtype=float))


def _insert_nodes(times: np.ndarray, extra, min_fraction: float) -> np.ndarray:
    nodes = [float(t) for t in times]
    sewn = [False] * len(nodes)
    h = float(np.min(np.diff(times)))
    lo, hi = nodes[0], nodes[-1]
    for s in sorted(float(e) for e in np.asarray(extra, dtype=float)):
        if not lo + 1e-9 * h < s < hi - 1e-9 * h:
            continue
        dist = np.abs(np.array(nodes) - s)
        k = int(np.argmin(dist))
        if dist[k] <= 1e-9 * h:
            sewn[k] = True
        elif dist[k] < min_fraction * h and 0 < k < len(nodes) - 1 and not sewn[k]:
            nodes[k] = s
            sewn[k] = True
        else:
            j = int(np.searchsorted(nodes, s))
            nodes.insert(j, s)
            sewn.insert(j, True)
    return np.array(nodes)


def sewing_times(traj1: Trajectory, traj2: Trajectory, boundary: BoundaryData, *, max_points: int = 200,
                 r_min: float = R_MIN) -> tuple[np.ndarray, np.ndarray]:
    """Light-cone chains of the boundary kinks inside the two free ranges.

    Seeds are the velocity-jump nodes of the fixed segments and the two
    junctions where a free range meets a fixed segment.  Every seed is mapped
    to the other worldline on both cones, repeatedly, until images leave the
    free ranges.
    """
    free = {1: boundary.free1, 2: boundary.free2}
    trajs = {1: traj1, 2: traj2}
    found: dict[int, list[float]] = {1: [], 2: []}
    queue = [(2, float(t)) for t in boundary.past2.jump_times(1e-14)] + [(2, boundary.t_O1_plus)]
    queue += [(1, float(t)) for t in boundary.future1.jump_times(1e-14)] + [(1, boundary.t_L2_minus)]
    seen = 0
    while queue and seen < max_points:
        particle, t = queue.pop(0)
        other = 3 - particle
        lo, hi = free[other]
        slack = 1e-9 * (1 + abs(lo) + abs(hi))
        for sign in (-1, 1):
            try:
                img = solve_deviating_argument(trajs[other], t, trajs[particle].position(t), sign,
                                               r_min=r_min, snap=False).t_dev
            except SpanExhaustedError:
                continue
            if not lo + slack < img < hi - slack:
                continue
            if any(abs(img - s) <= 1e-9 * (1 + abs(img)) for s in found[other]):
                continue
            found[other].append(float(img))
            queue.append((other, float(img)))
            seen += 1
    return np.sort(np.array(found[1])), np.sort(np.array(found[2]))


class ActionProblem:
    """Discretized action ``S(z)`` and its gradient for fixed node times.

    The variable vector holds, per particle, the interior node positions,
    then right velocities at nodes ``0..n-1`` and left velocities at nodes
    ``1..n``, each velocity multiplied by the length of its segment.
    """

    def __init__(self, boundary: BoundaryData, disc: Discretization, opts: SolverOptions | None = None):
        self.boundary = boundary
        self.disc = disc
        self.opts = opts or SolverOptions()
        self.ends = {p: boundary.free_endpoints(p) for p in (1, 2)}
        self.h = {p: np.diff(disc.times(p)) for p in (1, 2)}
        self.sizes = {p: (disc.times(p).size - 2, disc.times(p).size - 1) for p in (1, 2)}
        self.max_panel = self.opts.max_panel or self._default_panel()
        self.n_evals = 0

    def _default_panel(self) -> float:
        b = self.boundary
        seps = [
            np.linalg.norm(b.x_O1 - b.past2.position(b.t_O1_plus)),
            np.linalg.norm(b.x_O1 - b.past2.position(b.t_O1_minus)),
            np.linalg.norm(b.x_L2 - b.future1.position(b.t_L2_minus)),
            np.linalg.norm(b.x_L2 - b.future1.position(b.t_L2_plus)),
        ]
        return max(0.25 * min(seps), 1e-3)

    # -- packing ------------------------------------------------------

    def _block(self, particle: int) -> int:
        n_int, n_seg = self.sizes[particle]
        return 3 * n_int + 6 * n_seg

    def split(self, z: np.ndarray) -> dict:
        out = {}
        offset = 0
        for p in (1, 2):
            n_int, n_seg = self.sizes[p]
            blk = z[offset:offset + self._block(p)]
            offset += self._block(p)
            X = blk[:3 * n_int].reshape(n_int, 3)
            ZR = blk[3 * n_int:3 * n_int + 3 * n_seg].reshape(n_seg, 3)
            ZL = blk[3 * n_int + 3 * n_seg:].reshape(n_seg, 3)
            out[p] = (X, ZR, ZL)
        return out

    def free_trajectory(self, particle: int, X, ZR, ZL, *, check_speed: bool = False) -> Trajectory:
        times = self.disc.times(particle)
        h = self.h[particle]
        x0, x1 = self.ends[particle]
        xs = np.vstack([x0, X, x1])
        vr = np.vstack([ZR / h[:, None], ZL[-1:] / h[-1]])
        vl = np.vstack([ZR[:1] / h[0], ZL / h[:, None]])
        return Trajectory(times, xs, vl, vr, check_speed=check_speed)

    def trajectories(self, z: np.ndarray, *, check_speed: bool = False) -> tuple[Trajectory, Trajectory]:
        parts = self.split(z)
        f1 = self.free_trajectory(1, *parts[1], check_speed=check_speed)
        f2 = self.free_trajectory(2, *parts[2], check_speed=check_speed)
        return self.boundary.assemble(f1, f2)

    def pack(self, free1: Trajectory, free2: Trajectory) -> np.ndarray:
        """Variables of the free parts sampled at the node times (one-sided velocities)."""
        out = []
        for p, traj in ((1, free1), (2, free2)):
            times = self.disc.times(p)
            h = self.h[p]
            X = traj.position(times[1:-1])
            ZR = traj.velocity(times[:-1], side="right") * h[:, None]
            ZL = traj.velocity(times[1:], side="left") * h[:, None]
            out.append(np.concatenate([X.ravel(), ZR.ravel(), ZL.ravel()]))
        return np.concatenate(out)

    def natural_scale(self) -> np.ndarray:
        """Factors turning ``d S / d z`` into derivatives in positions and velocities."""
        out = []
        for p in (1, 2):
            n_int, _ = self.sizes[p]
            h = self.h[p]
            out.append(np.concatenate([np.ones(3 * n_int), np.repeat(h, 3), np.repeat(h, 3)]))
        return np.concatenate(out)

    def gradient_norm(self, grad_z: np.ndarray) -> float:
        return float(np.linalg.norm(grad_z * self.natural_scale()))

    # -- quadrature ---------------------------------------------------

    def _rule(self, breaks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lengths = np.diff(breaks)
        pieces = np.maximum(1, np.ceil(lengths / self.max_panel - 1e-12)).astype(int)
        edges = [breaks[:1]]
        for a, L, k in zip(breaks[:-1], lengths, pieces):
            edges.append(a + L * np.arange(1, k + 1) / k)
        edges = np.concatenate(edges)
        edges[-1] = breaks[-1]
        return quadrature.fixed_rule(edges, self.opts.order)

    def _breaks(self, traj_i, traj_j, lo, hi, own, signs) -> np.ndarray:
        pts = [np.asarray(own, dtype=float), partner_images(traj_i, traj_j, signs, r_min=self.opts.r_min)]
        return quadrature.clean_breaks(np.concatenate(pts), lo, hi)

    def evaluate(self, z: np.ndarray, want_grad: bool = True):
        """``(S, dS/dz)`` at ``z``; raises on super-luminal or colliding iterates."""
        self.n_evals += 1
        b = self.boundary
        r_min = self.opts.r_min
        traj1, traj2 = self.trajectories(z)
        for p, traj in ((1, traj1), (2, traj2)):
            lo, hi = b.free_range(p)
            seg = traj.restrict(lo, hi)
            if seg.max_speed() >= 1.0:
                raise SuperluminalError(f"iterate of particle {p} reaches speed {seg.max_speed():.6g}")
        parts = []
        grads = []
        # particle 1 on its free range: full partial Lagrangian
        t1, w1 = self._rule(self._breaks(traj1, traj2, *b.free1, self.disc.times1, (-1, 1)))
        e1 = evaluate(t1, traj1.position(t1), traj1.velocity(t1), b.m1, traj2, r_min=r_min)
        parts.append(w1 @ e1.L)
        # particle 1 on the future segment: retarded interaction only
        tf, wf = self._rule(self._breaks(traj1, traj2, b.t_L2_minus, b.t_L2_plus, b.future1.times, (-1,)))
        sol = solve_deviating_argument(traj2, tf, traj1.position(tf), -1, r_min=r_min)
        vf = traj1.velocity(tf)
        Dm = sol.r * (1.0 - np.sum(sol.n * sol.v_dev, axis=-1))
        parts.append(wf @ ((1.0 - np.sum(vf * sol.v_dev, axis=-1)) / (2.0 * Dm)))
        # particle 2 on its free range: kinetic term in the action, full gradient
        t2, w2 = self._rule(self._breaks(traj2, traj1, *b.free2, self.disc.times2, (-1, 1)))
        v2 = traj2.velocity(t2)
        if want_grad:
            e2 = evaluate(t2, traj2.position(t2), v2, b.m2, traj1, r_min=r_min)
            parts.append(w2 @ e2.M)
        else:
            parts.append(w2 @ kinetic(v2, b.m2))
        S = math.fsum(parts)
        if not want_grad:
            return S, None
        for p, traj_i, traj_j, t, w, e in ((1, traj1, traj2, t1, w1, e1), (2, traj2, traj1, t2, w2, e2)):
            g = self._assemble(p, t, w, e.dL_dx, e.P)
            ts, fs = crossing_forces(traj_i, traj_j, *b.free_range(p), r_min=r_min)
            if ts.size:
                g = g + self._assemble(p, ts, np.ones(ts.size), fs, np.zeros_like(fs))
            grads.append(g)
        return S, np.concatenate(grads)

    def _assemble(self, particle: int, t, w, G, P) -> np.ndarray:
        times = self.disc.times(particle)
        h_all = self.h[particle]
        n_int, n_seg = self.sizes[particle]
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, n_seg - 1)
        h = h_all[k]
        u = (t - times[k]) / h
        b0 = _hermite_basis(u, 0)
        b1 = _hermite_basis(u, 1)
        wc = w[:, None]

        def term(j):
            return wc * (G * b0[j][:, None] + P * (b1[j] / h)[:, None])

        gx = np.zeros((n_seg + 1, 3))
        gr = np.zeros((n_seg, 3))
        gl = np.zeros((n_seg, 3))
        np.add.at(gx, k, term(0))
        np.add.at(gx, k + 1, term(2))
        np.add.at(gr, k, term(1))
        np.add.at(gl, k, term(3))
        return np.concatenate([gx[1:-1].ravel(), gr.ravel(), gl.ravel()])

    def safe_evaluate(self, z: np.ndarray):
        try:
            return self.evaluate(z)
        except (SuperluminalError, CollisionError, SpanExhaustedError, TimeOutOfRangeError, FloatingPointError) as exc:
            log.debug("rejected iterate: %s", exc)
            return None


@dataclass
class MinimizeResult:
    traj1: Trajectory
    traj2: Trajectory
    report: CriticalityReport
    disc: Discretization
    history: list[float] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (traj1, traj2, report)
        return iter((self.traj1, self.traj2, self.report))


def _fd_hessian(problem: ActionProblem, z: np.ndarray) -> np.ndarray:
    n = z.size
    scale = np.maximum(np.abs(z), 1.0)
    H = np.empty((n, n))
    for i in range(n):
        d = 1e-6 * scale[i]
        zp = z.copy()
        zp[i] += d
        zm = z.copy()
        zm[i] -= d
        H[:, i] = (problem.evaluate(zp)[1] - problem.evaluate(zm)[1]) / (2 * d)
    return 0.5 * (H + H.T)


def _newton_polish(problem: ActionProblem, z: np.ndarray, S: float, g: np.ndarray, opts: SolverOptions,
                   history: list[float]) -> tuple[np.ndarray, float, np.ndarray, int]:
    """Newton steps with a finite-difference Hessian of the exact gradient.

    The Hessian is kept across steps (chord iteration) and rebuilt only when
    a step fails to reduce the gradient norm.
    """
    iters = 0
    H = None
    fresh = False
    while iters < opts.newton_iter and problem.gradient_norm(g) >= opts.gtol:
        if H is None:
            H = _fd_hessian(problem, z)
            fresh = True
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        iters += 1
        accepted = False
        for damp in (1.0, 0.5, 0.25, 0.125, 0.0625):
            out = problem.safe_evaluate(z + damp * step)
            if out is None:
                continue
            S_new, g_new = out
            if problem.gradient_norm(g_new) < problem.gradient_norm(g):
                z, S, g = z + damp * step, S_new, g_new
                history.append(S)
                accepted = True
                break
        if accepted:
            fresh = False
        elif fresh:
            break
        else:
            H = None
    return z, S, g, iters


def _optimize(problem: ActionProblem, z0: np.ndarray, opts: SolverOptions, history: list[float]):
    out = problem.safe_evaluate(z0)
    if out is None:
        raise ConvergenceError("initial guess is not admissible (super-luminal, colliding or out of span)")
    S0, g0 = out
    history.append(S0)
    if problem.gradient_norm(g0) < opts.gtol:
        return z0, S0, g0, 0
    cache: dict = {}

    def fun(z):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            res = problem.safe_evaluate(z)
            cache[key] = res if res is not None else (S0 + _PENALTY * (1 + abs(S0)), np.zeros_like(z))
        return cache[key]

    def callback(zk):
        history.append(fun(zk)[0])

    res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B", callback=callback,
                            options={"maxiter": opts.max_iter, "maxcor": 30, "ftol": 1e-16,
                                     "gtol": opts.gtol * 1e-3, "maxls": 40})
    z, (S, g) = res.x, problem.evaluate(res.x)
    iters = int(res.nit)
    if problem.gradient_norm(g) >= opts.gtol:
        z, S, g, extra = _newton_polish(problem, z, S, g, opts, history)
        iters += extra
    return z, S, g, iters


def minimize_action(boundary: BoundaryData, disc: Discretization | None = None, opts: SolverOptions | None = None,
                    guess: tuple[Trajectory, Trajectory] | None = None) -> MinimizeResult:
    """Find a critical point of the discretized action with the given boundary data.

    ``guess`` is a pair of full worldlines (or just the free parts) used to
    seed the node variables; the default is constant-velocity motion across
    each free range.  With ``opts.align`` the nodes are moved onto the light
    -cone chains of the boundary kinks and the problem re-solved until the
    chain times move by less than ``opts.realign_tol`` of a segment.
    """
    opts = opts or SolverOptions()
    boundary.validate()
    disc = disc or Discretization.with_spacing(boundary, max(boundary.free1[1] - boundary.free1[0], 1.0) / 8)
    if guess is None:
        guess = boundary.straight_guess()
    history: list[float] = []
    total_iters = 0
    seed1, seed2 = guess
    base = disc
    prev_sewing = None
    for _ in range(opts.realign + 1 if opts.align else 1):
        if opts.align:
            s1, s2 = sewing_times(*_full_guess(boundary, seed1, seed2), boundary, r_min=opts.r_min)
            if prev_sewing is not None and _chains_close(prev_sewing, (s1, s2), disc, opts.realign_tol):
                break
            disc = base.aligned(s1, s2)
            prev_sewing = (s1, s2)
        problem = ActionProblem(boundary, disc, opts)
        z0 = problem.pack(seed1, seed2)
        z, S, g, iters = _optimize(problem, z0, opts, history)
        total_iters += iters
        traj1, traj2 = problem.trajectories(z, check_speed=True)
        seed1, seed2 = traj1, traj2
    gnorm = problem.gradient_norm(g)
    converged = gnorm < opts.gtol
    report = criticality_report(traj1, traj2, boundary, opts.report_samples, quad_tol=opts.quad_tol,
                                gradient_norm=gnorm, iterations=total_iters, converged=converged, r_min=opts.r_min)
    report.details.update({"discrete_action": S, "n_variables": int(z.size), "evaluations": problem.n_evals,
                           "nodes1": int(disc.times1.size), "nodes2": int(disc.times2.size)})
    return MinimizeResult(traj1, traj2, report, disc, history)


def _full_guess(boundary: BoundaryData, g1: Trajectory, g2: Trajectory) -> tuple[Trajectory, Trajectory]:
    if g1.t_end < boundary.t_L2_plus - 1e-9:
        g1 = Trajectory.join(g1.restrict(*boundary.free1), boundary.future1)
    if g2.t_start > boundary.t_O1_minus + 1e-9:
        g2 = Trajectory.join(boundary.past2, g2.restrict(*boundary.free2))
    return g1, g2


def _chains_close(old, new, disc: Discretization, tol: float) -> bool:
    for a, b, times in ((old[0], new[0], disc.times1), (old[1], new[1], disc.times2)):
        if a.size != b.size:
            return False
        if a.size and np.max(np.abs(a - b)) > tol * np.min(np.diff(times)):
            return False
    return True


__all__ = ["ActionProblem", "Discretization", "MinimizeResult", "SolverOptions", "minimize_action", "sewing_times"]
