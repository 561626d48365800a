"""Command-line front end.

Subcommands::

    varem solve PROBLEM.json        minimize or shoot, write a result bundle
    varem verify TRAJ.json          criticality report of given worldlines
    varem orbit --ell L             circular orbit plus a ready-made problem file
    varem eval TRAJ.json            action breakdown

Exit codes: 0 success, 2 no convergence, 3 verification failed, 64 usage or
parse error, 70 evaluation error.  Every numeric flag can also be set by an
environment variable ``VAREM_<FLAG>`` (``VAREM_QUAD_TOL``, ``VAREM_GTOL``,
...); an explicit flag wins.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path as FsPath

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .action import evaluate_action, gateaux_derivative
from .errors import BoundaryDataError, ConfigError, ConvergenceError, VaremError
from .lightcone import R_MIN
from .solver import (
    Discretization,
    ShootingOptions,
    SolverOptions,
    criticality_report,
    find_circular_orbit,
    minimize_action,
    shoot_shortest_boundary,
)
from .solver.report import DEFAULT_THRESHOLD
from .trajectory import BoundaryData, Trajectory

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_VERIFY_FAILED = 3
EXIT_USAGE = 64
EXIT_RUNTIME = 70

log = logging.getLogger("varem")

# flag name -> (type, library default)
_TUNABLES = {
    "quad_tol": (float, 1e-10),
    "gtol": (float, 1e-8),
    "nodes": (int, None),
    "rmin": (float, R_MIN),
    "seed": (int, 0),
    "threads": (int, None),
    "out": (str, None),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setting(args, name):
    """Flag value, else ``VAREM_<NAME>``, else ``None``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    kind, _ = _TUNABLES[name]
    raw = os.environ.get("VAREM_" + name.upper())
    if raw is None or raw == "":
        return None
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"VAREM_{name.upper()}={raw!r} is not a valid {kind.__name__}") from None


def _positive(name, value):
    if value is not None and not value > 0:
        raise UsageError(f"--{name.replace('_', '-')} must be positive, got {value}")
    return value


def _out_dir(args, fallback=None) -> FsPath | None:
    out = _setting(args, "out") or fallback
    if out is None:
        return None
    path = FsPath(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_json(obj) -> None:
    sys.stdout.write(io.dumps(obj) + "\n")


# -- solve --------------------------------------------------------------------


def _write_bundle(out: FsPath, traj1, traj2, boundary: BoundaryData, report, *, method, history=None,
                  plots=True) -> None:
    masses = (boundary.m1, boundary.m2)
    io.save_pair(out / "trajectories.json", traj1, traj2, masses, method=method, boundary=io.boundary_doc(boundary))
    io.write_json(out / "report.json", report.to_dict())
    io.write_nodes_csv(out / "nodes1.csv", traj1)
    io.write_nodes_csv(out / "nodes2.csv", traj2)
    data = {1: io.series(traj1, traj2, boundary.m1, *boundary.free1),
            2: io.series(traj2, traj1, boundary.m2, *boundary.free2)}
    io.write_series_csv(out / "series.csv", data)
    if plots:
        from . import plotting

        plotting.plot_worldlines(traj1, traj2, out / "worldlines.png", free=(boundary.free1, boundary.free2))
        plotting.plot_series(data, out / "momentum.png")
        if history:
            plotting.plot_history(history, out / "history.png")


def cmd_solve(args) -> int:
    cfg = io.load_problem(args.problem)
    method = args.method or cfg.method
    gtol = _positive("gtol", _setting(args, "gtol")) or cfg.gtol
    quad_tol = _positive("quad_tol", _setting(args, "quad_tol")) or cfg.quad_tol
    r_min = _positive("rmin", _setting(args, "rmin")) or cfg.r_min
    nodes = _setting(args, "nodes")
    if nodes is not None:
        _positive("nodes", nodes)
        nodes = (nodes, nodes)
    nodes = nodes or cfg.nodes
    out = _out_dir(args, cfg.output or "varem-out")
    b = cfg.boundary
    if method == "shoot":
        opts = ShootingOptions(r_min=r_min, quad_tol=quad_tol)
        try:
            result = shoot_shortest_boundary(b, opts=opts)
        except ConvergenceError as exc:
            io.write_json(out / "report.json", {"converged": False, "method": "shoot", "message": str(exc)})
            log.error("shooting did not converge: %s", exc)
            return EXIT_NOT_CONVERGED
        history = None
        converged = True
    else:
        opts = SolverOptions(gtol=gtol, quad_tol=quad_tol, r_min=r_min, max_iter=cfg.max_iter, align=cfg.align)
        if nodes is not None:
            disc = Discretization.uniform(b, *nodes)
        elif cfg.spacing is not None:
            disc = Discretization.with_spacing(b, cfg.spacing)
        else:
            disc = None
        result = minimize_action(b, disc, opts, guess=cfg.guess)
        history = result.history
        converged = bool(result.report.converged)
    report = result.report
    report.details["method"] = method
    _write_bundle(out, result.traj1, result.traj2, b, report, method=method, history=history, plots=not args.no_plots)
    _print_json({"converged": converged, "action": report.action, "gradient_norm": report.gradient_norm,
                 "max_el_residual": report.max_el_residual, "max_dP": report.max_dP, "max_dE": report.max_dE,
                 "out": str(out)})
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


# -- verify / eval --------------------------------------------------------------


def _masses(args, file_masses):
    if args.masses is not None:
        m = tuple(args.masses)
    elif file_masses is not None:
        m = file_masses
    else:
        m = (1.0, 1.0)
    if min(m) <= 0:
        raise UsageError("masses must be positive")
    return m


def _boundary_for(args, traj1: Trajectory, traj2: Trajectory, masses) -> BoundaryData | None:
    if args.problem is not None:
        return io.load_problem(args.problem).boundary
    if (args.t_O1 is None) != (args.t_L2 is None):
        raise UsageError("--t-O1 and --t-L2 must be given together")
    if args.t_O1 is None:
        return None
    return BoundaryData.from_trajectories(traj1, traj2, args.t_O1, args.t_L2, *masses)


def default_window(traj1, traj2, n: int = 400) -> tuple[float, float]:
    """Common span shrunk by the largest separation so both light-cone images stay on the data."""
    lo = max(traj1.t_start, traj2.t_start)
    hi = min(traj1.t_end, traj2.t_end)
    if not hi > lo:
        raise BoundaryDataError(f"worldline spans do not overlap: [{traj1.t_start}, {traj1.t_end}] "
                                f"and [{traj2.t_start}, {traj2.t_end}]")
    ts = np.linspace(lo, hi, n + 1)
    sep = float(np.max(np.linalg.norm(traj1.position(ts) - traj2.position(ts), axis=-1)))
    margin = 1.05 * sep + 1e-9 * (1 + abs(lo) + abs(hi))
    if not hi - margin > lo + margin:
        raise BoundaryDataError(f"common span [{lo}, {hi}] is too short for separations up to {sep:.6g}")
    return lo + margin, hi - margin


def _bump(lo: float, hi: float, rng: np.random.Generator) -> Trajectory:
    mid = 0.5 * (lo + hi)
    amp = rng.normal(size=3) * 0.01 * (hi - lo)
    zero = np.zeros(3)
    return Trajectory([lo, mid, hi], [zero, amp, zero], [zero, zero, zero], check_speed=False)


def cmd_verify(args) -> int:
    traj1, traj2, file_masses = io.load_pair(args.trajectories)
    masses = _masses(args, file_masses)
    r_min = _positive("rmin", _setting(args, "rmin")) or R_MIN
    quad_tol = _positive("quad_tol", _setting(args, "quad_tol")) or 1e-10
    seed = _setting(args, "seed") or 0
    boundary = _boundary_for(args, traj1, traj2, masses)
    if boundary is None:
        window = tuple(args.window) if args.window else default_window(traj1, traj2)
        report = criticality_report(traj1, traj2, None, args.samples, masses=masses, window=window,
                                    quad_tol=quad_tol, r_min=r_min)
        report.details["window"] = list(window)
    else:
        report = criticality_report(traj1, traj2, boundary, args.samples, quad_tol=quad_tol, r_min=r_min)
        rng = np.random.default_rng(seed)
        probes = []
        for _ in range(args.probes):
            for particle in (1, 2):
                b = _bump(*boundary.free_range(particle), rng)
                probes.append(abs(gateaux_derivative(traj1, traj2, boundary, b, particle)))
        report.details["gateaux_probes"] = probes
        report.details["seed"] = seed
    passed = report.is_critical(args.threshold)
    report.details["threshold"] = args.threshold
    report.details["passed"] = passed
    out = _out_dir(args)
    if out is not None:
        io.write_json(out / "report.json", report.to_dict())
    _print_json(report.to_dict())
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def cmd_eval(args) -> int:
    traj1, traj2, file_masses = io.load_pair(args.trajectories)
    masses = _masses(args, file_masses)
    boundary = _boundary_for(args, traj1, traj2, masses)
    if boundary is None:
        raise UsageError("eval needs boundary data: pass --problem or --t-O1/--t-L2")
    quad_tol = _positive("quad_tol", _setting(args, "quad_tol")) or 1e-10
    r_min = _positive("rmin", _setting(args, "rmin")) or R_MIN
    ab = evaluate_action(traj1, traj2, boundary, form=args.form, quad_tol=quad_tol, r_min=r_min)
    doc = ab.to_dict()
    out = _out_dir(args)
    if out is not None:
        io.write_json(out / "action.json", doc)
    _print_json(doc)
    return EXIT_OK


# -- orbit ------------------------------------------------------------------------


def cmd_orbit(args) -> int:
    r_min = _positive("rmin", _setting(args, "rmin")) or R_MIN
    if not args.ell > r_min:
        raise UsageError(f"--ell must exceed r_min={r_min:g}, got {args.ell}")
    if args.m1 <= 0 or args.m2 <= 0:
        raise UsageError("masses must be positive")
    orbit = find_circular_orbit(args.ell, args.m1, args.m2, r_min=r_min)
    ell = args.ell
    mu = args.m1 * args.m2 / (args.m1 + args.m2)
    summary = {"ell": ell, "m1": args.m1, "m2": args.m2, "omega": orbit.omega, "r1": orbit.r1, "r2": orbit.r2,
               "omega_kepler": 1.0 / math.sqrt(mu * ell ** 3), "kepler_ratio": orbit.kepler_ratio(args.m1, args.m2),
               "report": orbit.report.to_dict()}
    out = _out_dir(args)
    if out is not None:
        t_L2 = args.t_L2 if args.t_L2 is not None else 3.0 * ell
        period = 2.0 * math.pi / orbit.omega
        h = min(ell / 20.0, period / 64.0)
        lo, hi = -2.0 * ell - 10.0, t_L2 + 2.0 * ell + 10.0
        times = np.linspace(lo, hi, int(math.ceil((hi - lo) / h)) + 1)
        h1, h2 = orbit.traj1.to_hermite(times), orbit.traj2.to_hermite(times)
        io.save_pair(out / "orbit.json", h1, h2, (args.m1, args.m2), omega=orbit.omega, r1=orbit.r1, r2=orbit.r2)
        boundary = BoundaryData.from_trajectories(h1, h2, 0.0, t_L2, args.m1, args.m2)
        spacing = args.spacing if args.spacing is not None else ell / 5.0
        io.write_json(out / "problem.json", io.problem_doc(boundary, "minimize", spacing=spacing))
        io.write_json(out / "summary.json", summary)
        summary["out"] = str(out)
    _print_json(summary)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quad-tol", dest="quad_tol", type=float, help="quadrature tolerance (default 1e-10)")
    common.add_argument("--gtol", type=float, help="gradient-norm tolerance of the minimizer (default 1e-8)")
    common.add_argument("--nodes", type=int, help="segments per free range (overrides the problem file)")
    common.add_argument("--rmin", type=float, help="minimum admissible separation")
    common.add_argument("--seed", type=int, help="seed for randomized probes")
    common.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="varem", description="Two-body variational electrodynamics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="solve a boundary-value problem")
    p.add_argument("problem")
    p.add_argument("--method", choices=("minimize", "shoot"))
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_solve)

    for name, func, text in (("verify", cmd_verify, "criticality report of worldlines"),
                             ("eval", cmd_eval, "action breakdown of worldlines")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("trajectories")
        p.add_argument("--problem", help="problem file providing the boundary data")
        p.add_argument("--t-O1", dest="t_O1", type=float)
        p.add_argument("--t-L2", dest="t_L2", type=float)
        p.add_argument("--masses", type=float, nargs=2)
        p.set_defaults(func=func)
        if name == "verify":
            p.add_argument("--window", type=float, nargs=2, help="sampling window without boundary data")
            p.add_argument("--samples", type=int, default=3, help="residual probes per smoothness cell")
            p.add_argument("--probes", type=int, default=2, help="random Gateaux probes per particle")
            p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
        else:
            p.add_argument("--form", choices=("aFokker", "L2", "both"), default="aFokker")

    p = sub.add_parser("orbit", parents=[common], help="circular orbit of given separation")
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--m1", type=float, default=1.0)
    p.add_argument("--m2", type=float, default=1.0)
    p.add_argument("--t-L2", dest="t_L2", type=float, help="end time of the generated problem (default 3 ell)")
    p.add_argument("--spacing", type=float, help="node spacing of the generated problem (default ell/5)")
    p.set_defaults(func=cmd_orbit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _setting(args, "threads")
        if threads is not None:
            _positive("threads", threads)
        with threadpool_limits(limits=threads):
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"varem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VaremError, ValueError, ArithmeticError) as exc:
        print(f"varem: evaluation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
