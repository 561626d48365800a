"""Reading and writing trajectories, problem files and result bundles.

Floats are written with ``repr``, the shortest decimal string that reads
back to the same double (at most 17 significant digits), so JSON files
round-trip bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .errors import ConfigError, SuperluminalError
from .lagrangian import evaluate
from .lightcone import R_MIN
from .trajectory import BoundaryData, Path, Trajectory

FORMAT = "varem-trajectories"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2)


def write_json(path, obj) -> None:
    FsPath(path).write_text(dumps(obj) + "\n")


def read_json(path) -> dict:
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


# -- trajectories ---------------------------------------------------------------


def trajectory_doc(traj: Trajectory) -> dict:
    return {"nodes": traj.nodes()}


def trajectory_from_doc(doc, name: str = "trajectory") -> Trajectory:
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise ConfigError(f"{name}: expected an object with a 'nodes' list")
    try:
        return Trajectory.from_nodes(doc["nodes"])
    except SuperluminalError as exc:
        raise SuperluminalError(f"{name}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{name}: malformed node ({exc})") from exc
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def pair_doc(traj1: Trajectory, traj2: Trajectory, masses=None, **meta) -> dict:
    particles = []
    for k, traj in enumerate((traj1, traj2)):
        entry = {"particle": k + 1}
        if masses is not None:
            entry["mass"] = float(masses[k])
        entry.update(trajectory_doc(traj))
        particles.append(entry)
    return {"format": FORMAT, **meta, "particles": particles}


def pair_from_doc(doc, name: str = "trajectories") -> tuple[Trajectory, Trajectory, tuple[float, float] | None]:
    parts = doc.get("particles") if isinstance(doc, dict) else None
    if not isinstance(parts, list) or len(parts) != 2:
        raise ConfigError(f"{name}: expected a 'particles' list with two entries")
    trajs = [trajectory_from_doc(p, f"{name} particle {k + 1}") for k, p in enumerate(parts)]
    masses = None
    if all("mass" in p for p in parts):
        masses = (_number(parts[0]["mass"], "mass"), _number(parts[1]["mass"], "mass"))
    return trajs[0], trajs[1], masses


def save_pair(path, traj1: Trajectory, traj2: Trajectory, masses=None, **meta) -> None:
    write_json(path, pair_doc(traj1, traj2, masses, **meta))


def load_pair(path) -> tuple[Trajectory, Trajectory, tuple[float, float] | None]:
    return pair_from_doc(read_json(path), str(path))


def write_nodes_csv(path, traj: Trajectory) -> None:
    """One row per node and side: ``t, x, y, z, vx, vy, vz, side``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "vx", "vy", "vz", "side"])
        for t, x, vl, vr in zip(traj.times, traj.x, traj.v_left, traj.v_right):
            for side, v in (("left", vl), ("right", vr)):
                w.writerow([repr(float(t)), *(repr(float(c)) for c in x), *(repr(float(c)) for c in v), side])


def series(traj_i: Path, traj_j: Path, mass: float, lo: float, hi: float, n: int = 400,
           *, r_min: float = R_MIN) -> dict:
    """Sampled ``t, x, v, P, E`` of one particle on ``[lo, hi]``."""
    ts = np.linspace(lo, hi, n + 1)
    x = traj_i.position(ts)
    v = traj_i.velocity(ts)
    ev = evaluate(ts, x, v, mass, traj_j, r_min=r_min)
    return {"t": ts, "x": x, "v": v, "P": ev.P, "E": ev.E}


def write_series_csv(path, data: dict[int, dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["particle", "t", "x", "y", "z", "vx", "vy", "vz", "Px", "Py", "Pz", "E"])
        for particle, s in sorted(data.items()):
            for k in range(s["t"].size):
                row = [s["t"][k], *s["x"][k], *s["v"][k], *s["P"][k], s["E"][k]]
                w.writerow([particle, *(repr(float(c)) for c in row)])


# -- problem files ----------------------------------------------------------------


@dataclass
class ProblemConfig:
    """Parsed problem file.

    ``boundary`` is built either from explicit segments (``past2``,
    ``future1``, ``x_O1``, ``x_L2``) or by cutting two worldlines given under
    ``trajectories`` at ``t_O1`` and ``t_L2``.
    """

    boundary: BoundaryData
    method: str = "minimize"
    nodes: tuple[int, int] | None = None
    spacing: float | None = None
    gtol: float = 1e-8
    quad_tol: float = 1e-10
    max_iter: int = 3000
    r_min: float = R_MIN
    align: bool = True
    seed: int = 0
    output: str | None = None
    guess: tuple[Trajectory, Trajectory] | None = None
    source: str | None = None
    extra: dict = field(default_factory=dict)


def _number(value, name: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"'{name}' must be positive, got {value!r}")
    return float(value)


def _vector(value, name: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"'{name}' must be a list of three numbers")
    return np.array([_number(c, name) for c in value])


def _resolve(ref, base: FsPath | None, name: str):
    if isinstance(ref, str):
        path = FsPath(ref)
        if base is not None and not path.is_absolute():
            path = base / path
        return read_json(path), str(path)
    return ref, name


def boundary_from_doc(doc, masses, base: FsPath | None = None) -> BoundaryData:
    if not isinstance(doc, dict):
        raise ConfigError("'boundary' must be an object")
    m1, m2 = masses
    if "trajectories" in doc:
        pair, name = _resolve(doc["trajectories"], base, "boundary trajectories")
        traj1, traj2, _ = pair_from_doc(pair, name)
        for key in ("t_O1", "t_L2"):
            if key not in doc:
                raise ConfigError(f"boundary: missing '{key}'")
        return BoundaryData.from_trajectories(traj1, traj2, _number(doc["t_O1"], "t_O1"),
                                              _number(doc["t_L2"], "t_L2"), m1, m2)
    for key in ("t_O1", "x_O1", "t_L2", "x_L2", "past2", "future1"):
        if key not in doc:
            raise ConfigError(f"boundary: missing '{key}'")
    past2 = trajectory_from_doc(_resolve(doc["past2"], base, "past2")[0], "boundary segment past2")
    future1 = trajectory_from_doc(_resolve(doc["future1"], base, "future1")[0], "boundary segment future1")
    data = BoundaryData(m1, m2, _number(doc["t_O1"], "t_O1"), _vector(doc["x_O1"], "x_O1"),
                        _number(doc["t_L2"], "t_L2"), _vector(doc["x_L2"], "x_L2"), past2, future1)
    data.validate()
    return data


def boundary_doc(boundary: BoundaryData) -> dict:
    return {"t_O1": boundary.t_O1, "x_O1": boundary.x_O1, "t_L2": boundary.t_L2, "x_L2": boundary.x_L2,
            "past2": trajectory_doc(boundary.past2), "future1": trajectory_doc(boundary.future1)}


def parse_masses(doc) -> tuple[float, float]:
    masses = doc.get("masses", [1.0, 1.0])
    if not isinstance(masses, list) or len(masses) != 2:
        raise ConfigError("'masses' must be a list of two numbers")
    return _number(masses[0], "masses", True), _number(masses[1], "masses", True)


def problem_from_doc(doc, base: FsPath | None = None, source: str | None = None) -> ProblemConfig:
    """Validate a problem document.  Bad structure raises :class:`ConfigError`;
    physically invalid data raise the corresponding library error."""
    if not isinstance(doc, dict):
        raise ConfigError("problem file must contain a JSON object")
    if "boundary" not in doc:
        raise ConfigError("problem file has no 'boundary'")
    masses = parse_masses(doc)
    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be an object")
    method = doc.get("method", "minimize")
    if method not in ("minimize", "shoot"):
        raise ConfigError(f"unknown method {method!r} (expected 'minimize' or 'shoot')")
    nodes = solver.get("nodes")
    if nodes is not None:
        if isinstance(nodes, int) and not isinstance(nodes, bool):
            nodes = (nodes, nodes)
        elif isinstance(nodes, list) and len(nodes) == 2 and all(isinstance(n, int) for n in nodes):
            nodes = tuple(nodes)
        else:
            raise ConfigError("'solver.nodes' must be an integer or a pair of integers")
        if min(nodes) < 1:
            raise ConfigError("'solver.nodes' must be positive")
    spacing = solver.get("spacing")
    cfg = ProblemConfig(
        boundary=boundary_from_doc(doc["boundary"], masses, base),
        method=method,
        nodes=nodes,
        spacing=None if spacing is None else _number(spacing, "solver.spacing", True),
        gtol=_number(solver.get("gtol", 1e-8), "solver.gtol", True),
        quad_tol=_number(solver.get("quad_tol", 1e-10), "solver.quad_tol", True),
        max_iter=int(_number(solver.get("max_iter", 3000), "solver.max_iter", True)),
        r_min=_number(solver.get("r_min", R_MIN), "solver.r_min", True),
        align=bool(solver.get("align", True)),
        seed=int(_number(doc.get("seed", 0), "seed")),
        output=doc.get("output"),
        source=source,
    )
    if "guess" in doc:
        pair, name = _resolve(doc["guess"], base, "guess")
        g1, g2, _ = pair_from_doc(pair, name)
        cfg.guess = (g1, g2)
    return cfg


def load_problem(path) -> ProblemConfig:
    path = FsPath(path)
    return problem_from_doc(read_json(path), path.parent, str(path))


def problem_doc(boundary: BoundaryData, method: str = "minimize", **solver) -> dict:
    doc = {"masses": [boundary.m1, boundary.m2], "method": method, "boundary": boundary_doc(boundary)}
    if solver:
        doc["solver"] = solver
    return doc


__all__ = [
    "ProblemConfig",
    "boundary_doc",
    "boundary_from_doc",
    "dumps",
    "load_pair",
    "load_problem",
    "pair_doc",
    "pair_from_doc",
    "problem_doc",
    "problem_from_doc",
    "read_json",
    "save_pair",
    "series",
    "trajectory_doc",
    "trajectory_from_doc",
    "write_json",
    "write_nodes_csv",
    "write_series_csv",
]
