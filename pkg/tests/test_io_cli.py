import json

import numpy as np
import pytest

from varem import io
from varem.cli import main
from varem.errors import ConfigError
from varem.trajectory import BoundaryData, Trajectory

from conftest import random_pair


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def static_files(tmp_path, static_pair):
    traj = tmp_path / "static.json"
    io.save_pair(traj, *static_pair, (1.0, 1.0))
    problem = tmp_path / "problem.json"
    b = BoundaryData.from_trajectories(*static_pair, 0.0, 4.0)
    io.write_json(problem, io.problem_doc(b, "minimize", nodes=2))
    return traj, problem


class TestIO:
    def test_pair_roundtrip_is_bitwise(self, tmp_path, rng):
        t1, t2 = random_pair(rng)
        path = tmp_path / "pair.json"
        io.save_pair(path, t1, t2, (1.0, 1836.0))
        b1, b2, masses = io.load_pair(path)
        assert masses == (1.0, 1836.0)
        for a, b in ((t1, b1), (t2, b2)):
            for name in ("times", "x", "v_left", "v_right"):
                np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_problem_roundtrip(self, tmp_path, static_pair):
        b = BoundaryData.from_trajectories(*static_pair, 0.0, 4.0, 1.0, 2.0)
        path = tmp_path / "p.json"
        io.write_json(path, io.problem_doc(b, "shoot", nodes=[3, 4]))
        cfg = io.load_problem(path)
        assert cfg.method == "shoot" and cfg.nodes == (3, 4)
        assert (cfg.boundary.m1, cfg.boundary.m2) == (1.0, 2.0)
        assert cfg.boundary.free2 == pytest.approx(b.free2)

    @pytest.mark.parametrize("doc", [[], {}, {"boundary": {}, "method": "other"}, {"boundary": 3},
                                     {"boundary": {}, "masses": [1, -1]}])
    def test_bad_problem(self, doc):
        with pytest.raises(ConfigError):
            io.problem_from_doc(doc)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="line 1"):
            io.read_json(path)


class TestCli:
    def test_eval_static(self, capsys, static_files):
        traj, _ = static_files
        code, doc = run(capsys, "eval", traj, "--t-O1", 0, "--t-L2", 4)
        assert code == 0
        assert doc["S"] == pytest.approx(2.0, abs=1e-12)

    def test_verify_static_fails(self, capsys, static_files):
        traj, problem = static_files
        code, doc = run(capsys, "verify", traj, "--problem", problem)
        assert code == 3
        assert doc["max_el_residual"] == pytest.approx(0.25, rel=1e-9)
        assert doc["details"]["passed"] is False

    def test_verify_orbit_passes(self, capsys, tmp_path):
        code, _ = run(capsys, "orbit", "--ell", 10, "--out", tmp_path)
        assert code == 0
        code, doc = run(capsys, "verify", tmp_path / "orbit.json", "--window", -20, 20)
        assert code == 0 and doc["details"]["passed"]

    def test_orbit_equal_masses(self, capsys, tmp_path):
        code, doc = run(capsys, "orbit", "--ell", 40, "--out", tmp_path)
        assert code == 0
        assert doc["r1"] == doc["r2"] == 20.0
        assert {"orbit.json", "problem.json", "summary.json"} <= {p.name for p in tmp_path.iterdir()}
        assert io.load_problem(tmp_path / "problem.json").boundary.t_L2 == pytest.approx(120.0)

    def test_solve_writes_bundle(self, capsys, static_files, tmp_path):
        _, problem = static_files
        out = tmp_path / "run"
        code, doc = run(capsys, "solve", problem, "--out", out, "--no-plots")
        assert code == 0 and doc["converged"]
        assert {"trajectories.json", "report.json", "nodes1.csv", "series.csv"} <= {p.name for p in out.iterdir()}
        t1, t2, _ = io.load_pair(out / "trajectories.json")
        assert t1.position(0.0) == pytest.approx([0, 0, 0])

    def test_solve_deterministic_across_threads(self, capsys, static_files, tmp_path):
        _, problem = static_files
        texts = []
        for threads in (1, 2):
            out = tmp_path / f"t{threads}"
            code, _ = run(capsys, "solve", problem, "--out", out, "--no-plots", "--threads", threads)
            assert code == 0
            texts.append((out / "trajectories.json").read_text())
        assert texts[0] == texts[1]

    def test_non_convergence(self, capsys, tmp_path, static_pair):
        b = BoundaryData.from_trajectories(*static_pair, 0.0, 4.0)
        problem = tmp_path / "p.json"
        io.write_json(problem, io.problem_doc(b, "minimize", nodes=2, max_iter=1))
        code, doc = run(capsys, "solve", problem, "--out", tmp_path / "o", "--no-plots", "--gtol", 1e-30)
        assert code == 2 and doc["converged"] is False

    def test_usage_errors(self, capsys, tmp_path):
        assert main(["orbit", "--ell", "0.5e-9"]) == 64
        assert main(["solve", str(tmp_path / "missing.json")]) == 64
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 64
        capsys.readouterr()

    def test_env_override_and_bad_env(self, capsys, monkeypatch, static_files):
        traj, _ = static_files
        monkeypatch.setenv("VAREM_QUAD_TOL", "oops")
        assert main(["eval", str(traj), "--t-O1", "0", "--t-L2", "4"]) == 64
        capsys.readouterr()

    def test_runtime_error(self, capsys, tmp_path):
        path = tmp_path / "close.json"
        io.save_pair(path, Trajectory.static([0, 0, 0], -5, 5), Trajectory.static([1e-12, 0, 0], -5, 5))
        assert main(["eval", str(path), "--t-O1", "0", "--t-L2", "1"]) == 70
        capsys.readouterr()
