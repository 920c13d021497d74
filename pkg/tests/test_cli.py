import json

import numpy as np
import pytest
from pytest import approx

from qdyn import cli, dynamics
from qdyn.cli import build_parser, load_config, main
from qdyn.electronic import build_electronic_structure
from qdyn.molecule import read_xyz, serialize_xyz
from qdyn.pauli import PauliSum
from qdyn.scf import OrbitalTrackingError, ScfConvergenceError

from systems import colinear_h3, h2


@pytest.fixture
def h2_xyz(tmp_path):
    path = tmp_path / "h2.xyz"
    path.write_text(serialize_xyz(h2(), "hydrogen"))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_energy_with_oracle(h2_xyz, tmp_path):
    out = tmp_path / "out"
    assert run("energy", h2_xyz, "--oracle", "--trace", "-o", out) == cli.EXIT_OK
    data = json.loads((out / "energy.json").read_text())
    assert data["energy_vqe"] == approx(data["energy_exact"], abs=1e-7)
    assert data["energy_vqe"] < data["energy_hf"]
    assert data["n_pauli_terms"] == 15
    assert (out / "vqe_trace.csv").read_text().startswith("iteration,energy,grad_norm")


def test_hamiltonian_dump_round_trip(h2_xyz, tmp_path):
    dump = tmp_path / "dumps" / "h.txt"
    ints = tmp_path / "dumps" / "ints.txt"
    assert run("energy", h2_xyz, "-o", tmp_path, "--dump-hamiltonian", dump, "--dump-integrals", ints) == 0
    loaded = PauliSum.from_text(dump.read_text())
    ref = build_electronic_structure(h2()).hamiltonian
    assert loaded.words == ref.words
    assert np.array_equal(loaded.coeffs, ref.coeffs)
    assert ints.stat().st_size > 0


@pytest.mark.parametrize("argv,code", [
    (["energy", "missing.xyz"], cli.EXIT_NOT_FOUND),
    (["energy"], cli.EXIT_USAGE),
    (["teleport", "x.xyz"], cli.EXIT_USAGE),
    (["energy", "{h2}", "--basis", "cc-pvdz"], cli.EXIT_USAGE),
    (["energy", "{h2}", "--dt", "-1"], cli.EXIT_USAGE),
    (["energy", "{h2}", "--active", "2"], cli.EXIT_USAGE),
    (["energy", "{bad}"], cli.EXIT_BAD_INPUT),
    (["ts", "{h2}"], cli.EXIT_TS_PRECONDITION),
    (["md", "{h2}", "--v0", "7:0,0,1", "--steps", "1"], cli.EXIT_USAGE),
])
def test_exit_codes(argv, code, h2_xyz, tmp_path):
    bad = tmp_path / "bad.xyz"
    bad.write_text("2\n\nH 0 0 0\nH 0 0 zero\n")
    argv = [a.format(h2=h2_xyz, bad=bad) for a in argv]
    assert run(*argv, "-o", tmp_path) == code


def test_unconverged_optimization_exit_code(tmp_path):
    path = tmp_path / "h2.xyz"
    path.write_text(serialize_xyz(h2(0.9)))
    assert run("opt", path, "--max-steps", "1", "-o", tmp_path) == cli.EXIT_NOT_CONVERGED


@pytest.mark.parametrize("exc,code", [
    (ScfConvergenceError("no"), cli.EXIT_SCF),
    (OrbitalTrackingError("no"), cli.EXIT_TRACKING),
    (KeyError("no"), cli.EXIT_INTERNAL),
])
def test_failure_exit_codes(exc, code, h2_xyz, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise exc

    monkeypatch.setattr(cli, "build_electronic_structure", boom)
    assert run("energy", h2_xyz, "-o", tmp_path) == code


def test_truncated_trajectory_exit_code(h2_xyz, tmp_path, monkeypatch):
    monkeypatch.setattr(dynamics, "COLLISION_DISTANCE", 5.0)
    assert run("md", h2_xyz, "--steps", "3", "-o", tmp_path) == cli.EXIT_TRUNCATED
    assert json.loads((tmp_path / "md.json").read_text())["completed"] is False


def test_config_precedence_and_relative_paths(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    config = sub / "run.json"
    config.write_text(json.dumps({
        "command": "md", "input": "mol.xyz", "dt": 0.5, "n_steps": 40,
        "velocities": {"1": [0, 0, 0.1]}, "output_dir": "out", "comment": "ignored",
    }))
    parser = build_parser()
    cfg = load_config(parser.parse_args(["md", "--config", str(config), "--dt", "0.1"]))
    assert cfg.dt == 0.1
    assert cfg.n_steps == 40
    assert cfg.delta_d == 1e-3
    assert cfg.velocities == {1: (0.0, 0.0, 0.1)}
    assert cfg.input == str(sub / "mol.xyz")
    assert cfg.output_dir == str(sub / "out")
    cfg = load_config(parser.parse_args(["md", "--config", str(config), "--v0", "0:1,2,3;2:0,0,-1"]))
    assert cfg.velocities == {0: (1.0, 2.0, 3.0), 2: (0.0, 0.0, -1.0)}


def test_config_errors(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"command": "md", "input": "x.xyz", "timestep": 0.1}))
    assert run("md", "--config", config) == cli.EXIT_USAGE
    config.write_text(json.dumps({"command": "freq", "input": "x.xyz"}))
    assert run("md", "--config", config) == cli.EXIT_USAGE
    config.write_text("{not json")
    assert run("md", "--config", config) == cli.EXIT_USAGE
    assert run("md", "--config", tmp_path / "nope.json") == cli.EXIT_NOT_FOUND


def test_md_output_is_deterministic(h2_xyz, tmp_path):
    outputs = []
    for k, threads in enumerate((1, 1, 2)):
        out = tmp_path / f"run{k}"
        assert run("md", h2_xyz, "--steps", "3", "--v0", "1:0,0,0.01", "--threads", threads, "-o", out) == 0
        outputs.append(((out / "energies.csv").read_bytes(), (out / "trajectory.xyz").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]
    rows = outputs[0][0].decode().splitlines()
    assert len(rows) == 5


def test_extract_frame(h2_xyz, tmp_path):
    assert run("md", h2_xyz, "--steps", "4", "--dt", "0.5", "-o", tmp_path) == 0
    traj = tmp_path / "trajectory.xyz"
    assert run("extract-frame", traj, "--frame", "2", "--output", tmp_path / "f2.xyz") == 0
    assert run("extract-frame", traj, "--time", "1.1", "--output", tmp_path / "t.xyz") == 0
    assert (tmp_path / "f2.xyz").read_text() == (tmp_path / "t.xyz").read_text()
    assert run("extract-frame", traj, "-o", tmp_path) == 0
    assert read_xyz(tmp_path / "frame_4.xyz").n_atoms == 2
    assert run("extract-frame", traj, "--frame", "9") == cli.EXIT_USAGE


def test_small_scan_with_oracle(tmp_path):
    path = tmp_path / "h3.xyz"
    path.write_text(serialize_xyz(colinear_h3(2.0, 0.735)))
    argv = ["scan", path, "--oracle", "--scan-start", "2.0", "--scan-stop", "1.0", "--scan-points", "3", "-o", tmp_path]
    assert run(*argv) == 0
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == "distance_angstrom,E_VQE,E_oracle,F_VQE,F_oracle"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert rows[:, 0] == approx([2.0, 1.5, 1.0])
    assert rows[:, 1] == approx(rows[:, 2], abs=1e-6)
    assert rows[:, 3] == approx(rows[:, 4], abs=1e-4)


def test_freq_writes_modes_and_hessian(h2_xyz, tmp_path):
    dump = tmp_path / "hess.txt"
    assert run("freq", h2_xyz, "--hessian", "approx", "--project", "--dump-hessian", dump, "-o", tmp_path) == 0
    data = json.loads((tmp_path / "freq.json").read_text())
    assert data["hessian"] == "approximate"
    assert len(data["vibrations_cm-1"]) == 1
    assert np.loadtxt(dump).shape == (6, 6)
