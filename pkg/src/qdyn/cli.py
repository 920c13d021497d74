"""Command-line entry point: ``qdyn <command> INPUT [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from qdyn import __version__
from qdyn.dynamics import compute_forces, run_md, write_energies_csv, write_trajectory_xyz
from qdyn.electronic import build_electronic_structure, solve_vqe
from qdyn.integrals import LinearDependenceError, dump_integrals
from qdyn.molecule import Molecule, XYZParseError, parse_xyz_frames, read_xyz, serialize_xyz
from qdyn.scf import OrbitalTrackingError, ScfConvergenceError
from qdyn.stationary import (
    TsPreconditionError,
    TsSearchError,
    hessian_approx,
    hessian_full,
    normal_modes,
    optimize_geometry,
    ts_search,
)
from qdyn.statevector import exact_ground_state
from qdyn.units import ANGSTROM_PER_FS_TO_AU, ANGSTROM_TO_BOHR, BOHR_TO_ANGSTROM
from qdyn.vqe import write_trace

log = logging.getLogger("qdyn")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NOT_FOUND = 3
EXIT_BAD_INPUT = 4
EXIT_SCF = 5
EXIT_TRACKING = 6
EXIT_NOT_CONVERGED = 7
EXIT_TS_PRECONDITION = 8
EXIT_TRUNCATED = 9

COMMANDS = ("energy", "scan", "opt", "freq", "md", "ts", "extract-frame")


class ConfigError(ValueError):
    pass


class NotConvergedError(RuntimeError):
    pass


class TruncatedTrajectory(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Everything a run needs. Lengths in Angstrom, times in fs, velocities in Angstrom/fs."""

    command: str
    input: str | None = None
    basis: str = "sto-3g"
    active: tuple[int, int] | None = None
    dt: float = 0.2
    n_steps: int = 300
    delta_d: float = 1e-3
    velocities: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    force_mode: str = "correlated"
    output_dir: str = "."
    oracle: bool = False
    hessian: str = "full"
    project: bool = False
    mass_convention: str = "standard"
    max_steps: int = 200
    scan_atoms: tuple[int, int] = (0, 1)
    scan_start: float = 5.0
    scan_stop: float = 0.45
    scan_points: int = 20
    frame: int | None = None
    time: float | None = None
    output: str | None = None
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    trace: bool = False
    dump_hamiltonian: str | None = None
    dump_integrals: str | None = None
    dump_hessian: str | None = None

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.input is None:
            raise ConfigError("no input file given")
        if self.basis.lower() != "sto-3g":
            raise ConfigError(f"only the sto-3g basis is available, got {self.basis!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigError(f"steps must be at least 1, got {self.n_steps}")
        if not self.delta_d > 0:
            raise ConfigError(f"delta_d must be positive, got {self.delta_d}")
        if self.force_mode not in ("correlated", "exact"):
            raise ConfigError(f"force mode must be correlated or exact, got {self.force_mode!r}")
        if self.hessian not in ("approx", "full"):
            raise ConfigError(f"hessian must be approx or full, got {self.hessian!r}")
        if self.mass_convention not in ("standard", "isotope"):
            raise ConfigError(f"mass convention must be standard or isotope, got {self.mass_convention!r}")
        if self.scan_points < 2:
            raise ConfigError("a scan needs at least 2 points")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if self.active is not None and len(self.active) != 2:
            raise ConfigError(f"active space is (electrons, orbitals), got {self.active!r}")
        return self

    @property
    def delta_d_bohr(self) -> float:
        return self.delta_d * ANGSTROM_TO_BOHR


def parse_velocities(specs) -> dict[int, tuple[float, float, float]]:
    """``"atom:vx,vy,vz"`` entries, separated by ';' or given repeatedly."""
    out: dict[int, tuple[float, float, float]] = {}
    for spec in specs:
        for item in filter(None, (s.strip() for s in spec.split(";"))):
            try:
                atom, vec = item.split(":")
                values = tuple(float(v) for v in vec.split(","))
                if len(values) != 3:
                    raise ValueError
                out[int(atom)] = values
            except ValueError:
                raise ConfigError(f"bad velocity {item!r}; expected 'atom:vx,vy,vz'") from None
    return out


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated integers, got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdyn", description="VQE-driven reaction dynamics workbench.")
    p.add_argument("--version", action="version", version=f"qdyn {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("input", nargs="?", default=argparse.SUPPRESS, help="XYZ file (trajectory for extract-frame)")
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("-o", "--output-dir", dest="output_dir", default=S)
    p.add_argument("--basis", default=S)
    p.add_argument("--active", type=_pair, default=S, help="active space as ELECTRONS,ORBITALS")
    p.add_argument("--delta-d", dest="delta_d", type=float, default=S, help="finite-difference step, Angstrom")
    p.add_argument("--dt", type=float, default=S, help="MD time step, fs")
    p.add_argument("--steps", dest="n_steps", type=int, default=S)
    p.add_argument("--v0", action="append", default=S, help="initial velocity 'atom:vx,vy,vz' in Angstrom/fs")
    p.add_argument("--exact-forces", dest="force_mode", action="store_const", const="exact", default=S)
    p.add_argument("--oracle", action="store_const", const=True, default=S)
    p.add_argument("--hessian", choices=("approx", "full"), default=S)
    p.add_argument("--project", action="store_const", const=True, default=S,
                   help="remove translations and rotations before diagonalizing")
    p.add_argument("--masses", dest="mass_convention", choices=("standard", "isotope"), default=S)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=S)
    p.add_argument("--scan-atoms", dest="scan_atoms", type=_pair, default=S,
                   help="MOVING,FIXED atom indices; the moving atom slides along their axis")
    p.add_argument("--scan-start", dest="scan_start", type=float, default=S)
    p.add_argument("--scan-stop", dest="scan_stop", type=float, default=S)
    p.add_argument("--scan-points", dest="scan_points", type=int, default=S)
    p.add_argument("--frame", type=int, default=S)
    p.add_argument("--time", type=float, default=S)
    p.add_argument("--output", default=S, help="output path for extract-frame ('-' for stdout)")
    p.add_argument("--threads", type=int, default=S)
    p.add_argument("--trace", action="store_const", const=True, default=S)
    p.add_argument("--dump-hamiltonian", dest="dump_hamiltonian", default=S)
    p.add_argument("--dump-integrals", dest="dump_integrals", default=S)
    p.add_argument("--dump-hessian", dest="dump_hessian", default=S)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then command-line flags."""
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known - {"comment"}
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        data.pop("comment", None)
        for key in ("input", "output_dir", "output", "dump_hamiltonian", "dump_integrals", "dump_hessian"):
            if isinstance(data.get(key), str) and data[key] != "-" and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
        if data.get("command", args.command) != args.command:
            raise ConfigError(f"{path} is a {data['command']!r} config, not {args.command!r}")
        values.update(data)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    values.update(flags)
    if "v0" in values:
        values["velocities"] = parse_velocities(values.pop("v0"))
    elif isinstance(values.get("velocities"), dict):
        values["velocities"] = {int(k): tuple(float(x) for x in v) for k, v in values["velocities"].items()}
    for key in ("active", "scan_atoms"):
        if values.get(key) is not None:
            values[key] = tuple(int(v) for v in values[key])
    try:
        return RunConfig(**values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# --- commands -------------------------------------------------------------------


def _read_molecule(cfg: RunConfig) -> Molecule:
    path = Path(cfg.input)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return read_xyz(path)


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _user_path(name: str) -> Path:
    path = Path(name)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _oracle_energy(structure) -> float:
    return exact_ground_state(structure.hamiltonian, structure.n_electrons, 0.0)[0]


def cmd_energy(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    structure = build_electronic_structure(mol, cfg.active)
    result = solve_vqe(structure)
    payload = {
        "energy_hf": structure.scf.energy,
        "energy_vqe": result.energy,
        "vqe_iterations": result.iterations,
        "vqe_converged": result.converged,
        "gradient_norm": result.gradient_norm,
        "n_qubits": structure.n_qubits,
        "n_electrons": structure.n_electrons,
        "n_pauli_terms": len(structure.hamiltonian),
        "n_parameters": structure.ansatz.n_params,
    }
    if cfg.oracle:
        payload["energy_exact"] = _oracle_energy(structure)
    if cfg.dump_hamiltonian:
        _user_path(cfg.dump_hamiltonian).write_text(structure.hamiltonian.to_text())
    if cfg.dump_integrals:
        with open(_user_path(cfg.dump_integrals), "w") as fh:
            dump_integrals(structure.integrals, fh)
    if cfg.trace:
        with open(_out(cfg, "vqe_trace.csv"), "w") as fh:
            write_trace(result, fh)
    _write_json(_out(cfg, "energy.json"), payload)
    print(f"E_HF = {structure.scf.energy:.10f}  E_VQE = {result.energy:.10f}"
          + (f"  E_exact = {payload['energy_exact']:.10f}" if cfg.oracle else ""))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def scan_geometries(mol: Molecule, moving: int, fixed: int, distances_angstrom) -> list[Molecule]:
    """Slide atom ``moving`` along its axis to atom ``fixed``; every other atom stays put."""
    axis = mol.coords[moving] - mol.coords[fixed]
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ConfigError("scan atoms coincide")
    axis = axis / norm
    out = []
    for r in distances_angstrom:
        coords = mol.coords.copy()
        coords[moving] = coords[fixed] + r * ANGSTROM_TO_BOHR * axis
        out.append(mol.with_coords(coords))
    return out


def cmd_scan(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    moving, fixed = cfg.scan_atoms
    if not (0 <= moving < mol.n_atoms and 0 <= fixed < mol.n_atoms) or moving == fixed:
        raise ConfigError(f"scan atoms {cfg.scan_atoms} invalid for {mol.n_atoms} atoms")
    distances = np.linspace(cfg.scan_start, cfg.scan_stop, cfg.scan_points)
    axis = mol.coords[moving] - mol.coords[fixed]
    axis = axis / np.linalg.norm(axis)
    rows = []
    for r, geom in zip(distances, scan_geometries(mol, moving, fixed, distances)):
        structure = build_electronic_structure(geom, cfg.active)
        result = solve_vqe(structure)
        forces = compute_forces(structure, result, cfg.delta_d_bohr, threads=cfg.threads)
        row = [r, result.energy, "", float(forces.forces[moving] @ axis), ""]
        if cfg.oracle:
            exact = compute_forces(structure, result, cfg.delta_d_bohr, mode="exact", threads=cfg.threads)
            row[2] = _oracle_energy(structure)
            row[4] = float(exact.forces[moving] @ axis)
        rows.append(row)
        log.info("scan %.4f A: E = %.10f", r, result.energy)
    with open(_out(cfg, "scan.csv"), "w") as fh:
        fh.write("distance_angstrom,E_VQE,E_oracle,F_VQE,F_oracle\n")
        for row in rows:
            fh.write(",".join("" if v == "" else f"{v:.15g}" for v in row) + "\n")
    return EXIT_OK


def cmd_opt(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    res = optimize_geometry(mol, cfg.max_steps, active=cfg.active, delta_d=cfg.delta_d_bohr, threads=cfg.threads)
    _out(cfg, "optimized.xyz").write_text(serialize_xyz(res.molecule, f"E={res.energy:.12f}"))
    d = res.molecule.distance_matrix() * BOHR_TO_ANGSTROM
    iu = np.triu_indices(mol.n_atoms, 1)
    _write_json(_out(cfg, "opt.json"), {
        "energy": res.energy,
        "converged": res.converged,
        "steps": res.steps,
        "max_force": res.forces.max_abs(),
        "distances_angstrom": {f"{i}-{j}": float(d[i, j]) for i, j in zip(*iu)},
    })
    print(f"E = {res.energy:.10f}  steps = {res.steps}  max|F| = {res.forces.max_abs():.2e}")
    if not res.converged:
        raise NotConvergedError("geometry optimization did not converge")
    return EXIT_OK


def cmd_freq(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    structure = build_electronic_structure(mol, cfg.active)
    result = solve_vqe(structure)
    if cfg.hessian == "full":
        hess = hessian_full(structure, cfg.delta_d_bohr, reference=result, threads=cfg.threads)
    else:
        hess = hessian_approx(structure, result, cfg.delta_d_bohr, threads=cfg.threads)
    modes = normal_modes(hess, mol.masses(cfg.mass_convention), project=cfg.project, coords=mol.coords)
    payload = {
        "hessian": hess.method,
        "energy": result.energy,
        "vqe_calls": hess.vqe_calls,
        "raw_asymmetry": hess.raw_asymmetry,
        "mass_convention": cfg.mass_convention,
        **modes.to_dict(),
    }
    _write_json(_out(cfg, "freq.json"), payload)
    if cfg.dump_hessian:
        _user_path(cfg.dump_hessian).write_text(hess.to_text())
    print("frequencies (cm^-1): " + " ".join(f"{v:.1f}" for v in modes.vibrations))
    return EXIT_OK


def cmd_md(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    v0 = np.zeros((mol.n_atoms, 3))
    for atom, vec in cfg.velocities.items():
        if not 0 <= atom < mol.n_atoms:
            raise ConfigError(f"velocity given for atom {atom}, molecule has {mol.n_atoms}")
        v0[atom] = np.array(vec) * ANGSTROM_PER_FS_TO_AU
    res = run_md(mol, v0, cfg.dt, cfg.n_steps, masses=None, active=cfg.active,
                 delta_d=cfg.delta_d_bohr, force_mode=cfg.force_mode, threads=cfg.threads)
    with open(_out(cfg, "trajectory.xyz"), "w") as fh:
        write_trajectory_xyz(res, fh)
    with open(_out(cfg, "energies.csv"), "w") as fh:
        write_energies_csv(res, fh)
    _write_json(_out(cfg, "md.json"), {
        "frames": len(res.frames),
        "completed": res.completed,
        "diagnostic": res.diagnostic,
        "energy_drift": res.energy_drift(),
    })
    print(f"{len(res.frames)} frames, max |E_tot - E_tot(0)| = {res.energy_drift() * 1e3:.3f} mHa")
    if not res.completed:
        raise TruncatedTrajectory(res.diagnostic)
    return EXIT_OK


def cmd_ts(cfg: RunConfig) -> int:
    mol = _read_molecule(cfg)
    res = ts_search(mol, cfg.max_steps, active=cfg.active, delta_d=cfg.delta_d_bohr,
                    mass_convention=cfg.mass_convention, threads=cfg.threads)
    _out(cfg, "ts.xyz").write_text(serialize_xyz(res.molecule, f"E={res.energy:.12f}"))
    d = res.molecule.distance_matrix() * BOHR_TO_ANGSTROM
    iu = np.triu_indices(mol.n_atoms, 1)
    _write_json(_out(cfg, "ts.json"), {
        "energy": res.energy,
        "steps": res.steps,
        "max_gradient": float(np.abs(res.gradient).max()),
        "distances_angstrom": {f"{i}-{j}": float(d[i, j]) for i, j in zip(*iu)},
        **res.modes.to_dict(),
    })
    print("imaginary (cm^-1): " + " ".join(f"{v:.1f}" for v in res.modes.imaginary_levels))
    return EXIT_OK


def cmd_extract_frame(cfg: RunConfig) -> int:
    path = Path(cfg.input)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    text = path.read_text()
    frames = parse_xyz_frames(text)
    if cfg.time is not None:
        times = [_frame_time(block) for block in _comment_lines(text)]
        k = int(np.argmin([abs(t - cfg.time) for t in times]))
    else:
        k = cfg.frame if cfg.frame is not None else len(frames) - 1
    if not -len(frames) <= k < len(frames):
        raise ConfigError(f"frame {k} out of range for {len(frames)} frames")
    out = serialize_xyz(frames[k], f"frame={k % len(frames)}")
    if cfg.output == "-":
        sys.stdout.write(out)
    else:
        target = _user_path(cfg.output) if cfg.output else _out(cfg, f"frame_{k % len(frames)}.xyz")
        target.write_text(out)
    return EXIT_OK


def _comment_lines(text: str) -> list[str]:
    lines, out, i = text.splitlines(), [], 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        n = int(lines[i].split()[0])
        out.append(lines[i + 1])
        i += n + 2
    return out


def _frame_time(comment: str) -> float:
    for token in comment.split():
        if token.startswith("t="):
            return float(token[2:])
    raise ConfigError(f"frame comment {comment!r} carries no time")


HANDLERS = {
    "energy": cmd_energy,
    "scan": cmd_scan,
    "opt": cmd_opt,
    "freq": cmd_freq,
    "md": cmd_md,
    "ts": cmd_ts,
    "extract-frame": cmd_extract_frame,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    def fail(code: int, message: str) -> int:
        print(f"qdyn: error: {message}", file=sys.stderr)
        return code

    try:
        cfg = load_config(args)
        return HANDLERS[cfg.command](cfg)
    except FileNotFoundError as exc:
        return fail(EXIT_NOT_FOUND, str(exc) if "file not found" in str(exc) else f"file not found: {exc.filename}")
    except ConfigError as exc:
        return fail(EXIT_USAGE, str(exc))
    except (XYZParseError, LinearDependenceError) as exc:
        return fail(EXIT_BAD_INPUT, str(exc))
    except ScfConvergenceError as exc:
        return fail(EXIT_SCF, str(exc))
    except OrbitalTrackingError as exc:
        return fail(EXIT_TRACKING, str(exc))
    except TsPreconditionError as exc:
        return fail(EXIT_TS_PRECONDITION, str(exc))
    except (NotConvergedError, TsSearchError) as exc:
        return fail(EXIT_NOT_CONVERGED, str(exc))
    except TruncatedTrajectory as exc:
        return fail(EXIT_TRUNCATED, f"trajectory truncated: {exc}")
    except ValueError as exc:
        return fail(EXIT_BAD_INPUT, str(exc))
    except Exception as exc:
        log.debug("unexpected failure", exc_info=True)
        return fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
