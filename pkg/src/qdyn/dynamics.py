"""Correlated-sampling forces and velocity-Verlet Born-Oppenheimer dynamics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from qdyn.electronic import DELTA_D, ElectronicStructure, build_electronic_structure, parallel_map, solve_vqe
from qdyn.molecule import Molecule, displace_flat
from qdyn.pauli import split_displaced
from qdyn.scf import OrbitalTrackingError, ScfConvergenceError
from qdyn.statevector import expectation
from qdyn.units import BOHR_TO_ANGSTROM, amu_to_me, fs_to_au
from qdyn.vqe import VqeResult, minimize, warm_start

log = logging.getLogger(__name__)

AUDIT_TOL = 1e-12
COLLISION_DISTANCE = 0.3  # Bohr


class ForceAuditError(AssertionError):
    """The reuse/extra split failed to reproduce <psi|dH|psi>."""


@dataclass(eq=False)
class ForceVector:
    """Forces in Hartree/Bohr with the per-component energy-difference split.

    ``reuse[j]`` is the part of E(R + d e_j) - E(R - d e_j) carried by strings
    already measured at R, ``extra[j]`` the part needing a new expectation.
    """

    forces: np.ndarray
    reuse: np.ndarray
    extra: np.ndarray
    delta_d: float
    mode: str = "correlated"

    @property
    def flat(self) -> np.ndarray:
        return self.forces.reshape(-1)

    def max_abs(self) -> float:
        return float(np.abs(self.forces).max(initial=0.0))


def compute_forces(
    structure: ElectronicStructure,
    reference: VqeResult,
    delta_d: float = DELTA_D,
    *,
    mode: str = "correlated",
    threads: int = 1,
) -> ForceVector:
    """Central-difference forces on the frozen reference state.

    For each Cartesian component the Hamiltonian is rebuilt at R +/- d with
    orbitals tracked to the reference SCF. Strings present at R reuse the
    cached expectations; the remainder is measured once on the reference
    state. ``mode="exact"`` re-optimizes the VQE at both displacements instead.
    """
    if delta_d <= 0:
        raise ValueError(f"delta_d must be positive, got {delta_d}")
    if mode not in ("correlated", "exact"):
        raise ValueError(f"unknown force mode {mode!r}")
    mol = structure.molecule
    n = 3 * mol.n_atoms
    ref_h = structure.hamiltonian

    def component(j):
        sides = []
        for sign in (1.0, -1.0):
            shifted = displace_flat(mol, {j: sign * delta_d})
            sides.append(build_electronic_structure(shifted, structure.active, structure.scf))
        plus, minus = sides
        if mode == "exact":
            theta = warm_start(reference)
            e_plus = minimize(plus.hamiltonian, structure.ansatz, theta).energy
            e_minus = minimize(minus.hamiltonian, structure.ansatz, theta).energy
            return e_plus - e_minus, 0.0
        split = split_displaced(plus.hamiltonian, minus.hamiltonian, ref_h)
        reuse = split.reuse_energy(reference.expectations)
        extra = expectation(reference.state, split.extra) if len(split.extra) else 0.0
        direct = expectation(reference.state, plus.hamiltonian) - expectation(reference.state, minus.hamiltonian)
        if abs(reuse + extra - direct) > AUDIT_TOL * max(1.0, abs(direct)):
            raise ForceAuditError(
                f"component {j}: reuse {reuse!r} + extra {extra!r} != direct {direct!r}"
            )
        return reuse, extra

    parts = np.array(parallel_map(component, range(n), threads))
    reuse, extra = parts[:, 0], parts[:, 1]
    forces = -(reuse + extra) / (2.0 * delta_d)
    return ForceVector(forces.reshape(mol.n_atoms, 3), reuse, extra, delta_d, mode)


# --- velocity Verlet ------------------------------------------------------------


@dataclass(eq=False)
class TrajectoryFrame:
    """One MD step. Positions in Bohr, velocities in Bohr per atomic time unit."""

    time: float
    coords: np.ndarray
    velocities: np.ndarray
    forces: np.ndarray
    potential: float
    kinetic: float
    total: float
    vqe_iterations: int = 0

    @classmethod
    def create(cls, time, coords, velocities, forces, potential, masses, vqe_iterations=0):
        kinetic = kinetic_energy(velocities, masses)
        return cls(time, np.asarray(coords, float), np.asarray(velocities, float),
                   np.asarray(forces, float), float(potential), kinetic, float(potential) + kinetic,
                   vqe_iterations)


def kinetic_energy(velocities, masses) -> float:
    v = np.asarray(velocities, float)
    return float(0.5 * np.sum(np.asarray(masses, float)[:, None] * v * v))


def verlet_step(frame: TrajectoryFrame, dt: float, force_provider, masses) -> TrajectoryFrame:
    """Advance one velocity-Verlet step of ``dt`` fs.

    ``force_provider(coords)`` returns ``(forces, potential, vqe_iterations)``
    at the new positions; masses are in electron masses.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    h = fs_to_au(dt)
    m = np.asarray(masses, float)[:, None]
    acc = frame.forces / m
    coords = frame.coords + h * frame.velocities + 0.5 * h * h * acc
    forces, potential, iterations = force_provider(coords)
    forces = np.asarray(forces, float)
    velocities = frame.velocities + 0.5 * h * (acc + forces / m)
    return TrajectoryFrame.create(frame.time + dt, coords, velocities, forces, potential, masses, iterations)


# --- trajectories ---------------------------------------------------------------


@dataclass(eq=False)
class MdResult:
    frames: list[TrajectoryFrame]
    symbols: tuple[str, ...]
    charge: int = 0
    completed: bool = True
    diagnostic: str = ""
    total_vqe_iterations: list[int] = field(default_factory=list)

    def energy_drift(self) -> float:
        e0 = self.frames[0].total
        return max(abs(f.total - e0) for f in self.frames)


class BornOppenheimerSurface:
    """Stateful force provider: VQE warm-started and orbitals tracked step to step."""

    def __init__(self, mol: Molecule, *, active=None, delta_d: float = DELTA_D,
                 force_mode: str = "correlated", threads: int = 1):
        self.template = mol
        self.active = active
        self.delta_d = delta_d
        self.force_mode = force_mode
        self.threads = threads
        self.previous_scf = None
        self.previous_vqe: VqeResult | None = None

    def evaluate(self, coords):
        mol = self.template.with_coords(coords)
        structure = build_electronic_structure(mol, self.active, self.previous_scf)
        theta0 = None if self.previous_vqe is None else warm_start(self.previous_vqe, structure.ansatz)
        result = solve_vqe(structure, theta0)
        forces = compute_forces(structure, result, self.delta_d, mode=self.force_mode, threads=self.threads)
        self.previous_scf, self.previous_vqe = structure.scf, result
        return forces.forces, result.energy, result.iterations

    __call__ = evaluate


def run_md(
    mol: Molecule,
    velocities0,
    dt: float,
    n_steps: int,
    *,
    masses=None,
    active=None,
    delta_d: float = DELTA_D,
    force_mode: str = "correlated",
    threads: int = 1,
    callback=None,
) -> MdResult:
    """NVE trajectory from ``mol`` with initial velocities in Bohr per atomic time unit.

    Stops early, returning the frames so far, if two nuclei come within
    ``COLLISION_DISTANCE`` or the electronic structure fails.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    if masses is None:
        masses = amu_to_me(mol.masses())
    masses = np.asarray(masses, float)
    surface = BornOppenheimerSurface(mol, active=active, delta_d=delta_d,
                                     force_mode=force_mode, threads=threads)
    forces, potential, iterations = surface(mol.coords)
    frame = TrajectoryFrame.create(0.0, mol.coords, velocities0, forces, potential, masses, iterations)
    result = MdResult([frame], tuple(mol.symbols), mol.charge)
    if callback:
        callback(frame)
    for step in range(1, n_steps + 1):
        try:
            frame = verlet_step(frame, dt, surface, masses)
        except (ScfConvergenceError, OrbitalTrackingError, np.linalg.LinAlgError) as exc:
            result.completed = False
            result.diagnostic = f"step {step}: {exc}"
            log.error("trajectory stopped at step %d: %s", step, exc)
            break
        result.frames.append(frame)
        if callback:
            callback(frame)
        closest = _closest_pair(frame.coords)
        if closest < COLLISION_DISTANCE:
            result.completed = False
            result.diagnostic = f"step {step}: nuclei {closest:.3f} Bohr apart"
            log.error("trajectory stopped at step %d: collision guard", step)
            break
    result.total_vqe_iterations = [f.vqe_iterations for f in result.frames]
    return result


def _closest_pair(coords: np.ndarray) -> float:
    if len(coords) < 2:
        return np.inf
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    return float(d[np.triu_indices(len(coords), 1)].min())


# --- output -------------------------------------------------------------------


def write_trajectory_xyz(result: MdResult, fh) -> None:
    """Multi-frame XYZ, positions in Angstrom, time and energies in the comment line."""
    for f in result.frames:
        fh.write(f"{len(result.symbols)}\n")
        fh.write(f"t={f.time:.4f} fs charge={result.charge} E_pot={f.potential:.12f} E_tot={f.total:.12f}\n")
        for sym, xyz in zip(result.symbols, f.coords * BOHR_TO_ANGSTROM):
            fh.write(f"{sym:<2s} {xyz[0]:18.12f} {xyz[1]:18.12f} {xyz[2]:18.12f}\n")


def write_energies_csv(result: MdResult, fh) -> None:
    """time_fs, E_pot, E_kin, E_tot (Hartree), vqe_iterations, then forces (Hartree/Bohr)."""
    n = len(result.symbols)
    cols = [f"F{i}{ax}" for i in range(n) for ax in "xyz"]
    fh.write(",".join(["time_fs", "E_pot", "E_kin", "E_tot", "vqe_iterations", *cols]) + "\n")
    for f in result.frames:
        row = [f"{f.time:.4f}", f"{f.potential:.12f}", f"{f.kinetic:.12f}", f"{f.total:.12f}",
               str(f.vqe_iterations)]
        row += [f"{v + 0.0:.10e}" for v in f.forces.reshape(-1)]
        fh.write(",".join(row) + "\n")

