"""Geometry optimization, finite-difference Hessians, normal modes and TS search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from qdyn.dynamics import ForceVector, compute_forces
from qdyn.electronic import DELTA_D, ElectronicStructure, build_electronic_structure, parallel_map, solve_vqe
from qdyn.molecule import Molecule, displace_flat
from qdyn.pauli import PauliSum, split_reuse_extra
from qdyn.statevector import expectation
from qdyn.units import HARTREE_TO_WAVENUMBER, amu_to_me
from qdyn.vqe import VqeResult, minimize, warm_start

log = logging.getLogger(__name__)

FORCE_TOL = 1e-4  # Hartree/Bohr
MAX_DISPLACEMENT = 0.2  # Bohr per line-search step
NEAR_ZERO_CM = 100.0
DEGENERATE_CM = 20.0
EIGEN_FLOOR = 1e-6  # Hartree/Bohr^2
MAX_HALVINGS = 8


class OptimizationError(RuntimeError):
    pass


class TsPreconditionError(ValueError):
    """The starting Hessian does not have exactly one imaginary mode."""


class TsSearchError(RuntimeError):
    pass


# --- geometry optimization ----------------------------------------------------


@dataclass(eq=False)
class OptimizationResult:
    molecule: Molecule
    energy: float
    forces: ForceVector
    vqe: VqeResult
    structure: ElectronicStructure
    steps: int
    converged: bool
    history: list[tuple[float, float]] = field(default_factory=list)


class _Surface:
    """VQE energies along a path, warm-started and orbital-tracked from the last accepted point."""

    def __init__(self, active, delta_d, threads):
        self.active, self.delta_d, self.threads = active, delta_d, threads
        self.scf = None
        self.theta = None

    def energy(self, mol: Molecule):
        structure = build_electronic_structure(mol, self.active, self.scf)
        return structure, solve_vqe(structure, self.theta)

    def accept(self, structure, result):
        self.scf, self.theta = structure.scf, warm_start(result)

    def forces(self, structure, result) -> ForceVector:
        return compute_forces(structure, result, self.delta_d, threads=self.threads)


def optimize_geometry(
    mol: Molecule,
    max_steps: int = 200,
    *,
    active=None,
    delta_d: float = DELTA_D,
    force_tol: float = FORCE_TOL,
    threads: int = 1,
    raise_on_failure: bool = False,
) -> OptimizationResult:
    """Steepest descent on the VQE surface with Barzilai-Borwein step lengths
    and Armijo backtracking. Converged when max |F| < ``force_tol``."""
    surface = _Surface(active, delta_d, threads)
    structure, result = surface.energy(mol)
    surface.accept(structure, result)
    forces = surface.forces(structure, result)
    history = [(result.energy, forces.max_abs())]
    alpha = 1.0
    converged = False
    step = 0
    for step in range(max_steps + 1):
        if forces.max_abs() < force_tol:
            converged = True
            break
        if step == max_steps:
            break
        f = forces.flat
        alpha = min(alpha, MAX_DISPLACEMENT / np.abs(f).max())
        for _ in range(30):
            trial = mol.with_coords(mol.coords.reshape(-1) + alpha * f)
            t_structure, t_result = surface.energy(trial)
            if t_result.energy <= result.energy - 1e-4 * alpha * float(f @ f):
                break
            alpha *= 0.5
        else:
            log.warning("line search failed at step %d", step)
            break
        surface.accept(t_structure, t_result)
        t_forces = surface.forces(t_structure, t_result)
        s = trial.coords.reshape(-1) - mol.coords.reshape(-1)
        y = f - t_forces.flat
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 2.0 * alpha
        mol, structure, result, forces = trial, t_structure, t_result, t_forces
        history.append((result.energy, forces.max_abs()))
        log.info("opt step %d: E = %.10f, max|F| = %.2e", step + 1, result.energy, forces.max_abs())
    if not converged:
        msg = f"geometry optimization stopped after {step} steps, max|F| = {forces.max_abs():.2e}"
        if raise_on_failure:
            raise OptimizationError(msg)
        log.warning(msg)
    return OptimizationResult(mol, result.energy, forces, result, structure, step, converged, history)


# --- Hessians -------------------------------------------------------------------


@dataclass(eq=False)
class HessianMatrix:
    """Cartesian Hessian in Hartree/Bohr^2, symmetrized; the raw asymmetry is kept."""

    matrix: np.ndarray
    method: str
    raw_asymmetry: float = 0.0
    vqe_calls: int = 0
    delta_d: float = DELTA_D

    def to_text(self) -> str:
        return "\n".join(" ".join(f"{v: .12e}" for v in row) for row in self.matrix) + "\n"


def stencil_points(n: int):
    """Displacement patterns for the diagonal and off-diagonal stencils.

    Keys are tuples of (coordinate, sign) pairs; the empty tuple is the
    undisplaced geometry.
    """
    points = [()]
    for i in range(n):
        points += [((i, 1),), ((i, -1),)]
    for i in range(n):
        for j in range(i + 1, n):
            points += [((i, 1), (j, 1)), ((i, -1), (j, -1)), ((i, 1), (j, -1)), ((i, -1), (j, 1))]
    return points


def assemble_hessian(values, n: int, delta_d: float, combine=None):
    """Apply the finite-difference stencils to ``values[point]``.

    ``combine(pairs)`` turns a list of (weight, value) pairs into a number; by
    default values are numbers and the weighted sum is taken. The diagonal uses
    (E+ - 2E0 + E-)/d^2 and off-diagonals (E++ + E-- - E+- - E-+)/(4 d^2).
    """
    if combine is None:
        def combine(pairs):
            return sum(w * v for w, v in pairs)
    raw = np.zeros((n, n))
    d2 = delta_d * delta_d
    for i in range(n):
        raw[i, i] = combine([(1.0, values[((i, 1),)]), (-2.0, values[()]), (1.0, values[((i, -1),)])]) / d2
        for j in range(i + 1, n):
            pairs = [
                (1.0, values[((i, 1), (j, 1))]),
                (1.0, values[((i, -1), (j, -1))]),
                (-1.0, values[((i, 1), (j, -1))]),
                (-1.0, values[((i, -1), (j, 1))]),
            ]
            raw[i, j] = combine(pairs) / (4.0 * d2)
            # the (j, i) stencil visits the same four geometries in another order
            raw[j, i] = combine([pairs[0], pairs[1], pairs[3], pairs[2]]) / (4.0 * d2)
    return raw


def _symmetrized(raw: np.ndarray):
    return 0.5 * (raw + raw.T), float(np.abs(raw - raw.T).max(initial=0.0))


def _displaced(mol: Molecule, point, delta_d: float) -> Molecule:
    return displace_flat(mol, {i: s * delta_d for i, s in point})


def hessian_full(
    structure: ElectronicStructure,
    delta_d: float = DELTA_D,
    *,
    reference: VqeResult | None = None,
    threads: int = 1,
) -> HessianMatrix:
    """Hessian from independently re-optimized VQE energies at every stencil point."""
    mol = structure.molecule
    n = 3 * mol.n_atoms
    if reference is None:
        reference = solve_vqe(structure)
    theta0 = warm_start(reference)
    points = stencil_points(n)

    def energy(point):
        if not point:
            return reference.energy
        shifted = build_electronic_structure(_displaced(mol, point, delta_d), structure.active, structure.scf)
        return minimize(shifted.hamiltonian, structure.ansatz, theta0).energy

    values = dict(zip(points, parallel_map(energy, points, threads)))
    matrix, asym = _symmetrized(assemble_hessian(values, n, delta_d))
    # every stencil point except the undisplaced reference
    calls = len(points) - 1
    log.info("full Hessian: %d VQE optimizations", calls)
    return HessianMatrix(matrix, "full", asym, calls, delta_d)


def combine_hamiltonians(pairs) -> PauliSum:
    """Term-wise weighted sum of Hamiltonians, without pruning."""
    pairs = list(pairs)
    n_qubits = pairs[0][1].n_qubits
    items = [(word, w * c) for w, h in pairs for word, c in h]
    return PauliSum(items, n_qubits, prune=0.0)


def hessian_approx(
    structure: ElectronicStructure,
    reference: VqeResult,
    delta_d: float = DELTA_D,
    *,
    threads: int = 1,
    provider=None,
) -> HessianMatrix:
    """Hessian of the frozen-state energy <psi(R)|H(R')|psi(R)>.

    The stencils act on the Hamiltonian coefficients; each stencil is then one
    expectation, taken from cached string values where possible.
    ``provider(molecule)`` may replace the electronic-structure pipeline as the
    source of displaced Hamiltonians.
    """
    mol = structure.molecule
    n = 3 * mol.n_atoms
    points = stencil_points(n)
    ref_h = structure.hamiltonian
    if provider is None:
        def provider(shifted):
            return build_electronic_structure(shifted, structure.active, structure.scf).hamiltonian

    def hamiltonian(point):
        if not point:
            return ref_h
        return provider(_displaced(mol, point, delta_d))

    values = dict(zip(points, parallel_map(hamiltonian, points, threads)))

    def combine(pairs):
        split = split_reuse_extra(combine_hamiltonians(pairs), ref_h)
        extra = expectation(reference.state, split.extra) if len(split.extra) else 0.0
        return split.reuse_energy(reference.expectations) + extra

    matrix, asym = _symmetrized(assemble_hessian(values, n, delta_d, combine))
    return HessianMatrix(matrix, "approximate", asym, 0, delta_d)


# --- normal modes ---------------------------------------------------------------


def rigid_body_basis(coords: np.ndarray, masses=None) -> np.ndarray:
    """Orthonormal translation/rotation vectors (columns), mass-weighted if masses are given."""
    coords = np.asarray(coords, float).reshape(-1, 3)
    m = np.ones(len(coords)) if masses is None else np.asarray(masses, float)
    sq = np.sqrt(m)
    center = (m[:, None] * coords).sum(0) / m.sum()
    r = coords - center
    vecs = []
    for k in range(3):
        t = np.zeros_like(coords)
        t[:, k] = sq
        vecs.append(t.reshape(-1))
    for k in range(3):
        axis = np.zeros(3)
        axis[k] = 1.0
        vecs.append((sq[:, None] * np.cross(axis, r)).reshape(-1))
    u, s, _ = np.linalg.svd(np.array(vecs).T, full_matrices=False)
    rank = int(np.sum(s > 1e-6 * s.max()))
    return u[:, :rank]


@dataclass(eq=False)
class NormalModeResult:
    """Frequencies in cm^-1 (imaginary as negative), ascending, with mass-weighted modes."""

    frequencies: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    mass_weighted_hessian: np.ndarray
    n_near_zero: int
    projected: bool = False

    @property
    def vibrations(self) -> np.ndarray:
        """Frequencies outside the near-zero band, in descending order."""
        keep = np.abs(self.frequencies) >= NEAR_ZERO_CM
        return np.sort(self.frequencies[keep])[::-1]

    @property
    def n_imaginary(self) -> int:
        return int(np.sum(self.frequencies <= -NEAR_ZERO_CM))

    @property
    def imaginary_levels(self) -> np.ndarray:
        """Distinct imaginary frequencies; a degenerate pair counts once."""
        imag = np.sort(self.frequencies[self.frequencies <= -NEAR_ZERO_CM])
        levels: list[float] = []
        for v in imag:
            if levels and abs(v - levels[-1]) < DEGENERATE_CM:
                continue
            levels.append(float(v))
        return np.array(levels)

    def to_dict(self) -> dict:
        return {
            "frequencies_cm-1": self.frequencies.tolist(),
            "vibrations_cm-1": self.vibrations.tolist(),
            "imaginary_levels_cm-1": self.imaginary_levels.tolist(),
            "n_near_zero": self.n_near_zero,
            "projected": self.projected,
            "modes": self.modes.T.tolist(),
        }


def normal_modes(hessian, masses, *, project: bool = False, coords=None) -> NormalModeResult:
    """Harmonic analysis of a Cartesian Hessian; masses in amu.

    With ``project`` the translations and rotations at ``coords`` are removed
    from the mass-weighted Hessian before diagonalization.
    """
    H = hessian.matrix if isinstance(hessian, HessianMatrix) else np.asarray(hessian, float)
    m = amu_to_me(np.asarray(masses, float))
    if np.any(m <= 0):
        raise ValueError("masses must be positive")
    w = np.repeat(1.0 / np.sqrt(m), 3)
    hw = H * w[:, None] * w[None, :]
    hw = 0.5 * (hw + hw.T)
    if project:
        if coords is None:
            raise ValueError("projection needs the coordinates")
        q = rigid_body_basis(coords, m)
        p = np.eye(len(hw)) - q @ q.T
        hw = p @ hw @ p
    lam, vec = np.linalg.eigh(hw)
    freq = np.sign(lam) * np.sqrt(np.abs(lam)) * HARTREE_TO_WAVENUMBER
    n_zero = int(np.sum(np.abs(freq) < NEAR_ZERO_CM))
    return NormalModeResult(freq, vec, lam, hw, n_zero, project)


# --- transition states ----------------------------------------------------------


@dataclass(eq=False)
class TsResult:
    molecule: Molecule
    modes: NormalModeResult
    hessian: HessianMatrix
    gradient: np.ndarray
    energy: float
    steps: int
    converged: bool
    history: list[tuple[float, float, float]] = field(default_factory=list)


def newton_step(hessian: np.ndarray, gradient: np.ndarray, coords) -> np.ndarray:
    """-H^+ g inside the internal subspace, ignoring eigenvalues below ``EIGEN_FLOOR``."""
    q = rigid_body_basis(coords)
    p = np.eye(len(gradient)) - q @ q.T
    lam, vec = np.linalg.eigh(p @ hessian @ p)
    g = vec.T @ (p @ gradient)
    keep = np.abs(lam) > EIGEN_FLOOR
    return -(vec[:, keep] @ (g[keep] / lam[keep]))


def ts_search(
    mol0: Molecule,
    max_steps: int = 50,
    *,
    active=None,
    delta_d: float = DELTA_D,
    grad_tol: float = FORCE_TOL,
    mass_convention: str = "standard",
    threads: int = 1,
) -> TsResult:
    """Newton-Raphson saddle search on the approximate Hessian.

    A trial step whose Hessian does not show exactly one imaginary level is
    halved, up to ``MAX_HALVINGS`` times, before being accepted.
    """
    surface = _Surface(active, delta_d, threads)
    masses = mol0.masses(mass_convention)

    def analyse(mol):
        structure, result = surface.energy(mol)
        forces = surface.forces(structure, result)
        hess = hessian_approx(structure, result, delta_d, threads=threads)
        modes = normal_modes(hess, masses, project=True, coords=mol.coords)
        return structure, result, forces, hess, modes

    mol = mol0
    structure, result, forces, hess, modes = analyse(mol)
    if len(modes.imaginary_levels) != 1:
        raise TsPreconditionError(
            f"starting Hessian has {len(modes.imaginary_levels)} imaginary modes, need exactly 1"
        )
    surface.accept(structure, result)
    history = [(result.energy, forces.max_abs(), float(modes.imaginary_levels[0]))]
    converged = False
    step = 0
    for step in range(max_steps + 1):
        if forces.max_abs() < grad_tol:
            converged = True
            break
        if step == max_steps:
            break
        delta = newton_step(hess.matrix, -forces.flat, mol.coords)
        for _ in range(MAX_HALVINGS + 1):
            trial = mol.with_coords(mol.coords.reshape(-1) + delta)
            t = analyse(trial)
            if len(t[4].imaginary_levels) == 1:
                break
            delta = 0.5 * delta
        else:
            raise TsSearchError(f"step {step + 1}: no acceptable step after {MAX_HALVINGS} halvings")
        mol = trial
        structure, result, forces, hess, modes = t
        surface.accept(structure, result)
        history.append((result.energy, forces.max_abs(), float(modes.imaginary_levels[0])))
        log.info("ts step %d: E = %.10f, max|g| = %.2e", step + 1, result.energy, forces.max_abs())
    if not converged:
        raise TsSearchError(f"no convergence in {max_steps} steps, max|g| = {forces.max_abs():.2e}")
    return TsResult(mol, modes, hess, -forces.forces, result.energy, step, converged, history)
