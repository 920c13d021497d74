"""Geometry -> qubit Hamiltonian -> VQE, the pipeline shared by forces, MD and Hessians."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

from qdyn.integrals import IntegralSet, build_basis, compute_integrals
from qdyn.molecule import Molecule
from qdyn.pauli import PauliSum, jordan_wigner
from qdyn.scf import ScfResult, SpinOrbitalIntegrals, run_rhf, spin_orbital_integrals, track_orbitals
from qdyn.statevector import UccsdAnsatz
from qdyn.units import ANGSTROM_TO_BOHR
from qdyn.vqe import VqeResult, minimize

# Finite differences of frozen-state energies amplify orbital noise by 1/d^2,
# so the SCF is converged well past the usual thresholds.
SCF_OPTIONS = {"e_tol": 1e-12, "d_tol": 1e-9, "comm_tol": 1e-10}
DELTA_D = 1e-3 * ANGSTROM_TO_BOHR


@dataclass(eq=False)
class ElectronicStructure:
    molecule: Molecule
    integrals: IntegralSet
    scf: ScfResult
    spin_integrals: SpinOrbitalIntegrals
    hamiltonian: PauliSum
    active: tuple[int, int] | None = None

    @property
    def n_qubits(self) -> int:
        return self.hamiltonian.n_qubits

    @property
    def n_electrons(self) -> int:
        return self.spin_integrals.n_active_electrons

    @property
    def ansatz(self) -> UccsdAnsatz:
        return uccsd_ansatz(self.n_qubits, self.n_electrons)


@lru_cache(maxsize=16)
def uccsd_ansatz(n_qubits: int, n_electrons: int) -> UccsdAnsatz:
    return UccsdAnsatz(n_qubits, n_electrons)


def build_electronic_structure(
    mol: Molecule, active=None, reference: ScfResult | None = None
) -> ElectronicStructure:
    """Integrals, RHF and the Jordan-Wigner Hamiltonian at one geometry.

    With ``reference`` the MOs are tracked onto the reference orbitals, so that
    Hamiltonians at nearby geometries are expressed in matching orbitals.
    """
    basis = build_basis(mol)
    ints = compute_integrals(basis, mol)
    scf = run_rhf(mol, ints, basis=basis, **SCF_OPTIONS)
    if reference is not None:
        scf = track_orbitals(scf, reference)
    soi = spin_orbital_integrals(scf, ints, mol, active)
    active = None if active is None else tuple(int(v) for v in active)
    return ElectronicStructure(mol, ints, scf, soi, jordan_wigner(soi), active)


def solve_vqe(structure: ElectronicStructure, theta0=None) -> VqeResult:
    return minimize(structure.hamiltonian, structure.ansatz, theta0)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map, optionally over a thread pool; results never depend on ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
