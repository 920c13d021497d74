"""Restricted Hartree-Fock, orbital tracking and spin-orbital integrals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from qdyn.integrals import ContractedGaussian, IntegralSet, overlap_matrix
from qdyn.molecule import Molecule, nuclear_repulsion

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-4
TRACKING_MIN_OVERLAP = 0.5


class ScfConvergenceError(RuntimeError):
    def __init__(self, message, energies=()):
        super().__init__(message)
        self.energies = list(energies)


class OrbitalTrackingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ScfResult:
    """Converged RHF solution. ``mo_coeffs`` columns are MOs in ascending orbital
    energy unless they have been re-ordered by :func:`track_orbitals`."""

    energy: float
    mo_coeffs: np.ndarray
    orbital_energies: np.ndarray
    density: np.ndarray
    converged: bool
    iterations: int
    n_occupied: int
    commutator: float
    basis: tuple[ContractedGaussian, ...] = ()

    @property
    def n_mo(self) -> int:
        return self.mo_coeffs.shape[1]


@dataclass(frozen=True, eq=False)
class SpinOrbitalIntegrals:
    """Second-quantized Hamiltonian coefficients over spin orbitals.

    H = offset + sum_pq h1[p,q] a+_p a_q + 1/2 sum_pqrs h2[p,q,r,s] a+_p a+_q a_r a_s

    Spin orbital 2k is the alpha and 2k+1 the beta spin of spatial orbital k.
    ``h2[p,q,r,s]`` equals the chemists' integral (ps|qr).
    """

    h1: np.ndarray
    h2: np.ndarray
    scalar_offset: float
    n_active_electrons: int

    @property
    def n_spin_orbitals(self) -> int:
        return self.h1.shape[0]


def fix_phases(C: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude coefficient of every column positive.

    Near-ties are broken towards the lowest AO index so the choice does not
    depend on round-off.
    """
    C = C.copy()
    for k in range(C.shape[1]):
        col = np.abs(C[:, k])
        top = np.flatnonzero(col >= col.max() * (1.0 - 1e-8))[0]
        if C[top, k] < 0:
            C[:, k] *= -1.0
    return C


def _jk(eri, D):
    J = np.einsum("pqrs,rs->pq", eri, D, optimize=True)
    K = np.einsum("prqs,rs->pq", eri, D, optimize=True)
    return J, K


def run_rhf(
    mol: Molecule,
    integrals: IntegralSet,
    *,
    max_iter: int = 200,
    e_tol: float = 1e-10,
    d_tol: float = 1e-8,
    comm_tol: float = 1e-8,
    diis_size: int = 8,
    level_shift: float = 0.2,
    basis=(),
) -> ScfResult:
    """Closed-shell SCF with DIIS, starting from the core-Hamiltonian guess.

    A level shift on the virtual block is switched on only if the energy
    oscillates. Raises :class:`ScfConvergenceError` if ``max_iter`` is exceeded.
    """
    n_el = mol.n_electrons
    if n_el % 2:
        raise ValueError(f"RHF needs an even electron count, got {n_el}")
    n_occ = n_el // 2
    S, H, eri = integrals.S, integrals.core, integrals.eri
    nbf = S.shape[0]
    if n_occ > nbf:
        raise ValueError(f"{n_occ} occupied orbitals requested from {nbf} basis functions")
    e_nuc = nuclear_repulsion(mol)

    s_val, s_vec = np.linalg.eigh(S)
    X = s_vec @ np.diag(s_val**-0.5) @ s_vec.T

    def diagonalize(F):
        eps, Cp = np.linalg.eigh(X.T @ F @ X)
        return eps, X @ Cp

    eps, C = diagonalize(H)
    D = C[:, :n_occ] @ C[:, :n_occ].T
    energies: list[float] = []
    focks: list[np.ndarray] = []
    errors: list[np.ndarray] = []
    shift_on = False
    e_old = None
    for it in range(1, max_iter + 1):
        J, K = _jk(eri, D)
        F = H + 2.0 * J - K
        energy = float(np.sum(D * (H + F))) + e_nuc
        err = X.T @ (F @ D @ S - S @ D @ F) @ X
        comm = float(np.abs(err).max())
        energies.append(energy)

        focks.append(F)
        errors.append(err)
        if len(focks) > diis_size:
            focks.pop(0)
            errors.pop(0)
        F_use = _diis(focks, errors) if len(focks) > 1 else F

        if not shift_on and it > 8:
            recent = np.diff(energies[-5:])
            if np.sum(recent > 1e-12) >= 2:
                shift_on = True
                log.debug("SCF oscillating at iteration %d; enabling level shift", it)
        if shift_on:
            F_use = F_use + level_shift * (S - S @ D @ S)

        eps, C = diagonalize(F_use)
        D_new = C[:, :n_occ] @ C[:, :n_occ].T
        d_change = float(np.abs(D_new - D).max())
        D = D_new
        if e_old is not None and abs(energy - e_old) < e_tol and d_change < d_tol and comm < comm_tol:
            break
        e_old = energy
    else:
        raise ScfConvergenceError(
            f"RHF not converged after {max_iter} iterations (last energies {energies[-3:]})",
            energies,
        )

    # canonical orbitals of the final, unshifted Fock operator
    J, K = _jk(eri, D)
    F = H + 2.0 * J - K
    eps, C = diagonalize(F)
    C = fix_phases(C)
    D = C[:, :n_occ] @ C[:, :n_occ].T
    J, K = _jk(eri, D)
    F = H + 2.0 * J - K
    energy = float(np.sum(D * (H + F))) + e_nuc
    comm = float(np.abs(X.T @ (F @ D @ S - S @ D @ F) @ X).max())
    return ScfResult(energy, C, eps, D, True, it, n_occ, comm, tuple(basis))


def _diis(focks, errors):
    n = len(focks)
    B = -np.ones((n + 1, n + 1))
    B[n, n] = 0.0
    for i in range(n):
        for j in range(i + 1):
            B[i, j] = B[j, i] = float(np.sum(errors[i] * errors[j]))
    rhs = np.zeros(n + 1)
    rhs[n] = -1.0
    scale = np.abs(B[:n, :n]).max()
    if scale == 0.0:
        return focks[-1]
    B[:n, :n] /= scale
    try:
        coef = np.linalg.solve(B, rhs)[:n]
    except np.linalg.LinAlgError:
        return focks[-1]
    return sum(c * f for c, f in zip(coef, focks))


def _degenerate_groups(eps: np.ndarray, idx: np.ndarray, tol: float):
    idx = idx[np.argsort(eps[idx], kind="stable")]
    groups, current = [], [idx[0]]
    for a, b in zip(idx[:-1], idx[1:]):
        if abs(eps[b] - eps[a]) < tol:
            current.append(b)
        else:
            groups.append(current)
            current = [b]
    groups.append(current)
    return [g for g in groups if len(g) > 1]


def track_orbitals(scf: ScfResult, reference: ScfResult, *, degeneracy_tol: float = DEGENERACY_TOL) -> ScfResult:
    """Re-order, rotate and re-phase ``scf``'s MOs to follow ``reference``.

    Occupied and virtual blocks are matched separately by maximum absolute
    overlap, so the aufbau occupation is preserved. Orbitals that are
    (near-)degenerate in the reference are rotated as a group onto the
    reference orbitals (orthogonal Procrustes), and every orbital is signed to
    have positive overlap with its partner.
    """
    if not scf.basis or not reference.basis:
        raise ValueError("orbital tracking needs the basis stored on both SCF results")
    if scf.mo_coeffs.shape != reference.mo_coeffs.shape or scf.n_occupied != reference.n_occupied:
        raise OrbitalTrackingError("reference and target have different orbital spaces")
    s_mix = overlap_matrix(list(reference.basis), list(scf.basis))
    C = scf.mo_coeffs.copy()
    eps = scf.orbital_energies.copy()
    n, n_occ = C.shape[1], scf.n_occupied
    M = reference.mo_coeffs.T @ s_mix @ C
    order = np.empty(n, dtype=int)
    for block in (np.arange(n_occ), np.arange(n_occ, n)):
        if block.size == 0:
            continue
        rows, cols = linear_sum_assignment(-np.abs(M[np.ix_(block, block)]))
        order[block[rows]] = block[cols]
    C, eps = C[:, order], eps[order]

    ref_eps = reference.orbital_energies
    for block in (np.arange(n_occ), np.arange(n_occ, n)):
        if block.size < 2:
            continue
        for group in _degenerate_groups(ref_eps, block, degeneracy_tol):
            g = np.array(group)
            m = reference.mo_coeffs[:, g].T @ s_mix @ C[:, g]
            u, _, vt = np.linalg.svd(m)
            rot = vt.T @ u.T
            C[:, g] = C[:, g] @ rot
            eps[g] = np.einsum("ki,k,ki->i", rot, eps[g], rot)

    overlaps = np.einsum("ai,ab,bi->i", reference.mo_coeffs, s_mix, C)
    C[:, overlaps < 0] *= -1.0
    worst = float(np.abs(overlaps).min())
    if worst < TRACKING_MIN_OVERLAP:
        raise OrbitalTrackingError(
            f"orbital tracking ambiguous: weakest matched overlap {worst:.3f}"
        )
    D = C[:, :n_occ] @ C[:, :n_occ].T
    return replace(scf, mo_coeffs=C, orbital_energies=eps, density=D)


def active_window(n_electrons: int, n_mo: int, active=None) -> tuple[int, int, int]:
    """(n_frozen, n_active_orbitals, n_active_electrons) for a HOMO/LUMO-centred window."""
    if active is None:
        return 0, n_mo, n_electrons
    n_act_el, n_act_orb = (int(v) for v in active)
    if n_act_el % 2 or n_act_el < 0:
        raise ValueError(f"active electron count must be even, got {n_act_el}")
    if n_act_el > n_electrons:
        raise ValueError(f"active space wants {n_act_el} of {n_electrons} electrons")
    n_frozen = (n_electrons - n_act_el) // 2
    if n_act_orb < n_act_el // 2 or n_frozen + n_act_orb > n_mo:
        raise ValueError(
            f"active window ({n_act_el}e, {n_act_orb}o) exceeds {n_mo} orbitals"
        )
    return n_frozen, n_act_orb, n_act_el


def spatial_integrals(scf: ScfResult, integrals: IntegralSet, mol: Molecule, active=None):
    """Active-space MO integrals (h, (pq|rs), scalar offset, n_active_electrons).

    Frozen doubly-occupied orbitals below the window are folded into an
    effective one-body operator; their energy plus nuclear repulsion is the
    scalar offset.
    """
    n_frozen, n_act, n_act_el = active_window(2 * scf.n_occupied, scf.n_mo, active)
    C = scf.mo_coeffs
    C_core = C[:, :n_frozen]
    C_act = C[:, n_frozen : n_frozen + n_act]
    H, eri = integrals.core, integrals.eri
    offset = nuclear_repulsion(mol)
    h_eff = H
    if n_frozen:
        D_core = C_core @ C_core.T
        J, K = _jk(eri, D_core)
        h_eff = H + 2.0 * J - K
        offset += float(np.sum(D_core * (H + h_eff)))
    h = C_act.T @ h_eff @ C_act
    g = np.tensordot(eri, C_act, axes=([3], [0]))
    g = np.tensordot(g, C_act, axes=([2], [0]))
    g = np.tensordot(g, C_act, axes=([1], [0]))
    g = np.tensordot(g, C_act, axes=([0], [0]))
    # tensordot contracted indices in order s, r, q, p -> axes are now (s, r, q, p)
    g = g.transpose(3, 2, 1, 0)
    return h, g, offset, n_act_el


def spin_orbital_integrals(scf: ScfResult, integrals: IntegralSet, mol: Molecule, active=None) -> SpinOrbitalIntegrals:
    """Interleaved spin-orbital coefficients for the (optionally reduced) space."""
    h, g, offset, n_act_el = spatial_integrals(scf, integrals, mol, active)
    m = h.shape[0]
    n = 2 * m
    h1 = np.zeros((n, n))
    h2 = np.zeros((n, n, n, n))
    phys = np.einsum("psqr->pqrs", g)
    for s in (0, 1):
        h1[s::2, s::2] = h
        for t in (0, 1):
            h2[s::2, t::2, t::2, s::2] = phys
    return SpinOrbitalIntegrals(h1, h2, offset, n_act_el)


def determinant_energy(soi: SpinOrbitalIntegrals, occupied) -> float:
    """Energy of a single Slater determinant over the given spin orbitals."""
    occ = np.asarray(list(occupied))
    e = soi.scalar_offset + float(np.trace(soi.h1[np.ix_(occ, occ)]))
    sub = soi.h2[np.ix_(occ, occ, occ, occ)]
    e += 0.5 * float(np.einsum("ijji->", sub) - np.einsum("ijij->", sub))
    return e
