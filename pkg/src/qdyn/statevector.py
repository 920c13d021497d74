"""Dense statevector simulation: HF reference, UCCSD, exact expectations.

Basis state index b has bit k set when qubit k is |1>, i.e. spin orbital k is
occupied; Z_k then has eigenvalue -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse.linalg as spla

from qdyn.pauli import PauliSum, fermion_to_qubit, masks_to_word, popcount

NORM_TOL = 1e-10
DENSE_LIMIT = 16


@dataclass(eq=False)
class QuantumState:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy(), self.n_qubits)

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> "QuantumState":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n_qubits)


def prepare_hf_state(n_qubits: int, n_electrons: int) -> QuantumState:
    """Occupy the ``n_electrons`` lowest-index qubits."""
    if not 0 <= n_electrons <= n_qubits:
        raise ValueError(f"{n_electrons} electrons do not fit in {n_qubits} qubits")
    return QuantumState.basis_state(n_qubits, (1 << n_electrons) - 1)


# --- compiled operators -------------------------------------------------------


class CompiledOperator:
    """A PauliSum grouped by X-mask for fast application to statevectors.

    Strings sharing an X-mask act as one permutation ``b -> b ^ x`` followed by
    a diagonal, so (H psi)[c] = sum_x d_x[c ^ x] psi[c ^ x].
    """

    def __init__(self, op: PauliSum):
        self.op = op
        n = op.n_qubits
        self.n_qubits = n
        self.index = np.arange(1 << n, dtype=np.int64)
        self.groups = []
        for xmask in np.unique(op.x):
            sel = np.flatnonzero(op.x == xmask)
            signs = self._signs(op.z[sel])
            phases = (1j) ** (popcount(op.x[sel] & op.z[sel]) % 4)
            diag = (op.coeffs[sel] * phases) @ signs
            self.groups.append((int(xmask), sel, signs, phases, diag))

    def _signs(self, zmasks):
        return (1 - 2 * (popcount(zmasks[:, None] & self.index[None, :]) & 1)).astype(float)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        for xmask, _, _, _, diag in self.groups:
            if xmask == 0:
                out += diag * psi
            else:
                perm = self.index ^ xmask
                out += diag[perm] * psi[perm]
        return out

    def string_expectations(self, psi: np.ndarray) -> np.ndarray:
        """<psi|P_a|psi> for every string, in the PauliSum's term order."""
        vals = np.empty(len(self.op), dtype=float)
        for xmask, sel, signs, phases, _ in self.groups:
            overlap = np.conj(psi[self.index ^ xmask]) * psi
            vals[sel] = (phases * (signs @ overlap)).real
        return vals

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(psi)).real)


def expectation(state: QuantumState, op: PauliSum) -> float:
    """sum_a h_a <psi|P_a|psi>, computed exactly."""
    if state.n_qubits != op.n_qubits:
        raise ValueError(f"qubit-count mismatch: state {state.n_qubits}, operator {op.n_qubits}")
    if len(op) == 0:
        return 0.0
    vals = CompiledOperator(op).string_expectations(state.amplitudes)
    return float(np.dot(op.coeffs, vals))


def string_expectations(state: QuantumState, op: PauliSum) -> dict[str, float]:
    """Per-string expectations P_a keyed by Pauli word."""
    if state.n_qubits != op.n_qubits:
        raise ValueError(f"qubit-count mismatch: state {state.n_qubits}, operator {op.n_qubits}")
    if len(op) == 0:
        return {}
    vals = CompiledOperator(op).string_expectations(state.amplitudes)
    return dict(zip(op.words, vals.tolist()))


def sector_indices(n_qubits: int, n_particles: int | None = None, sz: float | None = None) -> np.ndarray:
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    keep = np.ones(idx.size, dtype=bool)
    if n_particles is not None:
        keep &= popcount(idx) == n_particles
    if sz is not None:
        alpha = sum(1 << k for k in range(0, n_qubits, 2))
        n_a = popcount(idx & alpha)
        n_b = popcount(idx & ~alpha)
        keep &= np.isclose(0.5 * (n_a - n_b), sz)
    return idx[keep]


def exact_ground_state(op: PauliSum, n_particles: int | None = None, sz: float | None = None):
    """Lowest eigenpair of the operator, optionally inside a fixed particle-number
    (and S_z) sector. Returns ``(energy, QuantumState)``."""
    n = op.n_qubits
    if n > DENSE_LIMIT:
        raise ValueError(f"{n} qubits exceed the exact-diagonalization bound of {DENSE_LIMIT}")
    mat = op.to_sparse()
    if n_particles is None and sz is None:
        idx = np.arange(1 << n)
    else:
        idx = sector_indices(n, n_particles, sz)
        if idx.size == 0:
            raise ValueError("empty symmetry sector")
    block = mat[idx][:, idx]
    if idx.size <= 2048:
        w, v = np.linalg.eigh(block.toarray())
        energy, vec = w[0], v[:, 0]
    else:
        w, v = spla.eigsh(block, k=1, which="SA", tol=1e-14)
        energy, vec = w[0], v[:, 0]
    amps = np.zeros(1 << n, dtype=complex)
    amps[idx] = vec
    # deterministic global phase: largest amplitude real positive
    top = np.argmax(np.abs(amps))
    amps *= np.abs(amps[top]) / amps[top]
    return float(energy), QuantumState(amps, n)


# --- UCCSD -----------------------------------------------------------------------


@dataclass(frozen=True)
class Excitation:
    """Spin-orbital excitation ``occupied -> virtual`` (one or two electrons)."""

    occupied: tuple[int, ...]
    virtual: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.occupied)

    def generator_terms(self):
        """Fermionic terms of T - T+ with T = a+_a (a+_b) (a_j) a_i."""
        ops = tuple((a, True) for a in self.virtual) + tuple((i, False) for i in reversed(self.occupied))
        adjoint = tuple((p, not dag) for p, dag in reversed(ops))
        return [(1.0, ops), (-1.0, adjoint)]


def _spin(k: int) -> int:
    return k % 2


class UccsdAnsatz:
    """Spin-conserving singles and doubles out of the HF determinant.

    Ordering: singles then doubles, each lexicographic in
    (occupied..., virtual...).
    """

    def __init__(self, n_qubits: int, n_electrons: int):
        if not 0 <= n_electrons <= n_qubits:
            raise ValueError(f"{n_electrons} electrons do not fit in {n_qubits} qubits")
        self.n_qubits = n_qubits
        self.n_electrons = n_electrons
        occ = range(n_electrons)
        virt = range(n_electrons, n_qubits)
        singles = [
            Excitation((i,), (a,)) for i in occ for a in virt if _spin(i) == _spin(a)
        ]
        doubles = [
            Excitation((i, j), (a, b))
            for i, j in combinations(occ, 2)
            for a, b in combinations(virt, 2)
            if _spin(i) + _spin(j) == _spin(a) + _spin(b)
        ]
        self.excitations: tuple[Excitation, ...] = tuple(singles + doubles)

    @property
    def n_params(self) -> int:
        return len(self.excitations)

    def __repr__(self) -> str:
        return f"UccsdAnsatz({self.n_qubits} qubits, {self.n_electrons} electrons, {self.n_params} parameters)"

    @cached_property
    def generators(self) -> tuple["PauliRotationGroup", ...]:
        return tuple(PauliRotationGroup.from_excitation(ex, self.n_qubits) for ex in self.excitations)


class PauliRotationGroup:
    """exp(theta G) for an anti-Hermitian generator G = i sum_k g_k P_k of
    mutually commuting strings that share one X-mask.

    Because the strings commute, exp(theta G) = prod_k exp(i theta g_k P_k),
    and each factor is cos + i sin P_k applied as a masked sweep over the
    amplitudes. All strings of a fermionic excitation under Jordan-Wigner share
    the X-mask of the orbitals it touches.
    """

    def __init__(self, xmask: int, zmasks: np.ndarray, weights: np.ndarray, n_qubits: int):
        self.xmask = int(xmask)
        self.zmasks = np.asarray(zmasks, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        self.n_qubits = n_qubits
        index = np.arange(1 << n_qubits, dtype=np.int64)
        self.perm = index ^ self.xmask
        ypow = popcount(self.xmask & self.zmasks) % 4
        signs = 1 - 2 * (popcount(self.zmasks[:, None] & index[None, :]) & 1)
        # P_k psi = phase_k[perm] * psi[perm]
        self.phases = ((1j) ** ypow)[:, None] * signs[:, self.perm]
        # G psi = i sum_k g_k P_k psi = gdiag * psi[perm]
        self.gdiag = 1j * (self.weights @ self.phases)
        # G^2 is diagonal: -1 on the states the excitation connects, 0 elsewhere
        self.g2diag = (self.gdiag * self.gdiag[self.perm]).real
        self.closed_form = bool(np.all(np.isin(np.round(self.g2diag, 12), (-1.0, 0.0))))

    @classmethod
    def from_excitation(cls, excitation: Excitation, n_qubits: int) -> "PauliRotationGroup":
        x, z, c = fermion_to_qubit(excitation.generator_terms(), n_qubits)
        keep = np.abs(c) > 1e-14
        x, z, c = x[keep], z[keep], c[keep]
        if np.unique(x).size != 1:
            raise ValueError("generator strings do not share one X-mask")
        if np.abs(c.real).max() > 1e-12:
            raise ValueError("generator is not anti-Hermitian")
        return cls(x[0], z, c.imag, n_qubits)

    def words(self) -> list[str]:
        return [masks_to_word(self.xmask, int(z), self.n_qubits) for z in self.zmasks]

    def apply_generator(self, psi: np.ndarray) -> np.ndarray:
        return self.gdiag * psi[self.perm]

    def apply(self, psi: np.ndarray, theta: float) -> np.ndarray:
        """exp(theta G) psi.

        For fermionic excitations G^3 = -G, so the rotation product collapses to
        1 + sin(theta) G + (1 - cos(theta)) G^2, which is what is evaluated.
        """
        if not self.closed_form:
            return self.rotate(psi, theta)
        return psi + np.sin(theta) * (self.gdiag * psi[self.perm]) + (1.0 - np.cos(theta)) * (self.g2diag * psi)

    def rotate(self, psi: np.ndarray, theta: float) -> np.ndarray:
        """Sequential product of the single-string rotations."""
        for g, phase in zip(self.weights, self.phases):
            angle = theta * g
            psi = np.cos(angle) * psi + 1j * np.sin(angle) * (phase * psi[self.perm])
        return psi


def apply_uccsd(state: QuantumState, ansatz: UccsdAnsatz, theta) -> QuantumState:
    """prod_k exp(theta_k (T_k - T_k+)) |state>, first excitation applied first."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ansatz.n_params,):
        raise ValueError(f"expected {ansatz.n_params} parameters, got shape {theta.shape}")
    if state.n_qubits != ansatz.n_qubits:
        raise ValueError("state and ansatz qubit counts differ")
    psi = state.amplitudes.copy()
    for gen, t in zip(ansatz.generators, theta):
        if t != 0.0:
            psi = gen.apply(psi, t)
    psi /= np.linalg.norm(psi)
    return QuantumState(psi, state.n_qubits)


def energy_and_gradient(hamiltonian: CompiledOperator, ansatz: UccsdAnsatz, theta, reference: np.ndarray):
    """Energy and exact parameter gradient by reverse (adjoint) sweep.

    With psi_k the state after k rotations and lambda_k = U_{k+1}+...U_K+ H psi_K,
    dE/dtheta_k = 2 Re <lambda_k| G_k |psi_k>.
    """
    gens = ansatz.generators
    psi = reference.copy()
    for gen, t in zip(gens, theta):
        psi = gen.apply(psi, t)
    lam = hamiltonian.apply(psi)
    energy = float(np.vdot(psi, lam).real)
    grad = np.empty(len(gens))
    for k in range(len(gens) - 1, -1, -1):
        gen, t = gens[k], theta[k]
        grad[k] = 2.0 * np.vdot(lam, gen.apply_generator(psi)).real
        psi = gen.apply(psi, -t)
        lam = gen.apply(lam, -t)
    return energy, grad
