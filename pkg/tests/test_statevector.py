import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from qdyn.pauli import PauliSum, number_operator
from qdyn.statevector import (
    CompiledOperator,
    Excitation,
    PauliRotationGroup,
    QuantumState,
    UccsdAnsatz,
    apply_uccsd,
    energy_and_gradient,
    exact_ground_state,
    expectation,
    prepare_hf_state,
    sector_indices,
    string_expectations,
)

import fock


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


def dense_uccsd(ansatz, theta):
    psi = np.zeros(1 << ansatz.n_qubits)
    psi[(1 << ansatz.n_electrons) - 1] = 1.0
    for ex, t in zip(ansatz.excitations, theta):
        gen = fock.excitation_generator(ex.occupied, ex.virtual, ansatz.n_qubits)
        psi = scipy.linalg.expm(t * gen) @ psi
    return psi


def test_hf_state_occupies_lowest_qubits():
    state = prepare_hf_state(4, 2)
    assert np.flatnonzero(state.amplitudes).tolist() == [0b0011]
    assert expectation(state, number_operator(4)) == approx(2.0)
    with pytest.raises(ValueError):
        prepare_hf_state(2, 3)


def test_state_shape_checked():
    with pytest.raises(ValueError):
        QuantumState(np.ones(3), 2)


def test_expectation_matches_dense():
    op = PauliSum({"XYZ": 0.7, "ZZI": -0.2, "IXX": 0.4, "III": 1.5})
    psi = random_state(3, 4)
    ref = np.vdot(psi, op.to_dense() @ psi).real
    state = QuantumState(psi, 3)
    assert expectation(state, op) == approx(ref, abs=1e-12)
    assert CompiledOperator(op).apply(psi) == approx(op.to_dense() @ psi, abs=1e-12)
    vals = string_expectations(state, op)
    assert sum(op.coefficient(w) * v for w, v in vals.items()) == approx(ref, abs=1e-12)
    with pytest.raises(ValueError):
        expectation(QuantumState(random_state(2, 0), 2), op)


def test_ansatz_parameter_counts():
    assert UccsdAnsatz(4, 2).n_params == 3
    assert UccsdAnsatz(6, 2).n_params == 8
    ex = UccsdAnsatz(4, 2).excitations
    assert [e.rank for e in ex] == [1, 1, 2]
    assert ex[2] == Excitation((0, 1), (2, 3))


@pytest.mark.parametrize("occupied,virtual", [((0,), (2,)), ((1,), (5,)), ((0, 1), (2, 3)), ((0, 3), (4, 5))])
def test_closed_form_matches_matrix_exponential(occupied, virtual):
    n = 6
    gen = PauliRotationGroup.from_excitation(Excitation(occupied, virtual), n)
    assert gen.closed_form
    dense = fock.excitation_generator(occupied, virtual, n)
    psi = random_state(n, 11)
    for theta in (0.37, -1.2, 2.9):
        ref = scipy.linalg.expm(theta * dense) @ psi
        assert np.abs(gen.apply(psi, theta) - ref).max() < 1e-12
        assert np.abs(gen.rotate(psi, theta) - ref).max() < 1e-12
    assert np.abs(gen.apply_generator(psi) - dense @ psi).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-np.pi, np.pi, allow_nan=False), min_size=8, max_size=8))
def test_uccsd_is_unitary_and_matches_dense(theta):
    ansatz = UccsdAnsatz(6, 2)
    state = apply_uccsd(prepare_hf_state(6, 2), ansatz, theta)
    assert state.norm == approx(1.0, abs=1e-10)
    assert np.abs(state.amplitudes - dense_uccsd(ansatz, theta)).max() < 1e-10
    # particle number and S_z are conserved
    outside = np.setdiff1d(np.arange(64), sector_indices(6, 2, 0.0))
    assert np.abs(state.amplitudes[outside]).max() < 1e-12


def test_adjoint_gradient_matches_finite_difference(h3_equilateral_solved):
    structure, _ = h3_equilateral_solved
    op = CompiledOperator(structure.hamiltonian)
    ansatz = structure.ansatz
    ref = prepare_hf_state(ansatz.n_qubits, ansatz.n_electrons).amplitudes
    theta = np.random.default_rng(3).normal(scale=0.3, size=ansatz.n_params)
    _, grad = energy_and_gradient(op, ansatz, theta, ref)
    h = 1e-5
    fd = np.array([
        (energy_and_gradient(op, ansatz, theta + h * e, ref)[0]
         - energy_and_gradient(op, ansatz, theta - h * e, ref)[0]) / (2 * h)
        for e in np.eye(ansatz.n_params)
    ])
    assert grad == approx(fd, abs=1e-8)


def test_energy_matches_statevector_expectation(h2_solved):
    structure, _ = h2_solved
    ansatz = structure.ansatz
    theta = np.array([0.1, -0.05, 0.2])
    ref = prepare_hf_state(4, 2).amplitudes
    energy, _ = energy_and_gradient(CompiledOperator(structure.hamiltonian), ansatz, theta, ref)
    state = apply_uccsd(prepare_hf_state(4, 2), ansatz, theta)
    assert energy == approx(expectation(state, structure.hamiltonian), abs=1e-12)


def test_parameter_shape_checked():
    with pytest.raises(ValueError):
        apply_uccsd(prepare_hf_state(4, 2), UccsdAnsatz(4, 2), np.zeros(2))


def test_sector_indices():
    assert sector_indices(4, 2).tolist() == [3, 5, 6, 9, 10, 12]
    # even qubits carry alpha spin
    assert sector_indices(4, 2, 0.0).tolist() == [3, 6, 9, 12]
    assert sector_indices(4, 2, 1.0).tolist() == [5]


def test_exact_ground_state_in_sector():
    op = PauliSum({"IIIZ": 1.0, "IIZI": 1.0, "IZII": 1.0, "ZIII": 1.0})
    # sum Z_k is lowest with every qubit occupied, or with three empty at N=1
    energy, state = exact_ground_state(op)
    assert energy == approx(-4.0)
    assert abs(state.amplitudes[15]) == approx(1.0)
    energy, _ = exact_ground_state(op, n_particles=1)
    assert energy == approx(2.0)
    with pytest.raises(ValueError):
        exact_ground_state(op, n_particles=5)


def test_exact_ground_state_matches_dense_eigensolver(h2_solved):
    structure, _ = h2_solved
    energy, state = exact_ground_state(structure.hamiltonian, 2, 0.0)
    dense = structure.hamiltonian.to_dense()
    idx = sector_indices(4, 2, 0.0)
    assert energy == approx(np.linalg.eigvalsh(dense[np.ix_(idx, idx)])[0], abs=1e-12)
    assert expectation(state, structure.hamiltonian) == approx(energy, abs=1e-12)


def test_hf_state_energy_equals_rhf(h2_solved):
    structure, _ = h2_solved
    assert expectation(prepare_hf_state(4, 2), structure.hamiltonian) == approx(structure.scf.energy, abs=1e-8)


def test_unitarity_and_particle_number_over_many_draws():
    ansatz = UccsdAnsatz(6, 2)
    hf = prepare_hf_state(6, 2)
    number = number_operator(6)
    rng = np.random.default_rng(2024)
    worst_norm = worst_number = 0.0
    for _ in range(1000):
        psi = hf.amplitudes.copy()
        for gen, t in zip(ansatz.generators, rng.uniform(-np.pi, np.pi, ansatz.n_params)):
            psi = gen.apply(psi, t)
        state = QuantumState(psi, 6)
        worst_norm = max(worst_norm, abs(state.norm - 1.0))
        worst_number = max(worst_number, abs(expectation(state, number) - 2.0))
    assert worst_norm < 1e-10
    assert worst_number < 1e-10
