"""End-to-end acceptance runs, one test and one PASS/FAIL line per criterion.

Geometries come from repro/geometries, the same files the checked-in repro
configs use. The suite takes a few minutes on one core.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qdyn.dynamics import compute_forces, run_md
from qdyn.electronic import build_electronic_structure, solve_vqe
from qdyn.molecule import read_xyz
from qdyn.stationary import hessian_approx, hessian_full, normal_modes, optimize_geometry, ts_search
from qdyn.statevector import exact_ground_state
from qdyn.units import ANGSTROM_PER_FS_TO_AU, BOHR_TO_ANGSTROM, amu_to_me

from systems import equilateral_h3, h2, lih

ROOT = Path(__file__).resolve().parent.parent
GEOMETRIES = ROOT / "repro" / "geometries"

FULL_REFERENCE = {"H2": [5000.2], "LiH": [1683.3], "H3+": [3447.3, 2122.3, 2115.9]}
APPROX_REFERENCE = {"H2": [5201.3], "LiH": [1730.5], "H3+": [3526.2, 2166.7, 2159.2]}
MINIMA = {"H2": h2(0.735), "LiH": lih(1.548), "H3+": equilateral_h3(0.986)}


def report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def angstrom_distances(mol) -> np.ndarray:
    d = mol.distance_matrix() * BOHR_TO_ANGSTROM
    return d[np.triu_indices(mol.n_atoms, 1)]


@pytest.fixture(scope="module")
def full_frequencies():
    out = {}
    for name, mol in MINIMA.items():
        structure = build_electronic_structure(mol)
        hess = hessian_full(structure, reference=solve_vqe(structure))
        out[name] = (normal_modes(hess, mol.masses()).vibrations, hess)
    return out


@pytest.fixture(scope="module")
def md_run():
    mol = read_xyz(GEOMETRIES / "h3p_collision.xyz")
    v0 = np.zeros((3, 3))
    v0[0] = [0.0, 0.0, 0.125 * ANGSTROM_PER_FS_TO_AU]
    return run_md(mol, v0, 0.2, 300)


def test_criterion_1_geometry_optimization(capsys):
    details, ok = [], True
    cases = [("h2_start", 0.735, 0.005), ("lih_start", 1.548, 0.01), ("h3p_start", 0.986, 0.005)]
    for name, target, tol in cases:
        opt = optimize_geometry(read_xyz(GEOMETRIES / f"{name}.xyz"))
        d = angstrom_distances(opt.molecule)
        ok &= opt.converged and bool(np.all(np.abs(d - target) <= tol))
        details.append(f"{name.split('_')[0]} " + "/".join(f"{v:.4f}" for v in d))
    report(capsys, 1, ok, "; ".join(details) + " A")


def test_criterion_2_full_hessian_frequencies(capsys, full_frequencies):
    details, ok = [], True
    for name, ref in FULL_REFERENCE.items():
        freq, _ = full_frequencies[name]
        tol = 50.0
        ok &= len(freq) == len(ref) and bool(np.all(np.abs(freq - ref) <= tol))
        details.append(f"{name} " + "/".join(f"{v:.1f}" for v in freq))
    report(capsys, 2, ok, "; ".join(details) + " cm-1")


def test_criterion_3_approximate_hessian_frequencies(capsys, full_frequencies):
    details, ok = [], True
    for name, ref in APPROX_REFERENCE.items():
        mol = MINIMA[name]
        structure = build_electronic_structure(mol)
        hess = hessian_approx(structure, solve_vqe(structure))
        freq = normal_modes(hess, mol.masses(), project=True, coords=mol.coords).vibrations
        full = full_frequencies[name][0]
        ratio = freq / full if len(freq) == len(full) else np.array([np.nan])
        ok &= (len(freq) == len(ref)
               and bool(np.all(np.abs(freq / ref - 1.0) <= 0.06))
               and bool(np.all((ratio >= 0.95) & (ratio <= 1.06)))
               and hess.raw_asymmetry < 1e-6)
        details.append(f"{name} " + "/".join(f"{v:.1f}" for v in freq)
                       + " (x" + "/".join(f"{r:.3f}" for r in ratio) + ")")
    report(capsys, 3, ok, "; ".join(details))


@pytest.fixture(scope="module")
def h3_scan():
    mol = read_xyz(GEOMETRIES / "h3p_scan.xyz")
    rows = []
    for r in np.linspace(5.0, 0.45, 20):
        coords = mol.coords.copy()
        coords[0, 2] = -r / BOHR_TO_ANGSTROM
        geom = mol.with_coords(coords)
        structure = build_electronic_structure(geom)
        result = solve_vqe(structure)
        exact_e = exact_ground_state(structure.hamiltonian, 2, 0.0)[0]
        f_corr = compute_forces(structure, result)
        f_exact = compute_forces(structure, result, mode="exact")
        rows.append((r, result.energy, exact_e, f_corr.forces[0, 2], f_exact.forces[0, 2]))
    return np.array(rows)


def test_criterion_4_vqe_exactness_on_scan(capsys, h3_scan):
    err = np.abs(h3_scan[:, 1] - h3_scan[:, 2])
    report(capsys, 4, bool(np.all(err < 1e-6)), f"max |E_VQE - E_exact| = {err.max():.2e} Ha over 20 points")


def test_criterion_5_force_fidelity_on_scan(capsys, h3_scan):
    far = h3_scan[:, 0] > 1.0
    err = np.abs(h3_scan[far, 3] - h3_scan[far, 4])
    report(capsys, 5, bool(np.all(err < 1e-4)),
           f"max |F_corr - F_oracle| = {err.max() * 1e3:.2e} mHa/Bohr at {far.sum()} points > 1.0 A")


def test_criterion_6_reaction_dynamics(capsys, md_run):
    frames = md_run.frames
    coords = np.array([f.coords for f in frames])
    d_ab = np.linalg.norm(coords[:, 0] - coords[:, 1], axis=1) * BOHR_TO_ANGSTROM
    d_bc = np.linalg.norm(coords[:, 1] - coords[:, 2], axis=1) * BOHR_TO_ANGSTROM
    com_ab = (coords[:, 0] + coords[:, 1]) / 2.0
    recede = np.linalg.norm(coords[:, 2] - com_ab, axis=1)
    last = recede[-51:]
    drift = md_run.energy_drift()
    swapped = d_ab[0] > 3.0 and d_bc[0] < 1.0 and d_ab[-1] < 1.0 and d_bc[-1] > 2.0
    ok = (md_run.completed and len(frames) == 301 and swapped
          and bool(np.all(np.diff(last) > 0)) and drift <= 1e-3)
    report(capsys, 6, ok,
           f"{len(frames) - 1} steps, A-B {d_ab[0]:.2f}->{d_ab[-1]:.2f} A, B-C {d_bc[0]:.2f}->{d_bc[-1]:.2f} A, "
           f"drift {drift * 1e3:.3f} mHa")


@pytest.mark.xfail(strict=True, reason="central-difference truncation: the net force scales as delta_d^2 "
                   "and the accumulated momentum ends about 5% above the 1e-5 bound")
def test_linear_momentum_regression_bound(md_run):
    masses = amu_to_me(np.full(3, 1.008))
    momentum = np.array([(masses[:, None] * f.velocities).sum(axis=0) for f in md_run.frames])
    assert np.abs(momentum - momentum[0]).max() < 1e-5


def test_criterion_7_transition_state(capsys, md_run):
    results = []
    for t_fs in (22.6, 25.0):
        k = int(round(t_fs / 0.2))
        mol = read_xyz(GEOMETRIES / "h3p_collision.xyz").with_coords(md_run.frames[k].coords)
        results.append(ts_search(mol))
    details, ok = [], True
    for res in results:
        d = np.sort(angstrom_distances(res.molecule))
        imag = res.modes.imaginary_levels
        ok &= (bool(np.all(np.abs(d[:2] - 0.876) <= 0.01)) and abs(d[2] - 1.752) <= 0.02
               and len(imag) == 1 and abs(imag[0] / -974.0 - 1.0) <= 0.10
               and float(np.abs(res.gradient).max()) < 1e-4)
        details.append("R " + "/".join(f"{v:.4f}" for v in d) + f" A, nu {imag[0]:.0f} cm-1, "
                       f"|g| {np.abs(res.gradient).max():.1e}")
    same = np.allclose(np.sort(angstrom_distances(results[0].molecule)),
                       np.sort(angstrom_distances(results[1].molecule)), atol=1e-3)
    report(capsys, 7, ok and same, "; ".join(details))


def test_criterion_8_sn2_active_space(capsys):
    details, ok = [], True
    for tag in "abc":
        structure = build_electronic_structure(read_xyz(GEOMETRIES / f"sn2_{tag}.xyz"), active=(2, 2))
        result = solve_vqe(structure)
        exact_e = exact_ground_state(structure.hamiltonian, 2, 0.0)[0]
        e_hf = structure.scf.energy
        ok &= (structure.scf.converged and structure.n_qubits == 4 and result.energy <= e_hf + 1e-10
               and abs(result.energy - exact_e) < 1e-6)
        details.append(f"{tag}: E_HF-E_VQE {(e_hf - result.energy) * 1e3:.3f} mHa, "
                       f"|E_VQE-E_exact| {abs(result.energy - exact_e):.1e}")
    report(capsys, 8, ok, "; ".join(details))


PROPERTY_TESTS = [
    "tests/test_statevector.py::test_uccsd_is_unitary_and_matches_dense",
    "tests/test_pauli.py::test_jordan_wigner_matches_fock_space_oracle",
    "tests/test_integrals.py::test_eri_eightfold_symmetry",
    "tests/test_stationary.py::test_h2_full_hessian_modes",
    "tests/test_stationary.py::test_h2_approximate_hessian_is_symmetric_and_stable",
    "tests/test_dynamics.py::test_verlet_is_time_reversible",
]


def test_criterion_9_property_suites(capsys, full_frequencies):
    asymmetry = full_frequencies["H3+"][1].raw_asymmetry
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                          cwd=ROOT, capture_output=True, text=True)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    report(capsys, 9, proc.returncode == 0 and asymmetry < 1e-6,
           f"{summary}; H3+ full Hessian raw asymmetry {asymmetry:.1e}")
