import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx
from scipy.integrate import quad

from qdyn.integrals import (
    ContractedGaussian,
    LinearDependenceError,
    boys,
    build_basis,
    compute_integrals,
    dump_integrals,
    overlap_matrix,
)
from qdyn.molecule import Molecule

# Minimal-basis H2 at R = 1.4 bohr: the standard textbook STO-3G integrals.
H2_TEXTBOOK = {
    "S12": 0.6593,
    "T11": 0.7600,
    "T12": 0.2365,
    "H11": -1.1204,
    "H12": -0.9584,
    "(11|11)": 0.7746,
    "(11|22)": 0.5697,
    "(21|11)": 0.4441,
    "(21|21)": 0.2970,
}


@pytest.fixture(scope="module")
def h2_ints():
    mol = Molecule(("H", "H"), np.array([[0.0, 0, 0], [0, 0, 1.4]]))
    return compute_integrals(build_basis(mol), mol)


def test_h2_textbook_values(h2_ints):
    S, T, H, g = h2_ints.S, h2_ints.T, h2_ints.core, h2_ints.eri
    got = {
        "S12": S[0, 1], "T11": T[0, 0], "T12": T[0, 1], "H11": H[0, 0], "H12": H[0, 1],
        "(11|11)": g[0, 0, 0, 0], "(11|22)": g[0, 0, 1, 1], "(21|11)": g[1, 0, 0, 0], "(21|21)": g[1, 0, 1, 0],
    }
    for key, ref in H2_TEXTBOOK.items():
        assert got[key] == approx(ref, abs=1e-4), key


@pytest.mark.parametrize("n, x", [(0, 0.0), (0, 0.3), (1, 2.5), (2, 12.0), (4, 33.0), (0, 36.0), (3, 80.0), (6, 1e-9)])
def test_boys_against_quadrature(n, x):
    ref, _ = quad(lambda t: t ** (2 * n) * np.exp(-x * t * t), 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    assert boys(n, x) == approx(ref, rel=1e-12, abs=1e-15)


def _grid(lo, hi, n):
    ax = np.linspace(lo, hi, n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1), (ax[1] - ax[0]) ** 3


def test_overlap_against_grid_quadrature():
    # a p function against an s function on another center
    mol = Molecule(("Li", "H"), np.array([[0.0, 0, 0], [0.3, -0.2, 1.5]]))
    basis = build_basis(mol)
    pts, dv = _grid(-7.0, 8.0, 121)
    S = overlap_matrix(basis)
    for i, j in [(1, 5), (4, 5), (2, 5), (0, 0)]:
        num = float(np.sum(basis[i](pts) * basis[j](pts)) * dv)
        assert S[i, j] == approx(num, abs=2e-6)


def test_coulomb_self_repulsion_of_1s():
    # (ss|ss) of a single normalized contraction via its radial potential
    f = build_basis(Molecule(("H",), np.zeros((1, 3)), charge=-1))[0]
    a, c = f.exponents, f.coefs
    rho_pairs = [(a[i] + a[j], c[i] * c[j]) for i in range(3) for j in range(3)]

    def density(r):
        return sum(w * np.exp(-p * r * r) for p, w in rho_pairs)

    def potential(r):
        # potential of sum_k w_k exp(-p_k r^2) at distance r
        from scipy.special import erf
        return sum(w * (np.pi / p) ** 1.5 * erf(np.sqrt(p) * r) / r for p, w in rho_pairs)

    ref, _ = quad(lambda r: 4 * np.pi * r * r * density(r) * potential(r), 1e-12, 30.0, limit=200)
    mol = Molecule(("H",), np.zeros((1, 3)), charge=-1)
    ints = compute_integrals([f], mol)
    assert ints.eri[0, 0, 0, 0] == approx(ref, rel=1e-9)


@pytest.fixture(scope="module")
def ch2_ints():
    mol = Molecule.from_angstrom(["C", "H", "H"], [(0, 0, 0.1), (0.2, 0.9, -0.5), (-0.1, -0.95, -0.4)])
    return compute_integrals(build_basis(mol), mol)


def test_eri_eightfold_symmetry(ch2_ints):
    g = ch2_ints.eri
    for perm in ["qprs", "pqsr", "qpsr", "rspq", "srpq", "rsqp", "srqp"]:
        assert np.abs(g - np.einsum(f"pqrs->{perm}", g)).max() < 1e-10


def test_one_electron_matrices_symmetric_and_normalized(ch2_ints):
    for M in (ch2_ints.S, ch2_ints.T, ch2_ints.V):
        assert np.abs(M - M.T).max() < 1e-12
    assert np.diag(ch2_ints.S) == approx(np.ones(ch2_ints.nbf), abs=1e-12)
    assert np.linalg.eigvalsh(ch2_ints.T).min() > 0
    assert np.linalg.eigvalsh(ch2_ints.V).max() < 0


def test_dump_format(h2_ints, tmp_path):
    path = tmp_path / "ints.txt"
    with open(path, "w") as fh:
        dump_integrals(h2_ints, fh)
    lines = path.read_text().splitlines()
    assert lines[0].split()[:3] == ["S", "0", "0"]
    eri = [ln for ln in lines if ln.startswith("ERI")]
    # unique (pq|rs) for two functions: (00|00) (10|00) (10|10) (11|00) (11|10) (11|11)
    assert len(eri) == 6
    i, j, k, l, v = eri[-1].split()[1:]
    assert float(v) == approx(h2_ints.eri[int(i), int(j), int(k), int(l)], rel=1e-14)


def test_linear_dependence_detected():
    mol = Molecule(("H", "H"), np.array([[0.0, 0, 0], [0, 0, 1e-5]]))
    with pytest.raises(LinearDependenceError):
        compute_integrals(build_basis(mol), mol)


shift = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(st.tuples(shift, shift, shift), st.floats(0.5, 3.0))
def test_integrals_translation_invariant(t, r):
    mol = Molecule(("Li", "H"), np.array([[0.0, 0, 0], [0, 0, r]]))
    moved = Molecule(("Li", "H"), mol.coords + np.array(t))
    a = compute_integrals(build_basis(mol), mol)
    b = compute_integrals(build_basis(moved), moved)
    for x, y in ((a.S, b.S), (a.T, b.T), (a.V, b.V), (a.eri, b.eri)):
        assert np.abs(x - y).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 50.0), min_size=1, max_size=4), st.sampled_from([(0, 0, 0), (1, 0, 0), (0, 0, 1)]))
def test_contraction_is_normalized(exps, lmn):
    f = ContractedGaussian.normalized(np.zeros(3), lmn, tuple(exps), tuple(1.0 for _ in exps))
    assert overlap_matrix([f])[0, 0] == approx(1.0, abs=1e-12)
