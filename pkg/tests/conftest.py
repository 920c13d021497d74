import pytest

from qdyn.electronic import build_electronic_structure, solve_vqe
from systems import equilateral_h3, h2, lih


@pytest.fixture(scope="session")
def h2_solved():
    structure = build_electronic_structure(h2())
    return structure, solve_vqe(structure)


@pytest.fixture(scope="session")
def h3_equilateral_solved():
    structure = build_electronic_structure(equilateral_h3(0.986))
    return structure, solve_vqe(structure)


@pytest.fixture(scope="session")
def lih_structure():
    return build_electronic_structure(lih())
