"""STO-3G basis construction and Gaussian integrals."""

from qdyn.integrals.basis import STO3G, ContractedGaussian, build_basis
from qdyn.integrals.boys import boys, boys_array
from qdyn.integrals.engine import (
    IntegralSet,
    LinearDependenceError,
    compute_integrals,
    dump_integrals,
    electron_repulsion,
    one_electron_integrals,
    overlap_matrix,
)

__all__ = [
    "STO3G",
    "ContractedGaussian",
    "IntegralSet",
    "LinearDependenceError",
    "boys",
    "boys_array",
    "build_basis",
    "compute_integrals",
    "dump_integrals",
    "electron_repulsion",
    "one_electron_integrals",
    "overlap_matrix",
]
