"""STO-3G contracted Cartesian Gaussians."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qdyn.molecule import Molecule

_S1 = (0.1543289673, 0.5353281423, 0.4446345422)
_SP_S = (-0.09996722919, 0.3995128261, 0.7001154689)
_SP_P = (0.1559162750, 0.6076837186, 0.3919573931)
_SP3_S = (-0.2196203690, 0.2255954336, 0.9003984260)
_SP3_P = (0.01058760429, 0.5951670053, 0.4620010120)

# element -> list of (shell label, angular momentum, exponents, coefficients); EMSL values
STO3G = {
    "H": [
        ("1s", 0, (3.425250914, 0.6239137298, 0.1688554040), _S1),
    ],
    "Li": [
        ("1s", 0, (16.11957475, 2.936200663, 0.7946504870), _S1),
        ("2s", 0, (0.6362897469, 0.1478600533, 0.04808867840), _SP_S),
        ("2p", 1, (0.6362897469, 0.1478600533, 0.04808867840), _SP_P),
    ],
    "C": [
        ("1s", 0, (71.61683735, 13.04509632, 3.530512160), _S1),
        ("2s", 0, (2.941249355, 0.6834830964, 0.2222899159), _SP_S),
        ("2p", 1, (2.941249355, 0.6834830964, 0.2222899159), _SP_P),
    ],
    "Cl": [
        ("1s", 0, (601.3456136, 109.5358542, 29.64467686), _S1),
        ("2s", 0, (38.96041889, 9.053563477, 2.944499834), _SP_S),
        ("2p", 1, (38.96041889, 9.053563477, 2.944499834), _SP_P),
        ("3s", 0, (2.129386495, 0.5940934274, 0.2325241410), _SP3_S),
        ("3p", 1, (2.129386495, 0.5940934274, 0.2325241410), _SP3_P),
    ],
}

_CARTESIAN = {0: [(0, 0, 0)], 1: [(1, 0, 0), (0, 1, 0), (0, 0, 1)]}
_AXIS_LABEL = {(1, 0, 0): "x", (0, 1, 0): "y", (0, 0, 1): "z", (0, 0, 0): ""}


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def primitive_norm(alpha: float, lmn) -> float:
    l, m, n = lmn
    big_l = l + m + n
    num = (2 * alpha / math.pi) ** 0.75 * (4 * alpha) ** (big_l / 2)
    den = math.sqrt(
        _double_factorial(2 * l - 1) * _double_factorial(2 * m - 1) * _double_factorial(2 * n - 1)
    )
    return num / den


def _contracted_self_overlap(exps, coefs, lmn) -> float:
    """<g|g> for a contraction whose coefficients already include primitive norms."""
    l, m, n = lmn
    big_l = l + m + n
    pref = (
        _double_factorial(2 * l - 1) * _double_factorial(2 * m - 1) * _double_factorial(2 * n - 1)
        * math.pi**1.5
    )
    total = 0.0
    for a, ca in zip(exps, coefs):
        for b, cb in zip(exps, coefs):
            p = a + b
            total += ca * cb * pref / (2 * p) ** big_l / p**1.5
    return total


@dataclass(frozen=True, eq=False)
class ContractedGaussian:
    """Normalized contracted Cartesian Gaussian x^l y^m z^n sum_k c_k exp(-a_k r^2).

    ``coefs`` absorb the primitive normalization and the overall contraction
    normalization, so the function has unit self-overlap.
    """

    center: np.ndarray
    angular: tuple[int, int, int]
    exponents: np.ndarray
    coefs: np.ndarray
    atom: int = -1
    label: str = ""

    @classmethod
    def normalized(cls, center, angular, exponents, contraction, atom=-1, label=""):
        exps = np.asarray(exponents, dtype=float)
        if np.any(exps <= 0):
            raise ValueError("Gaussian exponents must be positive")
        coefs = np.array(
            [c * primitive_norm(a, angular) for a, c in zip(exps, contraction)], dtype=float
        )
        coefs /= math.sqrt(_contracted_self_overlap(exps, coefs, angular))
        return cls(np.asarray(center, dtype=float), tuple(angular), exps, coefs, atom, label)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an (n, 3) array of points."""
        d = np.asarray(points) - self.center
        r2 = (d**2).sum(-1)
        radial = np.exp(-np.multiply.outer(r2, self.exponents)) @ self.coefs
        l, m, n = self.angular
        return d[..., 0] ** l * d[..., 1] ** m * d[..., 2] ** n * radial


def build_basis(mol: Molecule) -> list[ContractedGaussian]:
    """One normalized STO-3G contraction per atomic orbital, atoms in input order."""
    basis = []
    for iatom, (sym, center) in enumerate(zip(mol.symbols, mol.coords)):
        if sym not in STO3G:
            raise KeyError(f"no STO-3G parameters for element {sym}")
        for label, l, exps, contraction in STO3G[sym]:
            for lmn in _CARTESIAN[l]:
                basis.append(
                    ContractedGaussian.normalized(
                        center, lmn, exps, contraction, iatom,
                        f"{sym}{iatom} {label}{_AXIS_LABEL[lmn]}",
                    )
                )
    return basis
