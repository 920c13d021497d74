"""Molecular geometry, element data and XYZ I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from qdyn.units import ANGSTROM_TO_BOHR, BOHR_TO_ANGSTROM

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
)
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}

# standard atomic weights (amu)
STANDARD_MASS = {
    "H": 1.008, "He": 4.0026, "Li": 6.94, "Be": 9.0122, "B": 10.81,
    "C": 12.011, "N": 14.007, "O": 15.999, "F": 18.998, "Ne": 20.180,
    "Na": 22.990, "Mg": 24.305, "Al": 26.982, "Si": 28.085, "P": 30.974,
    "S": 32.06, "Cl": 35.45, "Ar": 39.948,
}
# most abundant isotope (amu)
ISOTOPE_MASS = {
    "H": 1.00782503, "He": 4.00260325, "Li": 7.01600344, "Be": 9.0121831,
    "B": 11.0093054, "C": 12.0, "N": 14.0030740, "O": 15.9949146,
    "F": 18.9984032, "Ne": 19.9924402, "Na": 22.9897693, "Mg": 23.9850417,
    "Al": 26.9815385, "Si": 27.9769265, "P": 30.9737620, "S": 31.9720711,
    "Cl": 34.9688527, "Ar": 39.9623831,
}

MIN_SEPARATION = 1e-6
AXES = {"x": 0, "y": 1, "z": 2}


class XYZParseError(ValueError):
    """Malformed XYZ input; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Molecule:
    """Nuclear framework of a molecule in atomic units.

    Attributes:
        symbols: element symbols, one per atom
        coords: (n_atoms, 3) Cartesian coordinates in Bohr
        charge: net molecular charge in units of e
    """

    symbols: tuple[str, ...]
    coords: np.ndarray
    charge: int = 0
    numbers: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        coords = np.array(self.coords, dtype=float).reshape(-1, 3)
        if len(symbols) != coords.shape[0]:
            raise ValueError(
                f"{len(symbols)} atoms but {coords.shape[0]} coordinate rows"
            )
        unknown = [s for s in symbols if s not in ATOMIC_NUMBER]
        if unknown:
            raise ValueError(f"unknown element symbol(s): {', '.join(unknown)}")
        coords.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "charge", int(self.charge))
        object.__setattr__(self, "numbers", tuple(ATOMIC_NUMBER[s] for s in symbols))
        if self.n_electrons < 0:
            raise ValueError(f"charge {self.charge} leaves a negative electron count")
        if self.n_atoms > 1 and self.distance_matrix()[np.triu_indices(self.n_atoms, 1)].min() < MIN_SEPARATION:
            raise ValueError("coincident nuclei")

    @property
    def n_atoms(self) -> int:
        return len(self.symbols)

    @property
    def n_electrons(self) -> int:
        return sum(self.numbers) - self.charge

    def distance_matrix(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.coords[i] - self.coords[j]))

    def with_coords(self, coords) -> "Molecule":
        return Molecule(self.symbols, np.asarray(coords, dtype=float).reshape(-1, 3), self.charge)

    def masses(self, convention: str = "standard") -> np.ndarray:
        """Atomic masses in amu; ``convention`` is ``standard`` or ``isotope``."""
        table = {"standard": STANDARD_MASS, "isotope": ISOTOPE_MASS}.get(convention)
        if table is None:
            raise ValueError(f"unknown mass convention {convention!r}")
        return np.array([table[s] for s in self.symbols])

    @classmethod
    def from_angstrom(cls, symbols, coords, charge: int = 0) -> "Molecule":
        return cls(tuple(symbols), np.asarray(coords, dtype=float) * ANGSTROM_TO_BOHR, charge)

    def coords_angstrom(self) -> np.ndarray:
        return self.coords * BOHR_TO_ANGSTROM


def displace(mol: Molecule, atom: int, axis, delta: float) -> Molecule:
    """Copy of ``mol`` with one Cartesian coordinate shifted by ``delta`` Bohr."""
    if not 0 <= atom < mol.n_atoms:
        raise IndexError(f"atom index {atom} out of range for {mol.n_atoms} atoms")
    k = AXES[axis] if isinstance(axis, str) else int(axis)
    coords = mol.coords.copy()
    coords[atom, k] += delta
    return mol.with_coords(coords)


def displace_flat(mol: Molecule, steps: dict[int, float]) -> Molecule:
    """Shift flattened coordinates ``3*atom + axis`` by the given amounts."""
    flat = mol.coords.reshape(-1).copy()
    for j, d in steps.items():
        flat[j] += d
    return mol.with_coords(flat)


def nuclear_repulsion(mol: Molecule) -> float:
    z = np.array(mol.numbers, dtype=float)
    energy = 0.0
    for i in range(mol.n_atoms):
        for j in range(i):
            r = mol.distance(i, j)
            if r < MIN_SEPARATION:
                raise ValueError(f"coincident nuclei {j} and {i}")
            energy += z[i] * z[j] / r
    return energy


_CHARGE_RE = re.compile(r"charge\s*=\s*([+-]?\d+)")


def parse_xyz(text: str) -> Molecule:
    """Parse a single-frame XYZ block (Angstrom). Charge comes from ``charge=<int>``
    in the comment line, default 0."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise XYZParseError("missing atom count", 1)
    try:
        n = int(lines[0].split()[0])
    except ValueError:
        raise XYZParseError(f"malformed atom count {lines[0].strip()!r}", 1) from None
    if n < 1:
        raise XYZParseError(f"atom count must be positive, got {n}", 1)
    if len(lines) < n + 2:
        raise XYZParseError(f"expected {n} atom lines, found {max(len(lines) - 2, 0)}", len(lines) + 1)
    comment = lines[1]
    match = _CHARGE_RE.search(comment)
    charge = int(match.group(1)) if match else 0
    symbols, coords = [], []
    for offset, line in enumerate(lines[2 : n + 2]):
        lineno = offset + 3
        parts = line.split()
        if len(parts) < 4:
            raise XYZParseError(f"expected 'symbol x y z', got {line.strip()!r}", lineno)
        sym = parts[0]
        if sym not in ATOMIC_NUMBER:
            raise XYZParseError(f"unknown element {sym!r}", lineno)
        try:
            xyz = [float(v) for v in parts[1:4]]
        except ValueError:
            raise XYZParseError(f"non-numeric coordinate in {line.strip()!r}", lineno) from None
        symbols.append(sym)
        coords.append(xyz)
    return Molecule.from_angstrom(symbols, coords, charge)


def read_xyz(path) -> Molecule:
    with open(path) as fh:
        return parse_xyz(fh.read())


def serialize_xyz(mol: Molecule, comment: str = "") -> str:
    head = f"charge={mol.charge}" + (f" {comment}" if comment else "")
    rows = [
        f"{s:<2s} {x:20.12f} {y:20.12f} {z:20.12f}"
        for s, (x, y, z) in zip(mol.symbols, mol.coords_angstrom())
    ]
    return "\n".join([str(mol.n_atoms), head, *rows]) + "\n"


def parse_xyz_frames(text: str) -> list[Molecule]:
    """Split a multi-frame XYZ file into molecules."""
    lines = text.splitlines()
    frames, i = [], 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            n = int(lines[i].split()[0])
        except ValueError:
            raise XYZParseError(f"malformed atom count {lines[i].strip()!r}", i + 1) from None
        block = "\n".join(lines[i : i + n + 2])
        try:
            frames.append(parse_xyz(block))
        except XYZParseError as exc:
            raise XYZParseError(str(exc).split(": ", 1)[1], exc.line + i) from None
        i += n + 2
    return frames
