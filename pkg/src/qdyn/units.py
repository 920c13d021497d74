"""Unit conversions between Hartree atomic units and laboratory units.

Everything inside the package works in atomic units (Bohr, Hartree, electron
mass, atomic time). Angstrom, femtosecond, amu and wavenumbers only appear at
I/O boundaries.
"""

ANGSTROM_TO_BOHR = 1.8897259886
BOHR_TO_ANGSTROM = 1.0 / ANGSTROM_TO_BOHR

FS_TO_AU_TIME = 41.341374576
AU_TIME_TO_FS = 1.0 / FS_TO_AU_TIME

AMU_TO_ME = 1822.888486
ME_TO_AMU = 1.0 / AMU_TO_ME

HARTREE_TO_WAVENUMBER = 219474.6313632
WAVENUMBER_TO_HARTREE = 1.0 / HARTREE_TO_WAVENUMBER

# velocity: 1 Angstrom/fs expressed in Bohr per atomic time unit
ANGSTROM_PER_FS_TO_AU = ANGSTROM_TO_BOHR / FS_TO_AU_TIME


def angstrom_to_bohr(x):
    return x * ANGSTROM_TO_BOHR


def bohr_to_angstrom(x):
    return x * BOHR_TO_ANGSTROM


def fs_to_au(t):
    return t * FS_TO_AU_TIME


def au_to_fs(t):
    return t * AU_TIME_TO_FS


def amu_to_me(m):
    return m * AMU_TO_ME


def me_to_amu(m):
    return m * ME_TO_AMU


def hartree_to_wavenumber(e):
    return e * HARTREE_TO_WAVENUMBER


def wavenumber_to_hartree(nu):
    return nu * WAVENUMBER_TO_HARTREE
