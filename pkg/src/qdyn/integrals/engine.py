"""McMurchie-Davidson integrals over contracted Cartesian Gaussians (l <= 1).

Basis functions are flattened into plain arrays so that the kernels can be
compiled with numba. All loops run in a fixed order, so repeated evaluations
are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from qdyn.integrals.basis import ContractedGaussian
from qdyn.integrals.boys import boys_into
from qdyn.molecule import Molecule

LINEAR_DEPENDENCE_TOL = 1e-8


class LinearDependenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IntegralSet:
    """AO integrals. ``eri[p, q, r, s]`` is (pq|rs) in chemists' notation."""

    S: np.ndarray
    T: np.ndarray
    V: np.ndarray
    eri: np.ndarray

    @property
    def core(self) -> np.ndarray:
        return self.T + self.V

    @property
    def nbf(self) -> int:
        return self.S.shape[0]


def _flatten(basis):
    nbf = len(basis)
    centers = np.array([g.center for g in basis], dtype=np.float64).reshape(nbf, 3)
    lmn = np.array([g.angular for g in basis], dtype=np.int64).reshape(nbf, 3)
    pstart = np.zeros(nbf + 1, dtype=np.int64)
    for i, g in enumerate(basis):
        pstart[i + 1] = pstart[i] + len(g.exponents)
    exps = np.concatenate([g.exponents for g in basis]).astype(np.float64)
    coefs = np.concatenate([g.coefs for g in basis]).astype(np.float64)
    return centers, lmn, pstart, exps, coefs


@nb.njit(cache=True)
def _hermite_e(imax, jmax, a, b, xab, out):
    """Hermite expansion coefficients E^{ij}_t along one axis; ``xab`` = A - B."""
    p = a + b
    xpa = -b / p * xab
    xpb = a / p * xab
    half_p = 0.5 / p
    out[:, :, :] = 0.0
    out[0, 0, 0] = math.exp(-a * b / p * xab * xab)
    for i in range(imax + 1):
        for j in range(jmax + 1):
            if i == 0 and j == 0:
                continue
            if i > 0:
                src_i, src_j, x = i - 1, j, xpa
            else:
                src_i, src_j, x = i, j - 1, xpb
            for t in range(i + j + 1):
                v = x * out[src_i, src_j, t] + (t + 1) * out[src_i, src_j, t + 1]
                if t > 0:
                    v += half_p * out[src_i, src_j, t - 1]
                out[i, j, t] = v


@nb.njit(cache=True)
def _hermite_r(big_l, alpha, x, y, z, fbuf, rbuf):
    """Hermite Coulomb integrals R_{tuv}; result in ``rbuf[0, t, u, v]``."""
    boys_into(big_l, alpha * (x * x + y * y + z * z), fbuf)
    fac = 1.0
    for n in range(big_l + 1):
        rbuf[n, 0, 0, 0] = fac * fbuf[n]
        fac *= -2.0 * alpha
    for s in range(1, big_l + 1):
        for t in range(s + 1):
            for u in range(s - t + 1):
                v = s - t - u
                for n in range(big_l - s + 1):
                    if t > 0:
                        val = x * rbuf[n + 1, t - 1, u, v]
                        if t > 1:
                            val += (t - 1) * rbuf[n + 1, t - 2, u, v]
                    elif u > 0:
                        val = y * rbuf[n + 1, t, u - 1, v]
                        if u > 1:
                            val += (u - 1) * rbuf[n + 1, t, u - 2, v]
                    else:
                        val = z * rbuf[n + 1, t, u, v - 1]
                        if v > 1:
                            val += (v - 1) * rbuf[n + 1, t, u, v - 2]
                    rbuf[n, t, u, v] = val


@nb.njit(cache=True)
def _one_electron(c1, l1, ps1, e1, k1, c2, l2, ps2, e2, k2, charges, nuclei, S, T, V, want_tv):
    n1 = c1.shape[0]
    n2 = c2.shape[0]
    ex = np.zeros((2, 4, 6))
    ey = np.zeros((2, 4, 6))
    ez = np.zeros((2, 4, 6))
    fbuf = np.zeros(3)
    rbuf = np.zeros((3, 3, 3, 3))
    for i in range(n1):
        ix, iy, iz = l1[i, 0], l1[i, 1], l1[i, 2]
        for j in range(n2):
            jx, jy, jz = l2[j, 0], l2[j, 1], l2[j, 2]
            s_ij = 0.0
            t_ij = 0.0
            v_ij = 0.0
            for pa in range(ps1[i], ps1[i + 1]):
                a = e1[pa]
                for pb in range(ps2[j], ps2[j + 1]):
                    b = e2[pb]
                    p = a + b
                    kab = k1[pa] * k2[pb]
                    _hermite_e(ix, jx + 2, a, b, c1[i, 0] - c2[j, 0], ex)
                    _hermite_e(iy, jy + 2, a, b, c1[i, 1] - c2[j, 1], ey)
                    _hermite_e(iz, jz + 2, a, b, c1[i, 2] - c2[j, 2], ez)
                    rp = math.sqrt(math.pi / p)
                    sx = ex[ix, jx, 0] * rp
                    sy = ey[iy, jy, 0] * rp
                    sz = ez[iz, jz, 0] * rp
                    s_ij += kab * sx * sy * sz
                    if not want_tv:
                        continue
                    # 1D kinetic: j(j-1) S(i,j-2) - 2b(2j+1) S(i,j) + 4b^2 S(i,j+2)
                    dx = -2.0 * b * (2 * jx + 1) * sx + 4.0 * b * b * ex[ix, jx + 2, 0] * rp
                    if jx >= 2:
                        dx += jx * (jx - 1) * ex[ix, jx - 2, 0] * rp
                    dy = -2.0 * b * (2 * jy + 1) * sy + 4.0 * b * b * ey[iy, jy + 2, 0] * rp
                    if jy >= 2:
                        dy += jy * (jy - 1) * ey[iy, jy - 2, 0] * rp
                    dz = -2.0 * b * (2 * jz + 1) * sz + 4.0 * b * b * ez[iz, jz + 2, 0] * rp
                    if jz >= 2:
                        dz += jz * (jz - 1) * ez[iz, jz - 2, 0] * rp
                    t_ij += -0.5 * kab * (dx * sy * sz + sx * dy * sz + sx * sy * dz)
                    px = (a * c1[i, 0] + b * c2[j, 0]) / p
                    py = (a * c1[i, 1] + b * c2[j, 1]) / p
                    pz = (a * c1[i, 2] + b * c2[j, 2]) / p
                    big_l = ix + iy + iz + jx + jy + jz
                    for c in range(charges.shape[0]):
                        _hermite_r(big_l, p, px - nuclei[c, 0], py - nuclei[c, 1], pz - nuclei[c, 2], fbuf, rbuf)
                        acc = 0.0
                        for t in range(ix + jx + 1):
                            for u in range(iy + jy + 1):
                                for v in range(iz + jz + 1):
                                    acc += ex[ix, jx, t] * ey[iy, jy, u] * ez[iz, jz, v] * rbuf[0, t, u, v]
                        v_ij += -charges[c] * 2.0 * math.pi / p * kab * acc
            S[i, j] = s_ij
            T[i, j] = t_ij
            V[i, j] = v_ij


@nb.njit(cache=True)
def _pair_data(centers, lmn, ps, exps, coefs):
    nbf = centers.shape[0]
    npair = nbf * (nbf + 1) // 2
    pair_start = np.zeros(npair + 1, dtype=np.int64)
    k = 0
    for i in range(nbf):
        for j in range(i + 1):
            pair_start[k + 1] = pair_start[k] + (ps[i + 1] - ps[i]) * (ps[j + 1] - ps[j])
            k += 1
    nprim = pair_start[npair]
    pp = np.zeros(nprim)
    pcen = np.zeros((nprim, 3))
    pcoef = np.zeros((nprim, 3, 3, 3))
    ex = np.zeros((2, 2, 4))
    ey = np.zeros((2, 2, 4))
    ez = np.zeros((2, 2, 4))
    k = 0
    q = 0
    for i in range(nbf):
        for j in range(i + 1):
            for pa in range(ps[i], ps[i + 1]):
                a = exps[pa]
                for pb in range(ps[j], ps[j + 1]):
                    b = exps[pb]
                    p = a + b
                    _hermite_e(lmn[i, 0], lmn[j, 0], a, b, centers[i, 0] - centers[j, 0], ex)
                    _hermite_e(lmn[i, 1], lmn[j, 1], a, b, centers[i, 1] - centers[j, 1], ey)
                    _hermite_e(lmn[i, 2], lmn[j, 2], a, b, centers[i, 2] - centers[j, 2], ez)
                    kab = coefs[pa] * coefs[pb]
                    for t in range(lmn[i, 0] + lmn[j, 0] + 1):
                        for u in range(lmn[i, 1] + lmn[j, 1] + 1):
                            for v in range(lmn[i, 2] + lmn[j, 2] + 1):
                                pcoef[q, t, u, v] = kab * ex[lmn[i, 0], lmn[j, 0], t] * ey[lmn[i, 1], lmn[j, 1], u] * ez[lmn[i, 2], lmn[j, 2], v]
                    pp[q] = p
                    for d in range(3):
                        pcen[q, d] = (a * centers[i, d] + b * centers[j, d]) / p
                    q += 1
            k += 1
    return pair_start, pp, pcen, pcoef


@nb.njit(cache=True)
def _eri(centers, lmn, ps, exps, coefs, out):
    nbf = centers.shape[0]
    pair_start, pp, pcen, pcoef = _pair_data(centers, lmn, ps, exps, coefs)
    fbuf = np.zeros(5)
    rbuf = np.zeros((5, 5, 5, 5))
    pref0 = 2.0 * math.pi**2.5
    ij = 0
    for i in range(nbf):
        for j in range(i + 1):
            tx = lmn[i, 0] + lmn[j, 0]
            ty = lmn[i, 1] + lmn[j, 1]
            tz = lmn[i, 2] + lmn[j, 2]
            kl = 0
            for k in range(nbf):
                for l in range(k + 1):
                    if kl > ij:
                        break
                    sx = lmn[k, 0] + lmn[l, 0]
                    sy = lmn[k, 1] + lmn[l, 1]
                    sz = lmn[k, 2] + lmn[l, 2]
                    big_l = tx + ty + tz + sx + sy + sz
                    val = 0.0
                    for a in range(pair_start[ij], pair_start[ij + 1]):
                        p = pp[a]
                        for b in range(pair_start[kl], pair_start[kl + 1]):
                            q = pp[b]
                            alpha = p * q / (p + q)
                            _hermite_r(big_l, alpha, pcen[a, 0] - pcen[b, 0], pcen[a, 1] - pcen[b, 1], pcen[a, 2] - pcen[b, 2], fbuf, rbuf)
                            acc = 0.0
                            for t in range(tx + 1):
                                for u in range(ty + 1):
                                    for v in range(tz + 1):
                                        eb = pcoef[a, t, u, v]
                                        if eb == 0.0:
                                            continue
                                        inner = 0.0
                                        for tau in range(sx + 1):
                                            for nu in range(sy + 1):
                                                for phi in range(sz + 1):
                                                    sgn = 1.0 if (tau + nu + phi) % 2 == 0 else -1.0
                                                    inner += sgn * pcoef[b, tau, nu, phi] * rbuf[0, t + tau, u + nu, v + phi]
                                        acc += eb * inner
                            val += pref0 / (p * q * math.sqrt(p + q)) * acc
                    out[i, j, k, l] = val
                    out[j, i, k, l] = val
                    out[i, j, l, k] = val
                    out[j, i, l, k] = val
                    out[k, l, i, j] = val
                    out[l, k, i, j] = val
                    out[k, l, j, i] = val
                    out[l, k, j, i] = val
                    kl += 1
                if kl > ij:
                    break
            ij += 1


def _nuclei(mol: Molecule):
    return np.array(mol.numbers, dtype=np.float64), np.ascontiguousarray(mol.coords, dtype=np.float64)


def overlap_matrix(basis1: list[ContractedGaussian], basis2: list[ContractedGaussian] | None = None) -> np.ndarray:
    """Overlap <a|b> between two (possibly different) basis sets."""
    basis2 = basis1 if basis2 is None else basis2
    c1, l1, ps1, e1, k1 = _flatten(basis1)
    c2, l2, ps2, e2, k2 = _flatten(basis2)
    n1, n2 = len(basis1), len(basis2)
    S = np.zeros((n1, n2))
    dummy = np.zeros((n1, n2))
    _one_electron(c1, l1, ps1, e1, k1, c2, l2, ps2, e2, k2, np.zeros(0), np.zeros((0, 3)), S, dummy, dummy.copy(), False)
    return S


def one_electron_integrals(basis, mol: Molecule):
    flat = _flatten(basis)
    n = len(basis)
    S, T, V = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    charges, nuclei = _nuclei(mol)
    _one_electron(*flat, *flat, charges, nuclei, S, T, V, True)
    return S, T, V


def electron_repulsion(basis) -> np.ndarray:
    n = len(basis)
    eri = np.zeros((n, n, n, n))
    _eri(*_flatten(basis), eri)
    return eri


def compute_integrals(basis: list[ContractedGaussian], mol: Molecule) -> IntegralSet:
    """Overlap, kinetic, nuclear attraction and two-electron integrals."""
    if not basis:
        raise ValueError("empty basis")
    S, T, V = one_electron_integrals(basis, mol)
    smallest = np.linalg.eigvalsh(S)[0]
    if smallest < LINEAR_DEPENDENCE_TOL:
        raise LinearDependenceError(
            f"overlap matrix is numerically singular (smallest eigenvalue {smallest:.3e})"
        )
    # the kernel fills every element independently; enforce exact symmetry
    S = 0.5 * (S + S.T)
    T = 0.5 * (T + T.T)
    V = 0.5 * (V + V.T)
    return IntegralSet(S, T, V, electron_repulsion(basis))


def dump_integrals(ints: IntegralSet, fh, threshold: float = 0.0) -> None:
    """Plain-text dump: one ``label i j [k l] value`` entry per line (0-based)."""
    n = ints.nbf
    for label, mat in (("S", ints.S), ("T", ints.T), ("V", ints.V)):
        for i in range(n):
            for j in range(i + 1):
                if abs(mat[i, j]) > threshold:
                    fh.write(f"{label} {i} {j} {mat[i, j]: .15e}\n")
    for i, j, k, l in zip(*np.nonzero(np.abs(ints.eri) > threshold)):
        if i >= j and k >= l and i * (i + 1) // 2 + j >= k * (k + 1) // 2 + l:
            fh.write(f"ERI {i} {j} {k} {l} {ints.eri[i, j, k, l]: .15e}\n")
