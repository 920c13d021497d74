"""Pauli-string operators and the Jordan-Wigner mapping.

A Pauli string over N qubits is written as an N-letter word in ``IXYZ``; the
rightmost letter acts on qubit 0, matching the ket notation ``|q_{N-1}...q_0>``.
Internally a string is a pair of bit masks (x, z): qubit k carries X if only
bit k of x is set, Z if only bit k of z is set, and Y if both are set.

Jordan-Wigner convention: spin orbital k is qubit k, an occupied orbital is
|1>, and a+_k = (X_k - i Y_k)/2 Z_{k-1}...Z_0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12
HERMITICITY_TOL = 1e-10
MAX_QUBITS = 24

_LETTER = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}


def popcount(a):
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def word_to_masks(word: str) -> tuple[int, int]:
    x = z = 0
    for k, ch in enumerate(reversed(word)):
        if ch == "X":
            x |= 1 << k
        elif ch == "Z":
            z |= 1 << k
        elif ch == "Y":
            x |= 1 << k
            z |= 1 << k
        elif ch != "I":
            raise ValueError(f"invalid Pauli letter {ch!r} in {word!r}")
    return x, z


def masks_to_word(x: int, z: int, n_qubits: int) -> str:
    return "".join(_LETTER[((x >> k) & 1, (z >> k) & 1)] for k in range(n_qubits - 1, -1, -1))


class PauliSum:
    """Real linear combination of Pauli strings, immutable.

    Terms are kept in lexicographic order of their words and every coefficient
    with magnitude below ``PRUNE_TOL`` is dropped.
    """

    __slots__ = ("n_qubits", "words", "coeffs", "x", "z", "_index")

    def __init__(self, terms: Mapping[str, float] | Iterable[tuple[str, float]] = (), n_qubits: int | None = None, *, prune: float = PRUNE_TOL):
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms)
        if n_qubits is None:
            if not items:
                raise ValueError("n_qubits is required for an empty PauliSum")
            n_qubits = len(items[0][0])
        acc: dict[str, float] = {}
        for word, c in items:
            if len(word) != n_qubits:
                raise ValueError(f"word {word!r} does not have {n_qubits} letters")
            word_to_masks(word)
            acc[word] = acc.get(word, 0.0) + float(c)
        words = sorted(w for w, c in acc.items() if abs(c) >= prune)
        self.n_qubits = int(n_qubits)
        self.words = tuple(words)
        self.coeffs = np.array([acc[w] for w in words], dtype=float)
        masks = [word_to_masks(w) for w in words]
        self.x = np.array([m[0] for m in masks], dtype=np.int64)
        self.z = np.array([m[1] for m in masks], dtype=np.int64)
        self._index = {w: i for i, w in enumerate(words)}
        for arr in (self.coeffs, self.x, self.z):
            arr.setflags(write=False)

    @classmethod
    def from_masks(cls, x, z, coeffs, n_qubits: int, *, prune: float = PRUNE_TOL) -> "PauliSum":
        return cls(
            ((masks_to_word(int(a), int(b), n_qubits), float(c)) for a, b, c in zip(x, z, coeffs)),
            n_qubits,
            prune=prune,
        )

    @classmethod
    def identity(cls, n_qubits: int, coeff: float = 1.0) -> "PauliSum":
        return cls({"I" * n_qubits: coeff}, n_qubits)

    @property
    def terms(self) -> dict[str, float]:
        return dict(zip(self.words, self.coeffs.tolist()))

    def support(self) -> frozenset[str]:
        return frozenset(self.words)

    def coefficient(self, word: str) -> float:
        i = self._index.get(word)
        return 0.0 if i is None else float(self.coeffs[i])

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self):
        return iter(zip(self.words, self.coeffs.tolist()))

    def __repr__(self) -> str:
        return f"PauliSum({len(self)} terms, {self.n_qubits} qubits)"

    def _check(self, other: "PauliSum"):
        if self.n_qubits != other.n_qubits:
            raise ValueError(f"qubit-count mismatch: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(list(self) + list(other), self.n_qubits)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        acc = self.terms
        for w, c in other:
            acc[w] = acc.get(w, 0.0) - c
        return PauliSum(acc, self.n_qubits)

    def __neg__(self) -> "PauliSum":
        return PauliSum(((w, -c) for w, c in self), self.n_qubits)

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(((w, c * scalar) for w, c in self), self.n_qubits)

    __rmul__ = __mul__

    def restrict(self, words: Iterable[str], *, keep: bool = True) -> "PauliSum":
        """Terms whose word is (``keep``) or is not in ``words``."""
        chosen = set(words)
        return PauliSum(((w, c) for w, c in self if (w in chosen) == keep), self.n_qubits)

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, data = [], [], []
        for x, z, c in zip(self.x, self.z, self.coeffs):
            phase = (1j) ** int(popcount(x & z))
            sign = 1 - 2 * (popcount(idx & z) & 1)
            rows.append(idx ^ x)
            cols.append(idx)
            data.append(c * phase * sign)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def to_text(self) -> str:
        return "".join(f"{c:.17g} {w}\n" for w, c in self)

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'coefficient word'")
            items.append((parts[1], float(parts[0].replace("−", "-"))))
        return cls(items)


# --- fermion -> qubit -------------------------------------------------------


def _ladder(p: int, dagger: bool):
    """a+_p or a_p as two (x, z, coeff) terms in the X^x Z^z product basis."""
    x = 1 << p
    chain = (1 << p) - 1
    second = 0.5 if dagger else -0.5
    return ((x, chain, 0.5), (x, chain | x, second))


def _to_pauli_coeffs(x, z, c):
    # X^x Z^z = (-i)^{|x&z|} times the Hermitian Pauli string with Y where both bits are set
    return c * (-1j) ** (popcount(x & z) % 4)


def _accumulate(x, z, c, n_qubits: int):
    key = (np.asarray(x, dtype=np.int64) << n_qubits) | np.asarray(z, dtype=np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    total = np.zeros(uniq.size, dtype=complex)
    np.add.at(total, inv, c)
    return uniq >> n_qubits, uniq & ((1 << n_qubits) - 1), total


def fermion_to_qubit(terms: Iterable[tuple[complex, tuple[tuple[int, bool], ...]]], n_qubits: int):
    """Map sum_k c_k prod(ladder ops) to Pauli masks with complex coefficients.

    Each ladder op is ``(orbital, is_creation)``; products act right-to-left as
    written. Returns ``(x, z, coeffs)`` arrays, unpruned.
    """
    xs, zs, cs = [], [], []
    for coeff, ops in terms:
        partial = [(0, 0, complex(coeff))]
        for p, dagger in ops:
            if not 0 <= p < n_qubits:
                raise ValueError(f"orbital {p} outside {n_qubits} qubits")
            nxt = []
            for x1, z1, c1 in partial:
                for x2, z2, c2 in _ladder(p, dagger):
                    sign = -1.0 if bin(z1 & x2).count("1") % 2 else 1.0
                    nxt.append((x1 ^ x2, z1 ^ z2, c1 * c2 * sign))
            partial = nxt
        for x, z, c in partial:
            xs.append(x)
            zs.append(z)
            cs.append(c)
    if not xs:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
    x, z, c = _accumulate(np.array(xs), np.array(zs), np.array(cs), n_qubits)
    return x, z, _to_pauli_coeffs(x, z, c)


def _ladder_arrays(idx: np.ndarray, dagger: bool, choice: int):
    x = np.left_shift(1, idx).astype(np.int64)
    z = x - 1
    if choice:
        z = z | x
        c = 0.5 if dagger else -0.5
    else:
        c = 0.5
    return x, z, c


def _product_terms(index_arrays, daggers, weights, n_qubits):
    """All 2^k Jordan-Wigner expansions of a product of k ladder operators,
    vectorized over the rows of ``index_arrays``."""
    k = len(index_arrays)
    out_x, out_z, out_c = [], [], []
    for choice in range(1 << k):
        x = np.zeros_like(index_arrays[0])
        z = np.zeros_like(index_arrays[0])
        c = weights.astype(complex)
        for op, (idx, dagger) in enumerate(zip(index_arrays, daggers)):
            xo, zo, co = _ladder_arrays(idx, dagger, (choice >> op) & 1)
            sign = 1 - 2 * (popcount(z & xo) & 1)
            x = x ^ xo
            z = z ^ zo
            c = c * co * sign
        out_x.append(x)
        out_z.append(z)
        out_c.append(c)
    return np.concatenate(out_x), np.concatenate(out_z), np.concatenate(out_c)


def jordan_wigner(integrals, *, prune: float = PRUNE_TOL) -> PauliSum:
    """Pauli-string form of offset + h1 a+a + 1/2 h2 a+a+aa.

    ``integrals`` needs ``h1``, ``h2`` and ``scalar_offset`` (see
    :class:`qdyn.scf.SpinOrbitalIntegrals`).
    """
    h1 = np.asarray(integrals.h1)
    h2 = np.asarray(integrals.h2)
    n = h1.shape[0]
    if n > MAX_QUBITS:
        raise ValueError(f"{n} spin orbitals exceed the {MAX_QUBITS}-qubit bound")
    if np.iscomplexobj(h1) or np.iscomplexobj(h2):
        if max(np.abs(h1.imag).max(initial=0.0), np.abs(h2.imag).max(initial=0.0)) > HERMITICITY_TOL:
            raise ValueError("complex integrals are not supported")
        h1, h2 = h1.real, h2.real
    if np.abs(h1 - h1.T).max(initial=0.0) > HERMITICITY_TOL:
        raise ValueError("one-body tensor is not Hermitian")
    if np.abs(h2 - h2.transpose(3, 2, 1, 0)).max(initial=0.0) > HERMITICITY_TOL:
        raise ValueError("two-body tensor is not Hermitian")

    p, q = np.nonzero(np.abs(h1) > 1e-15)
    parts = [_product_terms((p, q), (True, False), h1[p, q], n)]
    p, q, r, s = np.nonzero(np.abs(h2) > 1e-15)
    keep = (p != q) & (r != s)
    p, q, r, s = p[keep], q[keep], r[keep], s[keep]
    if p.size:
        parts.append(_product_terms((p, q, r, s), (True, True, False, False), 0.5 * h2[p, q, r, s], n))
    x = np.concatenate([a[0] for a in parts] + [np.zeros(1, np.int64)])
    z = np.concatenate([a[1] for a in parts] + [np.zeros(1, np.int64)])
    c = np.concatenate([a[2] for a in parts] + [np.array([integrals.scalar_offset], complex)])
    x, z, c = _accumulate(x, z, c, n)
    c = _to_pauli_coeffs(x, z, c)
    if np.abs(c.imag).max(initial=0.0) > HERMITICITY_TOL:
        raise ValueError(f"non-Hermitian result: imaginary residue {np.abs(c.imag).max():.2e}")
    return PauliSum.from_masks(x, z, c.real, n, prune=prune)


def number_operator(n_qubits: int) -> PauliSum:
    """sum_k (I - Z_k)/2."""
    terms = {"I" * n_qubits: 0.5 * n_qubits}
    for k in range(n_qubits):
        terms[masks_to_word(0, 1 << k, n_qubits)] = -0.5
    return PauliSum(terms, n_qubits)


# --- finite-difference Hamiltonians ------------------------------------------


def delta_hamiltonian(h_plus: PauliSum, h_minus: PauliSum) -> PauliSum:
    """Term-wise difference h_plus - h_minus."""
    return h_plus - h_minus


@dataclass(frozen=True)
class DeltaSplit:
    """A Hamiltonian difference split by whether its strings were already measured.

    ``reuse_plus`` and ``reuse_minus`` hold (coefficient, word) pairs whose words
    belong to the reference Hamiltonian, so their expectations are known;
    ``extra`` collects every remaining string and needs one new expectation.
    """

    reuse_plus: tuple[tuple[float, str], ...]
    reuse_minus: tuple[tuple[float, str], ...]
    extra: PauliSum

    def reuse_energy(self, expectations: Mapping[str, float]) -> float:
        plus = sum(c * expectations[w] for c, w in self.reuse_plus)
        minus = sum(c * expectations[w] for c, w in self.reuse_minus)
        return plus - minus

    def reuse_weight(self) -> float:
        return sum(abs(c) for c, _ in self.reuse_plus) + sum(abs(c) for c, _ in self.reuse_minus)

    def extra_weight(self) -> float:
        return float(np.abs(self.extra.coeffs).sum())


def split_reuse_extra(delta: PauliSum, reference: PauliSum) -> DeltaSplit:
    """Split a difference operator against the strings of ``reference``."""
    delta._check(reference)
    ref = reference.support()
    reuse = tuple((c, w) for w, c in delta if w in ref)
    return DeltaSplit(reuse, (), delta.restrict(ref, keep=False))


def split_displaced(h_plus: PauliSum, h_minus: PauliSum, reference: PauliSum) -> DeltaSplit:
    """Split h_plus - h_minus, keeping the two sides of the reused part separate."""
    h_plus._check(reference)
    h_minus._check(reference)
    ref = reference.support()
    plus = tuple((c, w) for w, c in h_plus if w in ref)
    minus = tuple((c, w) for w, c in h_minus if w in ref)
    extra = h_plus.restrict(ref, keep=False) - h_minus.restrict(ref, keep=False)
    return DeltaSplit(plus, minus, extra)
