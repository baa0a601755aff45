"""Pauli strings with exact phase tracking, sums of them, and state-vector kernels.

Conventions used throughout the package:

* sites are numbered ``1..L`` from left to right;
* the computational basis is the Z eigenbasis with ``Z|up> = +|up>``;
* a basis index ``b`` stores site ``i`` in bit ``L - i`` (site 1 is the most
  significant bit), and a set bit means spin down.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionError",
    "PauliString",
    "OperatorSum",
    "multiply",
    "anticommutator",
    "commutator",
    "commutator_sum",
    "apply_to_state",
    "MERGE_TOL",
]

MERGE_TOL = 1e-14
_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}


class DimensionError(ValueError):
    """Operands live on different numbers of sites or state dimensions."""


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _product_phase(x1: int, z1: int, x2: int, z2: int) -> int:
    """Power of i picked up by sigma(x1,z1) @ sigma(x2,z2)."""
    # sigma(x, z) = i^{|x&z|} X^x Z^z and Z^z X^x = (-1)^{|z&x|} X^x Z^z
    x3, z3 = x1 ^ x2, z1 ^ z2
    return (_popcount(x1 & z1) + _popcount(x2 & z2) + 2 * _popcount(z1 & x2) - _popcount(x3 & z3)) % 4


def _exact_scale(coeff: complex, phase: int) -> complex:
    # multiplication by a power of i without floating-point rounding
    if phase == 0:
        return coeff
    if phase == 1:
        return complex(-coeff.imag, coeff.real)
    if phase == 2:
        return complex(-coeff.real, -coeff.imag)
    return complex(coeff.imag, -coeff.real)


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-site Paulis times a complex coefficient.

    Stored as two bitmasks: ``x`` marks sites carrying X or Y, ``z`` marks
    sites carrying Z or Y.
    """

    length: int
    x: int = 0
    z: int = 0
    coeff: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.length < 1:
            raise DimensionError("a Pauli string needs at least one site")
        full = (1 << self.length) - 1
        if self.x & ~full or self.z & ~full:
            raise DimensionError("letter masks exceed the string length")
        object.__setattr__(self, "coeff", complex(self.coeff))
        if self.coeff == 0:
            raise ValueError("zero coefficient; use an empty OperatorSum for the zero operator")

    @classmethod
    def from_letters(cls, letters: str, coeff: complex = 1.0) -> "PauliString":
        x = z = 0
        for ch in letters.upper():
            bx, bz = _LETTER_BITS[ch]
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(len(letters), x, z, coeff)

    @classmethod
    def from_sites(cls, length: int, sites: Mapping[int, str], coeff: complex = 1.0) -> "PauliString":
        """Build from a ``{site: letter}`` map with 1-based sites."""
        letters = ["I"] * length
        for site, letter in sites.items():
            if not 1 <= site <= length:
                raise DimensionError(f"site {site} outside 1..{length}")
            letters[site - 1] = letter
        return cls.from_letters("".join(letters), coeff)

    @classmethod
    def identity(cls, length: int, coeff: complex = 1.0) -> "PauliString":
        return cls(length, 0, 0, coeff)

    @property
    def letters(self) -> str:
        out = []
        for site in range(1, self.length + 1):
            bit = self.length - site
            out.append(_BITS_LETTER[((self.x >> bit) & 1, (self.z >> bit) & 1)])
        return "".join(out)

    @property
    def key(self) -> tuple[int, int]:
        return (self.x, self.z)

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def with_coeff(self, coeff: complex) -> "PauliString":
        return PauliString(self.length, self.x, self.z, coeff)

    def commutes_with(self, other: "PauliString") -> bool:
        _check_lengths(self, other)
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def __mul__(self, other):
        if isinstance(other, PauliString):
            return multiply(self, other)
        return self.with_coeff(self.coeff * other)

    def __rmul__(self, scalar):
        return self.with_coeff(self.coeff * scalar)

    def to_dense(self) -> np.ndarray:
        return OperatorSum.from_strings([self]).to_dense()

    def __repr__(self):
        return f"PauliString({self.coeff:g}*{self.letters})"


def _check_lengths(a, b):
    if a.length != b.length:
        raise DimensionError(f"length mismatch: {a.length} vs {b.length}")


def multiply(a: PauliString, b: PauliString) -> PauliString:
    _check_lengths(a, b)
    phase = _product_phase(a.x, a.z, b.x, b.z)
    return PauliString(a.length, a.x ^ b.x, a.z ^ b.z, _exact_scale(a.coeff * b.coeff, phase))


class OperatorSum:
    """Linear combination of Pauli strings with distinct letter patterns.

    Terms sharing a pattern are merged on construction and coefficients with
    modulus below ``MERGE_TOL`` are dropped. An empty sum is the zero operator.
    """

    __slots__ = ("length", "_terms", "_grouped")

    def __init__(self, length: int, terms: Mapping[tuple[int, int], complex] | None = None):
        self.length = length
        clean = {}
        for key, c in (terms or {}).items():
            c = complex(c)
            if abs(c) >= MERGE_TOL:
                clean[key] = c
        self._terms = clean
        self._grouped = None

    @classmethod
    def from_strings(cls, strings: Iterable[PauliString], length: int | None = None) -> "OperatorSum":
        acc: dict[tuple[int, int], complex] = {}
        for s in strings:
            if length is None:
                length = s.length
            elif s.length != length:
                raise DimensionError(f"length mismatch: {s.length} vs {length}")
            acc[s.key] = acc.get(s.key, 0) + s.coeff
        if length is None:
            raise ValueError("length required for an empty sum")
        return cls(length, acc)

    @classmethod
    def zero(cls, length: int) -> "OperatorSum":
        return cls(length)

    @classmethod
    def identity(cls, length: int) -> "OperatorSum":
        return cls(length, {(0, 0): 1.0})

    def __len__(self):
        return len(self._terms)

    def __iter__(self) -> Iterator[PauliString]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.length, x, z, c)

    def items(self):
        return self._terms.items()

    def coefficient(self, s: PauliString) -> complex:
        return self._terms.get(s.key, 0j)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.length == other.length and self._terms == other._terms

    def allclose(self, other: "OperatorSum", atol: float = 1e-12) -> bool:
        if self.length != other.length:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        _check_lengths(self, other)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0) + c
        return OperatorSum(self.length, acc)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar) -> "OperatorSum":
        if isinstance(scalar, (OperatorSum, PauliString)):
            return self @ scalar
        return OperatorSum(self.length, {k: c * scalar for k, c in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "OperatorSum":
        return OperatorSum(self.length, {k: c / scalar for k, c in self._terms.items()})

    def __matmul__(self, other) -> "OperatorSum":
        if isinstance(other, PauliString):
            other = OperatorSum.from_strings([other])
        _check_lengths(self, other)
        acc: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in self._terms.items():
            for (x2, z2), c2 in other._terms.items():
                key = (x1 ^ x2, z1 ^ z2)
                val = _exact_scale(c1 * c2, _product_phase(x1, z1, x2, z2))
                acc[key] = acc.get(key, 0) + val
        return OperatorSum(self.length, acc)

    def adjoint(self) -> "OperatorSum":
        return OperatorSum(self.length, {k: c.conjugate() for k, c in self._terms.items()})

    def is_hermitian(self) -> bool:
        """Exact check: Pauli strings are Hermitian, so every coefficient must be real."""
        return all(c.imag == 0 for c in self._terms.values())

    def __repr__(self):
        body = " + ".join(f"({c:g}){PauliString(self.length, *k).letters}" for k, c in list(self._terms.items())[:6])
        more = "" if len(self._terms) <= 6 else f" + ... ({len(self._terms)} terms)"
        return f"OperatorSum[{self.length}]({body or '0'}{more})"

    # -- matrix kernels -------------------------------------------------------------

    def _grouped_diagonals(self):
        """Group terms by X mask; return masks and the matching diagonal vectors.

        The operator acts as ``(O v)[b ^ x] += d_x[b] v[b]`` where
        ``d_x[b] = sum_z c * i^{|x&z|} * (-1)^{|z&b|}``; the sum over ``z`` is a
        Walsh-Hadamard transform of the coefficient table.
        """
        if self._grouped is not None:
            return self._grouped
        dim = 1 << self.length
        by_x: dict[int, list[tuple[int, complex]]] = {}
        for (x, z), c in self._terms.items():
            by_x.setdefault(x, []).append((z, _exact_scale(c, _popcount(x & z) % 4)))
        xs = np.array(sorted(by_x), dtype=np.int64)
        diags = np.zeros((len(xs), dim), dtype=complex)
        chunk = max(1, (1 << 22) // dim)
        for start in range(0, len(xs), chunk):
            block = np.zeros((min(chunk, len(xs) - start), dim), dtype=complex)
            for row, x in enumerate(xs[start:start + chunk]):
                for z, c in by_x[int(x)]:
                    block[row, z] += c
            diags[start:start + len(block)] = _walsh_hadamard(block, self.length)
        self._grouped = (xs, diags)
        return self._grouped

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.length
        xs, diags = self._grouped_diagonals()
        cols = np.tile(np.arange(dim), len(xs))
        rows = (np.arange(dim)[None, :] ^ xs[:, None]).ravel()
        return sp.csr_matrix((diags.ravel(), (rows, cols)), shape=(dim, dim))

    def to_dense(self) -> np.ndarray:
        dim = 1 << self.length
        out = np.zeros((dim, dim), dtype=complex)
        xs, diags = self._grouped_diagonals()
        cols = np.arange(dim)
        for x, d in zip(xs, diags):
            out[cols ^ x, cols] += d
        return out


def _walsh_hadamard(block: np.ndarray, n_bits: int) -> np.ndarray:
    """Unnormalized Hadamard transform along the last axis."""
    lead = block.shape[:-1]
    a = block.reshape(lead + (2,) * n_bits)
    for axis in range(len(lead), len(lead) + n_bits):
        a0 = np.take(a, 0, axis=axis)
        a1 = np.take(a, 1, axis=axis)
        a = np.stack((a0 + a1, a0 - a1), axis=axis)
    return a.reshape(block.shape)


def _as_sum(op) -> OperatorSum:
    return OperatorSum.from_strings([op]) if isinstance(op, PauliString) else op


def anticommutator(a: PauliString, b: PauliString) -> OperatorSum:
    _check_lengths(a, b)
    if not a.commutes_with(b):
        return OperatorSum.zero(a.length)
    return OperatorSum.from_strings([multiply(a, b) * 2])


def commutator(a: PauliString, b: PauliString) -> OperatorSum:
    _check_lengths(a, b)
    if a.commutes_with(b):
        return OperatorSum.zero(a.length)
    return OperatorSum.from_strings([multiply(a, b) * 2])


def commutator_sum(H, O) -> OperatorSum:
    """Exact ``[H, O]`` for Pauli sums (or single strings)."""
    H, O = _as_sum(H), _as_sum(O)
    _check_lengths(H, O)
    acc: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in H.items():
        for (x2, z2), c2 in O.items():
            # strings anticommute exactly when the symplectic product is odd
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) % 2 == 0:
                continue
            key = (x1 ^ x2, z1 ^ z2)
            val = _exact_scale(2 * c1 * c2, _product_phase(x1, z1, x2, z2))
            acc[key] = acc.get(key, 0) + val
    return OperatorSum(H.length, acc)


def apply_to_state(O, v: np.ndarray) -> np.ndarray:
    """``O|v>`` term by term, without building a matrix."""
    O = _as_sum(O)
    v = np.asarray(v)
    dim = 1 << O.length
    if v.shape[-1] != dim:
        raise DimensionError(f"state dimension {v.shape[-1]} does not match {O.length} sites")
    idx = np.arange(dim)
    out = np.zeros(v.shape, dtype=complex)
    for (x, z), c in O.items():
        c = _exact_scale(c, _popcount(x & z) % 4)
        sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
        # (P v)[b ^ x] = c * (-1)^{|z&b|} v[b]
        out[..., idx ^ x] += c * sign * v
    return out
