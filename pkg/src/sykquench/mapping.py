"""Spin <-> Majorana duality, its hard-core boson analogue, and operator sizes.

Majorana operators are normalized so that ``gamma_a**2 = 1/2``. Index ``2j-1``
carries X on site ``j`` and index ``2j`` carries Y. Fermionic operators get a
Jordan-Wigner string of Z's on sites ``< j``; bosonic ones do not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .pauli import PauliString

__all__ = [
    "FLAVORS",
    "MajoranaMonomial",
    "jw_majorana",
    "jw_boson",
    "majorana_image",
    "monomial_to_pauli",
    "pauli_to_indices",
    "operator_size",
    "space_dimension",
    "size_representative",
    "representative_sites",
    "reorder_sign",
]

FLAVORS = ("fermionic", "bosonic")


def _check_flavor(flavor: str) -> str:
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}, got {flavor!r}")
    return flavor


def _site_and_letter(index: int) -> tuple[int, str]:
    return (index + 1) // 2, ("X" if index % 2 else "Y")


def _unit_image(index: int, L: int, flavor: str) -> PauliString:
    """Pauli string of ``sqrt(2) * gamma_index`` (unit coefficient)."""
    site, letter = _site_and_letter(index)
    if not 1 <= site <= L:
        raise ValueError(f"site {site} outside 1..{L}")
    sites = {site: letter}
    if flavor == "fermionic":
        sites.update({i: "Z" for i in range(1, site)})
    return PauliString.from_sites(L, sites)


def _parity_index(j: int, parity: str) -> int:
    if parity == "odd":
        return 2 * j - 1
    if parity == "even":
        return 2 * j
    raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")


def jw_majorana(j: int, parity: str, L: int) -> PauliString:
    """Fermionic Majorana ``gamma^{2j-1}`` (odd) or ``gamma^{2j}`` (even)."""
    if not 1 <= j <= L:
        raise ValueError(f"site {j} outside 1..{L}")
    return _unit_image(_parity_index(j, parity), L, "fermionic") * (1 / math.sqrt(2))


def jw_boson(j: int, parity: str, L: int) -> PauliString:
    """Hard-core boson ``chi^{2j-1} = X_j / sqrt 2`` or ``chi^{2j} = Y_j / sqrt 2``."""
    if not 1 <= j <= L:
        raise ValueError(f"site {j} outside 1..{L}")
    return _unit_image(_parity_index(j, parity), L, "bosonic") * (1 / math.sqrt(2))


def majorana_image(index: int, L: int, flavor: str = "fermionic") -> PauliString:
    """Pauli string of the fundamental operator with global index ``1..2L``."""
    _check_flavor(flavor)
    return _unit_image(index, L, flavor) * (1 / math.sqrt(2))


def _swap_sign(a: int, b: int, flavor: str) -> int:
    if flavor == "fermionic":
        return -1
    # hard-core bosons anticommute only with their same-site partner
    return -1 if (a + 1) // 2 == (b + 1) // 2 else 1


def reorder_sign(indices: Sequence[int], flavor: str = "fermionic") -> tuple[int, tuple[int, ...], int]:
    """Bring a product of fundamental operators to canonical order.

    Returns ``(sign, sorted_unique_indices, n_squares)``; the product equals
    ``sign * 2**-n_squares * prod(sorted_unique_indices)``.
    """
    work = list(indices)
    sign = 1
    # insertion sort, tracking exchange signs
    for pos in range(1, len(work)):
        cur = pos
        while cur > 0 and work[cur - 1] > work[cur]:
            sign *= _swap_sign(work[cur - 1], work[cur], flavor)
            work[cur - 1], work[cur] = work[cur], work[cur - 1]
            cur -= 1
    out: list[int] = []
    squares = 0
    for idx in work:
        if out and out[-1] == idx:
            out.pop()
            squares += 1
        else:
            out.append(idx)
    return sign, tuple(out), squares


@dataclass(frozen=True)
class MajoranaMonomial:
    """Canonical product ``coeff * gamma^{i1} ... gamma^{ik}`` with ``i1 < ... < ik``."""

    indices: tuple[int, ...]
    coeff: complex = 1.0
    flavor: str = "fermionic"

    def __post_init__(self):
        _check_flavor(self.flavor)
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise ValueError("Majorana indices start at 1")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing; use MajoranaMonomial.product")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def product(cls, indices: Sequence[int], coeff: complex = 1.0, flavor: str = "fermionic") -> "MajoranaMonomial":
        """Canonicalize an arbitrary ordered product (repeats squared away)."""
        sign, canon, squares = reorder_sign(indices, flavor)
        return cls(canon, coeff * sign * 0.5 ** squares, flavor)

    def size(self) -> int:
        return len(self.indices)

    def __mul__(self, other: "MajoranaMonomial") -> "MajoranaMonomial":
        if self.flavor != other.flavor:
            raise ValueError("cannot multiply monomials of different flavors")
        return MajoranaMonomial.product(self.indices + other.indices, self.coeff * other.coeff, self.flavor)


def monomial_to_pauli(m: MajoranaMonomial, L: int) -> PauliString:
    """Pauli string of a monomial, with the ``2**(-k/2)`` normalization applied once."""
    if m.indices and m.indices[-1] > 2 * L:
        raise ValueError(f"index {m.indices[-1]} exceeds 2L = {2 * L}")
    out = PauliString.identity(L)
    for idx in m.indices:
        out = out * _unit_image(idx, L, m.flavor)
    k = len(m.indices)
    scale = 0.5 ** (k // 2) if k % 2 == 0 else 0.5 ** (k // 2) / math.sqrt(2)
    return out.with_coeff(out.coeff * m.coeff * scale)


def pauli_to_indices(p: PauliString, flavor: str = "fermionic") -> tuple[int, ...]:
    """Index set of the unique monomial proportional to a Pauli string."""
    _check_flavor(flavor)
    L = p.length
    chosen: list[int] = []
    parity_right = 0
    for site in range(L, 0, -1):
        bit = L - site
        xb, zb = (p.x >> bit) & 1, (p.z >> bit) & 1
        if flavor == "fermionic":
            even = zb ^ parity_right
        else:
            even = zb
        odd = xb ^ even
        if even:
            chosen.append(2 * site)
        if odd:
            chosen.append(2 * site - 1)
        parity_right ^= odd ^ even
    return tuple(sorted(chosen))


def operator_size(axis: str, sites: Sequence[int], flavor: str = "fermionic") -> int:
    """Size of ``sigma_i^a`` or ``sigma_i^a sigma_j^a`` in the fundamental basis.

    ``axis='y'`` is treated as ``'x'``: the two families are equivalent.
    """
    _check_flavor(flavor)
    axis = "x" if axis == "y" else axis
    if axis not in ("x", "z"):
        raise ValueError(f"unsupported axis {axis!r}")
    sites = tuple(sites)
    if len(sites) == 1:
        (i,) = sites
        if axis == "z":
            return 2
        return 2 * i - 1 if flavor == "fermionic" else 1
    if len(sites) == 2:
        i, j = sites
        if i >= j:
            raise ValueError("pair sites must satisfy i < j")
        if axis == "z":
            return 4
        return 2 * abs(j - i) if flavor == "fermionic" else 2
    raise ValueError("expected one site or a pair of sites")


def space_dimension(L: int, k: int) -> int:
    if not 0 <= k <= 2 * L:
        raise ValueError(f"size {k} outside 0..{2 * L}")
    return math.comb(2 * L, k)


def representative_sites(k: int, L: int) -> tuple[int, ...]:
    """Sites of the x-string with fermionic size ``k``."""
    if not 1 <= k <= 2 * L - 1:
        raise ValueError(f"no x-string representative of size {k} at L={L}")
    if k % 2:
        return ((k + 1) // 2,)
    return (1, 1 + k // 2)


def size_representative(k: int, L: int, family: str = "x-string") -> PauliString:
    if family != "x-string":
        raise ValueError(f"unknown representative family {family!r}")
    return PauliString.from_sites(L, {s: "X" for s in representative_sites(k, L)})
