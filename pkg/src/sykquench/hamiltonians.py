"""Random SYK_q couplings, fermionic and hard-core boson SYK Hamiltonians, field
Hamiltonians, and bandwidth normalization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .mapping import FLAVORS, _unit_image
from .pauli import OperatorSum, _exact_scale, _product_phase

__all__ = [
    "RNG_NAME",
    "HermiticityError",
    "EigensolverError",
    "CouplingTensor",
    "QuenchHamiltonian",
    "coupling_variance",
    "coupling_tuples",
    "sample_couplings",
    "bosonic_sign_exponent",
    "build_syk",
    "build_h0",
    "bandwidth",
    "normalize",
    "quench_hamiltonian",
    "DENSE_MAX_L",
]

RNG_NAME = "numpy.random.PCG64 + Generator.standard_normal"
DENSE_MAX_L = 8


class HermiticityError(ValueError):
    pass


class EigensolverError(RuntimeError):
    pass


def coupling_variance(q: int, L: int, J: float = 1.0) -> float:
    return J**2 * math.factorial(q - 1) / (2 * L) ** (q - 1)


@lru_cache(maxsize=None)
def coupling_tuples(q: int, L: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing q-tuples over ``1..2L`` in lexicographic order."""
    return tuple(combinations(range(1, 2 * L + 1), q))


def _check_q(q: int, L: int):
    if q % 2 or not 2 <= q <= 2 * L:
        raise ValueError(f"q must be even with 2 <= q <= 2L={2 * L}, got q={q}")


@dataclass(frozen=True)
class CouplingTensor:
    """Gaussian couplings of one disorder realization, one value per sorted tuple."""

    q: int
    L: int
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    J: float = 1.0

    def __post_init__(self):
        _check_q(self.q, self.L)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (math.comb(2 * self.L, self.q),):
            raise ValueError("one coupling per strictly increasing tuple is required")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def tuples(self):
        return coupling_tuples(self.q, self.L)

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.tuples, self.values.tolist()))

    def to_json(self) -> str:
        return json.dumps({"q": self.q, "L": self.L, "J": self.J, "seed": self.seed,
                           "rng": RNG_NAME, "entries": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "CouplingTensor":
        d = json.loads(text)
        return cls(d["q"], d["L"], np.array(d["entries"]), d["seed"], d["J"])

    def __eq__(self, other):
        if not isinstance(other, CouplingTensor):
            return NotImplemented
        return (self.q, self.L, self.J, self.seed) == (other.q, other.L, other.J, other.seed) and np.array_equal(
            self.values, other.values)

    __hash__ = None


def sample_couplings(q: int, L: int, J: float = 1.0, seed: int = 0) -> CouplingTensor:
    _check_q(q, L)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = math.comb(2 * L, q)
    values = rng.standard_normal(n) * math.sqrt(coupling_variance(q, L, J))
    return CouplingTensor(q, L, values, seed, J)


def bosonic_sign_exponent(indices) -> int:
    """Literal exponent ``s``: ``sum_l (1 + (-1)^{i_l}) delta(i_{l-1}+1, i_l)``.

    Each same-site pair ``(2m-1, 2m)`` contributes 2.
    """
    return sum((1 + (-1) ** b) * (a + 1 == b) for a, b in zip(indices, indices[1:]))


@lru_cache(maxsize=None)
def _unit_images(L: int, flavor: str):
    return [(_unit_image(i, L, flavor).x, _unit_image(i, L, flavor).z) for i in range(1, 2 * L + 1)]


def build_syk(c: CouplingTensor, flavor: str = "fermionic", sign_convention: str = "hermitian") -> OperatorSum:
    """SYK_q Hamiltonian in the Pauli representation.

    Fermionic: ``i^{q/2} sum J gamma...gamma``. Bosonic: each tuple carries
    ``i^{s}`` with ``s`` from :func:`bosonic_sign_exponent`. Taken literally that
    exponent leaves tuples with an odd number of same-site pairs
    anti-Hermitian, so ``sign_convention='hermitian'`` (default) uses ``i^{s/2}``,
    which differs from ``i^{s}`` only by ``(-1)^{#pairs}``: a sign flip of
    an individual Gaussian coupling. ``'literal'`` keeps ``i^{s}`` and raises
    :class:`HermiticityError` naming the first offending tuple.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}")
    if sign_convention not in ("hermitian", "literal"):
        raise ValueError("sign_convention must be 'hermitian' or 'literal'")
    L, q = c.L, c.q
    images = _unit_images(L, flavor)
    norm = 0.5 ** (q // 2)
    acc: dict[tuple[int, int], complex] = {}
    for tup, J in zip(c.tuples, c.values):
        x = z = 0
        phase = 0
        for idx in tup:
            x2, z2 = images[idx - 1]
            phase += _product_phase(x, z, x2, z2)
            x ^= x2
            z ^= z2
        if flavor == "fermionic":
            phase += q // 2
        else:
            s = bosonic_sign_exponent(tup)
            phase += s if sign_convention == "literal" else s // 2
        val = _exact_scale(complex(J * norm), phase % 4)
        if val.imag != 0:
            raise HermiticityError(f"tuple {tup} gives a non-Hermitian term under the {sign_convention} convention")
        key = (x, z)
        acc[key] = acc.get(key, 0) + val
    H = OperatorSum(L, acc)
    if not H.is_hermitian():
        raise HermiticityError("assembled SYK Hamiltonian is not Hermitian")
    return H


def build_h0(axis: str, omega: float = 1.0, L: int = 1) -> OperatorSum:
    """Uniform field ``omega * sum_i sigma_i^a``."""
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    bits = {"x": (1, 0), "y": (1, 1), "z": (0, 1)}[axis]
    terms = {}
    for site in range(1, L + 1):
        m = 1 << (L - site)
        terms[(m * bits[0], m * bits[1])] = omega
    return OperatorSum(L, terms)


def _extremes_dense(H: OperatorSum) -> tuple[float, float]:
    w = np.linalg.eigvalsh(H.to_dense())
    return float(w[0]), float(w[-1])


def _extremes_iterative(H: OperatorSum, tol: float, maxiter: int) -> tuple[float, float]:
    A = H.to_sparse()
    v0 = np.random.Generator(np.random.PCG64(12345)).standard_normal(A.shape[0]).astype(complex)
    try:
        lo = spla.eigsh(A, k=1, which="SA", v0=v0, tol=tol, maxiter=maxiter, return_eigenvectors=False)[0]
        hi = spla.eigsh(A, k=1, which="LA", v0=v0, tol=tol, maxiter=maxiter, return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        raise EigensolverError(f"extremal eigensolver did not converge: {exc}") from exc
    return float(lo), float(hi)


def bandwidth(H: OperatorSum, method: str = "auto", tol: float = 1e-12, maxiter: int = 20000) -> float:
    """``E_max - E_min``; dense for ``L <= DENSE_MAX_L``, restarted Lanczos above."""
    if not H.is_hermitian():
        raise HermiticityError("bandwidth needs a Hermitian operator")
    if H.is_zero:
        return 0.0
    if method == "auto":
        method = "dense" if H.length <= DENSE_MAX_L else "lanczos"
    lo, hi = _extremes_dense(H) if method == "dense" else _extremes_iterative(H, tol, maxiter)
    return hi - lo


def normalize(H: OperatorSum, width: float | None = None) -> OperatorSum:
    width = bandwidth(H) if width is None else width
    if not width > 0:
        raise ValueError("cannot normalize an operator with zero bandwidth")
    return H / width


@dataclass(frozen=True)
class QuenchHamiltonian:
    pre: OperatorSum
    post: OperatorSum
    bandwidth: float
    axis: str
    flavor: str
    q: int


def quench_hamiltonian(c: CouplingTensor, axis: str, flavor: str = "fermionic", omega: float = 1.0) -> QuenchHamiltonian:
    raw = build_syk(c, flavor)
    width = bandwidth(raw)
    return QuenchHamiltonian(build_h0(axis, omega, c.L), normalize(raw, width), width, axis, flavor, c.q)
