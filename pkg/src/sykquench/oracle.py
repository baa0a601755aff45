"""Short-time analytics for Gaussian-averaged return amplitudes.

Closed forms for the averaged double and quadruple commutators, the quartic
short-time prediction, and two brute-force routes that do not use the closed
forms: exact Wick averaging and Monte-Carlo sampling of couplings, both on top of
a symbolic nested-commutator expansion in the Majorana basis.
"""
from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .hamiltonians import coupling_tuples, sample_couplings

__all__ = [
    "BudgetExceeded",
    "ShortTimeCoefficients",
    "OracleEstimate",
    "coefficients",
    "predict_return_amplitude",
    "nested_commutator_terms",
    "count_commutator_terms",
    "count_table",
    "brute_force_coefficient",
    "REFERENCE_COUNTS",
    "CONVENTIONS",
]

# L = 5 term counts, keyed by (q, k, n)
REFERENCE_COUNTS = {
    (2, 1, 2): 81, (2, 1, 3): 657, (2, 1, 4): 5121,
    (2, 2, 2): 200, (2, 2, 3): 2176, (2, 2, 4): 21676,
    (2, 3, 2): 315, (2, 3, 3): 4011, (2, 3, 4): 46053,
    (4, 1, 2): 7518, (4, 1, 3): 406980,
    (4, 2, 2): 8568, (4, 2, 3): 482720,
    (4, 3, 2): 8148, (4, 3, 3): 499380,
}


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ShortTimeCoefficients:
    """``avg [H,[H,O]] = c2 O`` and ``avg [H,[H,[H,[H,O]]]] = c4 O`` for an unnormalized SYK_q."""

    c2: float
    c4: float
    q: int
    k: int
    L: int
    J: float = 1.0


def _syk4_c4(k: int, L: int) -> float:
    poly = (2**5 * (3 * k + 1) * L**5
            - 2**4 * (15 * k**2 + 38 * k) * L**4
            + 2**3 * (36 * k**3 + 122 * k**2 + 207 * k - 99) * L**3
            - 2**2 * (48 * k**4 + 168 * k**3 + 543 * k**2 + 352 * k - 510) * L**2
            + 2**3 * (9 * k**5 + 21 * k**4 + 168 * k**3 + 88 * k**2 + 156 * k - 304) * L
            - 12 * k**6 - 336 * k**4 - 624 * k**2 + 864)
    return k * (2 * L - k) * poly / (2**10 * L**6)


def coefficients(q: int, k: int, L: int, J: float = 1.0) -> ShortTimeCoefficients:
    if not 1 <= k <= 2 * L - 1:
        raise ValueError(f"size {k} outside 1..2L-1")
    if q == 2:
        c2 = k * (2 * L - k) / (2 * L)
        c4 = k * (2 * L - k) * ((6 * k - 2) * L - (3 * k**2 - 2)) / (4 * L**2)
    elif q == 4:
        # the second factor is (2L-(k+1))(2L-(k+2))
        c2 = k * (2 * L - k) * ((k - 1) * (k - 2) + (2 * L - k - 1) * (2 * L - k - 2)) / (2**5 * L**3)
        c4 = _syk4_c4(k, L)
    else:
        raise ValueError("closed forms exist only for q = 2 and q = 4")
    return ShortTimeCoefficients(c2 * J**2, c4 * J**4, q, k, L, J)


def predict_return_amplitude(coeffs: ShortTimeCoefficients, width, t):
    """Quartic prediction ``1 - c2 <w^-2> t^2/2 + c4 <w^-4> t^4/24`` in normalized time ``t``.

    ``width`` is the bandwidth used to normalize the Hamiltonian: a scalar, or
    the per-realization widths of an ensemble, in which case each power is
    averaged separately. Returns ``(value, valid)``; ``valid`` flags where the
    quartic term is below a tenth of the quadratic one.
    """
    w = np.asarray(width, dtype=float)
    if np.any(w <= 0):
        raise ValueError("bandwidth must be positive")
    inv2, inv4 = np.mean(w**-2.0), np.mean(w**-4.0)
    t = np.abs(np.asarray(t, dtype=float))
    quad = coeffs.c2 * inv2 * t**2 / 2
    quart = coeffs.c4 * inv4 * t**4 / 24
    valid = np.abs(quart) <= 0.1 * np.abs(quad)
    value = 1 - quad + quart
    if np.ndim(value) == 0:
        return float(value), bool(valid)
    return value, valid


# -- symbolic nested commutators in the Majorana basis ------------------------------


@lru_cache(maxsize=None)
def _tuple_tables(q: int, L: int):
    tuples = coupling_tuples(q, L)
    masks = np.array([sum(1 << (i - 1) for i in t) for t in tuples], dtype=np.int64)
    lowers = [tuple((1 << (i - 1)) - 1 for i in t) for t in tuples]
    return tuples, masks, lowers


def _leading_mask(k: int) -> int:
    return (1 << k) - 1


CONVENTIONS = ("hop-word", "index-set")


@lru_cache(maxsize=1 << 16)
def _word_of(mask: int) -> tuple[int, ...]:
    return tuple(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def nested_commutator_terms(q: int, k: int, n: int, L: int, target: int | None = None,
                            budget: int = 30_000_000, convention: str = "index-set"):
    """Expand ``[X, [X, ... [X, gamma^1...gamma^k]]]`` (``n`` times), ``X = sum_T J_T gamma_T``.

    Returns a dict mapping ``(sorted coupling indices, word)`` to
    ``(coefficient, mask)``. The coefficient is real and refers to the canonical
    (increasing) ordering of ``mask``; the overall ``i^{q/2}`` per commutator is
    left out and terms whose coefficients cancel are dropped.

    ``convention`` fixes what identifies a Majorana monomial. With ``index-set``
    the word is the sorted index set. With ``hop-word`` a product that keeps the
    operator size writes the incoming indices into the positions of the ones it
    removes, so reorderings of the same set stay distinct; size-changing products
    are canonicalized. With ``target`` only terms ending on that mask are kept at
    the last step. ``budget`` bounds the term-tuple pairs examined per step.
    """
    if n < 0 or not 1 <= k <= 2 * L:
        raise ValueError("need n >= 0 and 1 <= k <= 2L")
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    tuples, tmasks, lowers = _tuple_tables(q, L)
    ntup = len(tuples)
    hop = convention == "hop-word"
    start = _leading_mask(k)
    terms = {((), _word_of(start)): (1.0, start)}
    tid_of = {int(m): i for i, m in enumerate(tmasks)}
    for step in range(n):
        last = step == n - 1 and target is not None
        if not last and len(terms) * ntup > budget:
            raise BudgetExceeded(f"step {step + 1} would examine {len(terms) * ntup} term pairs (budget {budget})")
        new: dict = {}
        for (coupl, word), (c, mask) in terms.items():
            size = len(word)
            if last:
                need = mask ^ target
                cand = [tid_of[need]] if need in tid_of else []
            else:
                ov = np.bitwise_count(tmasks & mask)
                cand = np.nonzero((q * size - ov) & 1)[0].tolist()
            for tid in cand:
                T = int(tmasks[tid])
                overlap = (T & mask).bit_count()
                if (q * size - overlap) % 2 == 0:
                    continue
                inv = sum((mask & low).bit_count() for low in lowers[tid])
                val = c * (2.0 if inv % 2 == 0 else -2.0) * 0.5**overlap
                out = T ^ mask
                if hop and 2 * overlap == q:
                    incoming = iter(i for i in tuples[tid] if not mask >> (i - 1) & 1)
                    new_word = tuple(next(incoming) if T >> (i - 1) & 1 else i for i in word)
                else:
                    new_word = _word_of(out)
                lst = list(coupl)
                insort(lst, tid)
                key = (tuple(lst), new_word)
                prev = new.get(key)
                new[key] = (val, out) if prev is None else (prev[0] + val, out)
        terms = {key: v for key, v in new.items() if v[0] != 0.0}
    return terms


def count_commutator_terms(q: int, k: int, n: int, L: int, budget: int = 30_000_000,
                           convention: str = "hop-word") -> int:
    """Distinct (coupling monomial, Majorana monomial) terms in the ``n``-fold nested commutator."""
    return len(nested_commutator_terms(q, k, n, L, budget=budget, convention=convention))


def count_table(L: int = 5, qs=(2, 4), ks=(1, 2, 3), ns=(2, 3, 4), budget: int = 30_000_000,
                convention: str = "hop-word"):
    """Rows ``(q, k, n, count)``; ``count`` is ``None`` where the budget is exceeded."""
    rows = []
    for q in qs:
        for k in ks:
            for n in ns:
                try:
                    rows.append((q, k, n, count_commutator_terms(q, k, n, L, budget, convention)))
                except BudgetExceeded:
                    rows.append((q, k, n, None))
    return rows


def _phase_factor(q: int, n: int) -> int:
    # (i^{q/2})^n for even n
    return (-1) ** ((q * n // 4) % 2)


@dataclass(frozen=True)
class OracleEstimate:
    value: float | Fraction
    stderr: float
    mode: str
    samples: int = 0


def _double_factorial_odd(m: int) -> int:
    return math.prod(range(m - 1, 0, -2)) if m > 0 else 1


def brute_force_coefficient(q: int, k: int, L: int, mode: str = "wick-exact", samples: int = 100_000,
                            order: int = 2, J: float = 1.0, base_seed: int = 0,
                            chunk: int = 20_000) -> OracleEstimate:
    """Averaged nested-commutator coefficient of ``O^k``, without the closed forms.

    ``wick-exact`` averages the symbolic expansion with Gaussian moments
    (``E[J^m] = (m-1)!! var^{m/2}``) in exact rational arithmetic.
    ``monte-carlo`` draws ``samples`` coupling tensors with derived seeds and
    averages the ``O^k`` component of the same expansion.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if mode == "wick-exact" and L > 4:
        raise BudgetExceeded("wick-exact mode is limited to L <= 4")
    if mode == "monte-carlo" and L > 6:
        raise BudgetExceeded("monte-carlo mode is limited to L <= 6")
    target = _leading_mask(k)
    poly = nested_commutator_terms(q, k, order, L, target=target)
    phase = _phase_factor(q, order)
    if mode == "wick-exact":
        var = Fraction(math.factorial(q - 1), (2 * L) ** (q - 1)) * Fraction(J) ** 2
        total = Fraction(0)
        for (coupl, _), (c, _) in poly.items():
            mult: dict[int, int] = {}
            for tid in coupl:
                mult[tid] = mult.get(tid, 0) + 1
            if any(m % 2 for m in mult.values()):
                continue
            moment = Fraction(1)
            for m in mult.values():
                moment *= _double_factorial_odd(m) * var ** (m // 2)
            total += Fraction(c) * moment
        return OracleEstimate(phase * total, 0.0, mode)
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    from .ensemble import derive_seed

    keys = list(poly.items())
    acc = np.empty(samples)
    for start in range(0, samples, chunk):
        stop = min(samples, start + chunk)
        Js = np.stack([sample_couplings(q, L, J, derive_seed(base_seed, s)).values for s in range(start, stop)])
        vals = np.zeros(stop - start)
        for (coupl, _), (c, _) in keys:
            vals += c * np.prod(Js[:, list(coupl)], axis=1)
        acc[start:stop] = phase * vals
    return OracleEstimate(float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(samples)), mode, samples)
