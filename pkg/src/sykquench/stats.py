"""Streaming ensemble moments with an exactly commutative merge."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Moments", "merge", "MergeError"]


class MergeError(ValueError):
    pass


@dataclass
class Moments:
    """Count, mean and sum of squared deviations for a set of named arrays.

    ``label`` identifies the observable set (a config hash); ``times`` is the
    shared grid. An instance with ``n == 0`` is the empty aggregate.
    """

    label: str
    times: np.ndarray
    n: int = 0
    mean: dict[str, np.ndarray] = field(default_factory=dict)
    m2: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def empty(cls, label: str, times) -> "Moments":
        return cls(label, np.asarray(times, dtype=float))

    @classmethod
    def single(cls, label: str, times, arrays: dict[str, np.ndarray]) -> "Moments":
        mean = {k: np.array(v, dtype=float) for k, v in arrays.items()}
        return cls(label, np.asarray(times, dtype=float), 1, mean, {k: np.zeros_like(v) for k, v in mean.items()})

    def variance(self, key: str) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean[key])
        return self.m2[key] / (self.n - 1)

    def stderr(self, key: str) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean[key])
        return np.sqrt(self.variance(key) / self.n)


def merge(a: Moments, b: Moments) -> Moments:
    """Combine two partial aggregates (pairwise mean/variance update).

    The mean is formed as ``(n_a m_a + n_b m_b) / n`` and the correction term
    uses ``delta**2``, so ``merge(a, b)`` and ``merge(b, a)`` agree bit for bit.
    """
    if a.label != b.label:
        raise MergeError(f"label mismatch: {a.label!r} vs {b.label!r}")
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise MergeError("time grids differ")
    if a.n == 0:
        return Moments(b.label, b.times, b.n, dict(b.mean), dict(b.m2))
    if b.n == 0:
        return Moments(a.label, a.times, a.n, dict(a.mean), dict(a.m2))
    if set(a.mean) != set(b.mean):
        raise MergeError("aggregates carry different observables")
    n = a.n + b.n
    mean, m2 = {}, {}
    for key in a.mean:
        delta = b.mean[key] - a.mean[key]
        mean[key] = (a.n * a.mean[key] + b.n * b.mean[key]) / n
        m2[key] = a.m2[key] + b.m2[key] + delta * delta * (a.n * b.n / n)
    return Moments(a.label, a.times, n, mean, m2)
