"""Disorder-averaged correlators and the quantities derived from them.

All averages follow the overline placement of the connected correlator:
each one- and two-point function is averaged over realizations first and the
product of averages is subtracted afterwards. Standard errors of such derived
quantities use the delta method on the per-realization records.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mapping import representative_sites
from .stats import Moments

__all__ = [
    "EnsembleSeries",
    "PeakMatrix",
    "CorrelatorData",
    "ObservableError",
    "chi_pair",
    "chi_total",
    "peak_matrix",
    "refined_max",
    "return_amplitude",
    "time_to_half",
    "decay_rate",
    "saturation_curve",
    "saturating_k_rel",
    "chi_1L_diagnostic",
    "FitResult",
    "fit_peak_scaling",
    "SATURATION_THRESHOLD",
]

SATURATION_THRESHOLD = 0.95


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleSeries:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    label: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ObservableError("an ensemble series needs at least one realization")
        if np.any(self.stderr < 0) or not np.all(np.isfinite(self.mean)):
            raise ObservableError("series must have finite means and non-negative errors")


@dataclass(frozen=True)
class PeakMatrix:
    """Peak heights on the strict upper triangle; ``values[i-1, j-1]`` for ``i < j``, NaN elsewhere."""

    values: np.ndarray
    axis: str
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.values.shape[0]

    def pairs(self):
        L = self.L
        for i in range(1, L + 1):
            for j in range(i + 1, L + 1):
                yield i, j, float(self.values[i - 1, j - 1])

    def upper(self) -> np.ndarray:
        return self.values[np.triu_indices(self.L, 1)]

    def argmax(self) -> tuple[int, int]:
        flat = np.nanargmax(self.values)
        i, j = np.unravel_index(flat, self.values.shape)
        return int(i) + 1, int(j) + 1


@dataclass
class CorrelatorData:
    """Per-realization one- and two-point spin functions for one ensemble.

    ``site`` has shape ``(n, T, L)`` and ``pair`` ``(n, T, L, L)``; ``moments``
    holds the merged means of the same arrays.
    """

    times: np.ndarray
    axis: str
    L: int
    q: int
    flavor: str
    site: np.ndarray
    pair: np.ndarray
    moments: Moments | None = None
    bandwidths: np.ndarray | None = None

    def __post_init__(self):
        if self.site.shape[0] < 1:
            raise ObservableError("empty ensemble")

    @property
    def n(self) -> int:
        return self.site.shape[0]

    @property
    def site_mean(self) -> np.ndarray:
        if self.moments is not None:
            return self.moments.mean["site"]
        return self.site.mean(axis=0)

    @property
    def pair_mean(self) -> np.ndarray:
        if self.moments is not None:
            return self.moments.mean["pair"]
        return self.pair.mean(axis=0)

    def label(self, **extra) -> dict:
        return {"axis": self.axis, "L": self.L, "q": self.q, "flavor": self.flavor, **extra}


def _stderr_of(influence: np.ndarray) -> np.ndarray:
    n = influence.shape[0]
    if n < 2:
        return np.zeros(influence.shape[1:])
    return influence.std(axis=0, ddof=1) / np.sqrt(n)


def _chi_all_pairs(data: CorrelatorData):
    """Mean and delta-method stderr of every ``chi_ij``, shape ``(T, L, L)``."""
    ms, mp = data.site_mean, data.pair_mean
    chi = mp - ms[:, :, None] * ms[:, None, :]
    infl = data.pair - ms[None, :, None, :] * data.site[:, :, :, None] - ms[None, :, :, None] * data.site[:, :, None, :]
    return chi, _stderr_of(infl)


def chi_pair(i: int, j: int, data: CorrelatorData) -> EnsembleSeries:
    if not 1 <= i < j <= data.L:
        raise ObservableError(f"need 1 <= i < j <= L, got ({i}, {j})")
    a, b = i - 1, j - 1
    ms, mp = data.site_mean, data.pair_mean
    mean = mp[:, a, b] - ms[:, a] * ms[:, b]
    infl = data.pair[:, :, a, b] - ms[None, :, b] * data.site[:, :, a] - ms[None, :, a] * data.site[:, :, b]
    return EnsembleSeries(data.times, mean, _stderr_of(infl), data.n, data.label(observable="chi_pair", i=i, j=j))


def chi_total(data: CorrelatorData) -> EnsembleSeries:
    ms, mp = data.site_mean, data.pair_mean
    upper = np.triu_indices(data.L, 1)
    mean = mp[:, upper[0], upper[1]].sum(axis=1) - (ms[:, upper[0]] * ms[:, upper[1]]).sum(axis=1)
    total = ms.sum(axis=1)
    infl = data.pair[:, :, upper[0], upper[1]].sum(axis=2) - (data.site * (total[:, None] - ms)[None]).sum(axis=2)
    return EnsembleSeries(data.times, mean, _stderr_of(infl), data.n, data.label(observable="chi_total"))


def refined_max(times: np.ndarray, y: np.ndarray) -> tuple[float, float, int]:
    """Maximum with a three-point parabolic refinement around the grid argmax.

    Returns ``(value, time, grid_index)``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ObservableError("non-finite series")
    m = int(np.argmax(y))
    if 0 < m < len(y) - 1:
        y0, y1, y2 = y[m - 1], y[m], y[m + 1]
        curv = y0 - 2 * y1 + y2
        if curv < 0:
            shift = 0.5 * (y0 - y2) / curv
            dt = times[m + 1] - times[m]
            return float(y1 - 0.25 * (y0 - y2) * shift), float(times[m] + shift * dt), m
    return float(y[m]), float(times[m]), m


def peak_matrix(data: CorrelatorData) -> PeakMatrix:
    chi, _ = _chi_all_pairs(data)
    L = data.L
    values = np.full((L, L), np.nan)
    for a in range(L):
        for b in range(a + 1, L):
            values[a, b] = refined_max(data.times, chi[:, a, b])[0]
    return PeakMatrix(values, data.axis, {"q": data.q, "flavor": data.flavor, "L": L, "n": data.n})


def return_amplitude(k: int, data: CorrelatorData) -> EnsembleSeries:
    """Averaged ``<O^k(t)>`` for the size-``k`` x-string, normalized to 1 at ``t = 0``."""
    if data.axis != "x":
        raise ObservableError("return amplitudes are defined on the x-polarized ground state")
    sites = representative_sites(k, data.L)
    if len(sites) == 1:
        raw = data.site[:, :, sites[0] - 1]
        mean = data.site_mean[:, sites[0] - 1]
    else:
        raw = data.pair[:, :, sites[0] - 1, sites[1] - 1]
        mean = data.pair_mean[:, sites[0] - 1, sites[1] - 1]
    norm = mean[0]
    if abs(norm) < 1e-12:
        raise ObservableError(f"t=0 expectation of the size-{k} representative vanishes; cannot normalize")
    return EnsembleSeries(data.times, mean / norm, _stderr_of(raw) / abs(norm), data.n,
                          data.label(observable="return_amplitude", k=k))


def time_to_half(series: EnsembleSeries, level: float = 0.5) -> float:
    """First time the mean crosses ``level``, by linear interpolation; ``inf`` if never."""
    y, t = series.mean, series.times
    below = np.nonzero(y <= level)[0]
    if len(below) == 0:
        return float("inf")
    m = int(below[0])
    if m == 0:
        return float(t[0])
    return float(t[m - 1] + (y[m - 1] - level) / (y[m - 1] - y[m]) * (t[m] - t[m - 1]))


def decay_rate(series: EnsembleSeries) -> EnsembleSeries:
    """``|d/dt mean|``: central differences inside, one-sided at the ends."""
    t, y, se = series.times, series.mean, series.stderr
    if len(t) < 3:
        raise ObservableError("decay rate needs at least 3 grid points")
    if np.any(np.diff(t) <= 0):
        raise ObservableError("degenerate time grid")
    rate = np.abs(np.gradient(y, t))
    err = np.empty_like(se)
    err[1:-1] = np.sqrt(se[2:] ** 2 + se[:-2] ** 2) / (t[2:] - t[:-2])
    err[0] = np.hypot(se[0], se[1]) / (t[1] - t[0])
    err[-1] = np.hypot(se[-1], se[-2]) / (t[-1] - t[-2])
    return EnsembleSeries(t, rate, err, series.n, {**series.label, "observable": "decay_rate"})


def saturation_curve(data: CorrelatorData, ks: Sequence[int] | None = None) -> dict[float, float]:
    """``R(k/L) = max_t D_k / max_t D_L`` for ``k`` in ``ks`` (default ``1..L``)."""
    L = data.L
    ks = list(range(1, L + 1)) if ks is None else sorted(set(ks) | {L})
    peak = {}
    for k in ks:
        d = decay_rate(return_amplitude(k, data))
        peak[k] = refined_max(d.times, d.mean)[0]
    if peak[L] <= 0:
        raise ObservableError("maximum decay rate at k = L vanishes")
    return {k / L: peak[k] / peak[L] for k in ks}


def saturating_k_rel(curve: dict[float, float], threshold: float = SATURATION_THRESHOLD) -> float:
    """Smallest ``k_rel`` with ``R >= threshold``."""
    return min(k for k, r in curve.items() if r >= threshold)


def chi_1L_diagnostic(data: CorrelatorData, late_fraction: float = 0.25) -> dict:
    """Peak of ``chi_{1L}^x`` against the RMS of its final ``late_fraction`` of the grid."""
    series = chi_pair(1, data.L, data)
    n_late = int(round(late_fraction * len(series.times)))
    if len(series.times) < 8 or n_late < 2:
        raise ObservableError("grid too short to define a late window")
    peak = refined_max(series.times, series.mean)[0]
    late = float(np.sqrt(np.mean(series.mean[-n_late:] ** 2)))
    return {"series": series, "peak_height": peak, "late_noise_amplitude": late,
            "ratio": peak / late if late > 0 else float("inf")}


@dataclass(frozen=True)
class FitResult:
    terms: tuple[str, ...]
    coefficients: np.ndarray
    stderr: np.ndarray
    residual_norm: float

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def coefficient_stderr(self, term: str) -> float:
        return float(self.stderr[self.terms.index(term)])


_MODELS = {"x": ("L^2", "1"), "z": ("L", "1"), "quadratic": ("L^2", "L", "1")}


def fit_peak_scaling(Ls: Sequence[float], peaks: Sequence[float], axis: str = "x",
                     sigma: Sequence[float] | None = None) -> FitResult:
    """Least-squares fit of peak heights against ``L``.

    ``axis='x'`` fits ``a L^2 + b``, ``axis='z'`` fits ``c L + d`` and
    ``axis='quadratic'`` the full ``u L^2 + v L + w``. With ``sigma`` the fit
    is weighted; coefficient errors are scaled by the reduced chi-square when
    there are spare degrees of freedom.
    """
    terms = _MODELS[axis]
    L = np.asarray(Ls, dtype=float)
    y = np.asarray(peaks, dtype=float)
    if len(np.unique(L)) < 4:
        raise ObservableError("peak scaling fits need at least 4 distinct L values")
    cols = {"L^2": L**2, "L": L, "1": np.ones_like(L)}
    X = np.column_stack([cols[t] for t in terms])
    w = np.ones_like(y) if sigma is None else 1.0 / np.maximum(np.asarray(sigma, dtype=float), 1e-300)
    Xw, yw = X * w[:, None], y * w
    if np.linalg.matrix_rank(Xw) < len(terms):
        raise ObservableError("rank-deficient design")
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ coef
    dof = len(y) - len(terms)
    cov = np.linalg.inv(Xw.T @ Xw)
    if dof > 0:
        scale = float(resid @ resid) / dof
        cov = cov * (scale if sigma is None else max(scale, 1.0))
    return FitResult(terms, coef, np.sqrt(np.diag(cov)), float(np.linalg.norm(y - X @ coef)))
