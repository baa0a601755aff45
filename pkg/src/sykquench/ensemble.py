"""Disorder-ensemble orchestration: seeds, per-realization records, resume, aggregation."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evolution import Propagator, PropagatorError, TimeGrid, ground_state, spin_correlators
from .hamiltonians import (
    DENSE_MAX_L, RNG_NAME, EigensolverError, HermiticityError, bandwidth, build_syk, sample_couplings,
)
from .mapping import FLAVORS
from .observables import CorrelatorData
from .stats import Moments, merge

__all__ = [
    "ConfigError",
    "EnsembleIOError",
    "RunConfig",
    "RealizationRecord",
    "EnsembleResult",
    "derive_seed",
    "derive_seeds",
    "simulate_realization",
    "run_ensemble",
    "load_ensemble",
    "realization_statuses",
    "RECORD_VERSION",
]

log = logging.getLogger(__name__)

RECORD_VERSION = 1
_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    pass


class EnsembleIOError(OSError):
    def __init__(self, index: int, exc: Exception):
        super().__init__(f"realization {index}: {exc}")
        self.index = index


def _splitmix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """64-bit seed of realization ``index``; a bijective mix of ``base + (index+1) * gamma``."""
    if index < 0:
        raise ValueError("realization index must be non-negative")
    return _splitmix64((base_seed + (index + 1) * _GAMMA) & _MASK64)


def derive_seeds(base_seed: int, indices) -> np.ndarray:
    """Vectorized :func:`derive_seed` (uint64 arithmetic wraps modulo 2**64)."""
    z = np.uint64(base_seed & _MASK64) + (np.asarray(indices, dtype=np.uint64) + np.uint64(1)) * np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass
class RunConfig:
    L: int
    q: int
    axis: str
    n_realizations: int
    base_seed: int
    flavor: str = "fermionic"
    omega: float = 1.0
    J: float = 1.0
    grid: TimeGrid = field(default_factory=TimeGrid)
    observables: dict = field(default_factory=lambda: {"pairs": "all", "sizes": "all", "diagnostics": []})
    output_dir: str = "runs/default"
    method: str = "auto"

    def __post_init__(self):
        if isinstance(self.grid, dict):
            self.grid = TimeGrid(**self.grid)
        self.validate()

    def validate(self):
        def bad(name, why):
            raise ConfigError(f"{name}: {why}")

        if not isinstance(self.L, int) or self.L < 2:
            bad("L", "must be an integer >= 2")
        if not isinstance(self.q, int) or self.q % 2 or not 2 <= self.q <= 2 * self.L:
            bad("q", f"must be even with 2 <= q <= 2L, got {self.q}")
        if self.axis not in ("x", "z"):
            bad("axis", "must be 'x' or 'z'")
        if self.flavor not in FLAVORS:
            bad("flavor", f"must be one of {FLAVORS}")
        if not isinstance(self.n_realizations, int) or self.n_realizations < 1:
            bad("n_realizations", "must be >= 1")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            bad("base_seed", "must be a non-negative integer")
        if not self.omega > 0:
            bad("omega", "must be positive")
        if self.method not in ("auto", "dense", "krylov"):
            bad("method", "must be auto, dense or krylov")
        obs = self.observables
        unknown = set(obs) - {"pairs", "sizes", "diagnostics"}
        if unknown:
            bad("observables", f"unknown keys {sorted(unknown)}")
        pairs = obs.get("pairs", "all")
        if pairs != "all":
            for p in pairs:
                if len(p) != 2 or not 1 <= p[0] < p[1] <= self.L:
                    bad("observables.pairs", f"invalid pair {p}")
        sizes = obs.get("sizes", "all")
        if sizes != "all" and sizes:
            if self.axis != "x":
                bad("observables.sizes", "return amplitudes need axis x")
            for k in sizes:
                if not 1 <= k <= 2 * self.L - 1:
                    bad("observables.sizes", f"size {k} outside 1..2L-1")
        for d in obs.get("diagnostics", []):
            if d not in ("chi1L",):
                bad("observables.diagnostics", f"unknown diagnostic {d!r}")
            if d == "chi1L" and self.axis != "x":
                bad("observables.diagnostics", "chi1L needs axis x")

    def physics_dict(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        return d

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass
class RealizationRecord:
    index: int
    seed: int
    site: np.ndarray
    pair: np.ndarray
    bandwidth: float
    norm_drift: float
    energy_drift: float
    complete: bool = True

    def save(self, path: Path):
        tmp = path.with_name(path.name + ".tmp.npz")
        np.savez(tmp, version=RECORD_VERSION, index=self.index, seed=np.uint64(self.seed), site=self.site,
                 pair=self.pair, bandwidth=self.bandwidth, norm_drift=self.norm_drift,
                 energy_drift=self.energy_drift)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path) -> "RealizationRecord":
        with np.load(path) as f:
            if int(f["version"]) != RECORD_VERSION:
                raise ValueError(f"{path}: unsupported record version {int(f['version'])}")
            return cls(int(f["index"]), int(f["seed"]), f["site"], f["pair"], float(f["bandwidth"]),
                       float(f["norm_drift"]), float(f["energy_drift"]))


def simulate_realization(cfg: RunConfig, index: int) -> RealizationRecord:
    """Sample, normalize, quench and measure one disorder realization."""
    seed = derive_seed(cfg.base_seed, index)
    couplings = sample_couplings(cfg.q, cfg.L, cfg.J, seed)
    raw = build_syk(couplings, cfg.flavor)
    method = cfg.method
    if method == "auto":
        method = "dense" if cfg.L <= DENSE_MAX_L else "krylov"
    if method == "dense":
        prop = Propagator(raw, "dense")
        width = float(prop.raw_eigenvalues[-1] - prop.raw_eigenvalues[0])
        prop.eigenvalues = prop.raw_eigenvalues / width
    else:
        width = bandwidth(raw, method="lanczos")
        prop = Propagator(raw, "krylov", scale=width)
    if not width > 0:
        raise EigensolverError("sampled Hamiltonian has zero bandwidth")
    psi0 = ground_state(cfg.axis, cfg.omega, cfg.L)
    states, drift = prop.trajectory(psi0, cfg.times)
    probe = np.unique(np.linspace(0, len(states) - 1, 5).astype(int))
    energies = np.array([np.vdot(states[n], prop.matvec(states[n])).real for n in probe])
    # drift measured in units of the normalized bandwidth (= 1)
    energy_drift = float(np.max(np.abs(energies - energies[0])))
    site, pair = spin_correlators(states, cfg.axis)
    return RealizationRecord(index, seed, site, pair, width, drift, energy_drift)


def _record_path(out: Path, index: int) -> Path:
    return out / "records" / f"r{index:06d}.npz"


def _failed_path(out: Path, index: int) -> Path:
    return out / "records" / f"r{index:06d}.failed.json"


def _worker(cfg_dict: dict, index: int, out: str) -> dict:
    cfg = RunConfig(**cfg_dict)
    t0 = time.time()
    try:
        rec = simulate_realization(cfg, index)
    except (PropagatorError, EigensolverError, HermiticityError) as exc:
        info = {"index": index, "seed": derive_seed(cfg.base_seed, index), "status": "failed", "error": repr(exc)}
        _failed_path(Path(out), index).write_text(json.dumps(info))
        return info
    try:
        rec.save(_record_path(Path(out), index))
    except OSError as exc:
        return {"index": index, "status": "io_error", "error": repr(exc)}
    return {"index": index, "seed": rec.seed, "status": "ok", "wall": round(time.time() - t0, 3),
            "norm_drift": rec.norm_drift, "energy_drift": rec.energy_drift}


@dataclass
class EnsembleResult:
    config: RunConfig
    moments: Moments
    data: CorrelatorData | None
    n_failed: int
    complete: bool
    out_dir: Path
    statuses: list = field(default_factory=list)


def _default_workers() -> int:
    env = os.environ.get("SYKQ_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _write_run_header(cfg: RunConfig, out: Path):
    header = out / "run.json"
    payload = {"config": cfg.physics_dict(), "config_hash": cfg.config_hash, "version": __version__,
               "rng": RNG_NAME, "seed_derivation": "splitmix64(base_seed + (index+1)*0x9E3779B97F4A7C15)"}
    if header.exists():
        old = json.loads(header.read_text())
        if old.get("config_hash") != cfg.config_hash:
            raise ConfigError(f"{out} holds a run with a different configuration ({old.get('config_hash')})")
        return
    header.write_text(json.dumps(payload, indent=2))


def run_ensemble(cfg: RunConfig, workers: int | None = None, limit: int | None = None) -> EnsembleResult:
    """Run (or resume) every realization of ``cfg`` and aggregate.

    Completed records on disk are reused, so an interrupted run resumes where
    it stopped. ``limit`` caps the number of new realizations processed in this
    call. Aggregation always folds records in index order, which makes the
    result independent of worker count and completion order.
    """
    out = Path(cfg.output_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    _write_run_header(cfg, out)
    pending = [i for i in range(cfg.n_realizations)
               if not _record_path(out, i).exists() and not _failed_path(out, i).exists()]
    if limit is not None:
        pending = pending[:limit]
    workers = _default_workers() if workers is None else workers
    statuses = []
    status_log = out / "status.jsonl"

    def note(info):
        statuses.append(info)
        with open(status_log, "a") as fh:
            fh.write(json.dumps(info) + "\n")
        if info["status"] == "io_error":
            raise EnsembleIOError(info["index"], OSError(info["error"]))
        if info["status"] == "failed":
            log.warning("realization %d excluded: %s", info["index"], info["error"])

    cfg_dict = cfg.to_dict()
    if workers <= 1 or len(pending) <= 1:
        for i in pending:
            note(_worker(cfg_dict, i, str(out)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker, cfg_dict, i, str(out)) for i in pending]
            for fut in as_completed(futures):
                note(fut.result())
    return load_ensemble(cfg, statuses)


def load_ensemble(cfg: RunConfig, statuses: list | None = None) -> EnsembleResult:
    """Aggregate whatever records of ``cfg`` exist on disk."""
    out = Path(cfg.output_dir)
    moments = Moments.empty(cfg.config_hash, cfg.times)
    sites, pairs, widths = [], [], []
    n_failed = 0
    for i in range(cfg.n_realizations):
        path = _record_path(out, i)
        if not path.exists():
            n_failed += _failed_path(out, i).exists()
            continue
        try:
            rec = RealizationRecord.load(path)
        except (OSError, ValueError) as exc:
            raise EnsembleIOError(i, exc) from exc
        moments = merge(moments, Moments.single(cfg.config_hash, cfg.times, {"site": rec.site, "pair": rec.pair}))
        sites.append(rec.site)
        pairs.append(rec.pair)
        widths.append(rec.bandwidth)
    complete = moments.n + n_failed == cfg.n_realizations
    if n_failed:
        log.warning("%d of %d realizations failed and were excluded", n_failed, cfg.n_realizations)
    data = None
    if moments.n:
        data = CorrelatorData(cfg.times, cfg.axis, cfg.L, cfg.q, cfg.flavor, np.stack(sites), np.stack(pairs),
                              moments, np.array(widths))
    return EnsembleResult(cfg, moments, data, n_failed, complete, out, statuses or [])


def realization_statuses(cfg: RunConfig) -> list[dict]:
    """``{index, seed, status}`` for every realization, read from the records on disk."""
    out = Path(cfg.output_dir)
    rows = []
    for i in range(cfg.n_realizations):
        if _record_path(out, i).exists():
            status = "ok"
        elif _failed_path(out, i).exists():
            status = "failed"
        else:
            status = "missing"
        rows.append({"index": i, "seed": derive_seed(cfg.base_seed, i), "status": status})
    return rows
