"""Config files, CSV emission and run manifests."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .ensemble import ConfigError, RunConfig
from .evolution import TimeGrid
from .observables import EnsembleSeries, PeakMatrix

__all__ = [
    "parse_config",
    "config_from_dict",
    "dump_config",
    "write_series_csv",
    "read_series_csv",
    "write_peak_csv",
    "write_json",
    "Manifest",
    "SERIES_HEADER",
    "PEAK_HEADER",
]

SERIES_HEADER = ("t", "mean", "stderr", "n")
PEAK_HEADER = ("i", "j", "P")
REQUIRED = ("L", "q", "axis", "n_realizations", "base_seed")
OPTIONAL = ("flavor", "omega", "J", "grid", "t_max", "n_steps", "observables", "output_dir", "method")


def config_from_dict(raw: dict) -> RunConfig:
    """Validated :class:`RunConfig` from a plain mapping; unknown keys are rejected.

    The time grid may be given as a nested ``grid: {t_max, n_steps}`` mapping or
    as top-level ``t_max`` / ``n_steps``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = sorted(set(raw) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"config: missing required keys {missing}")
    d = dict(raw)
    grid = dict(d.pop("grid", None) or {})
    bad_grid = sorted(set(grid) - {"t_max", "n_steps"})
    if bad_grid:
        raise ConfigError(f"grid: unknown keys {bad_grid}")
    for key in ("t_max", "n_steps"):
        if key in d:
            grid[key] = d.pop(key)
    try:
        d["grid"] = TimeGrid(**grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    if "observables" in d:
        obs = {"pairs": "all", "sizes": "all", "diagnostics": []}
        obs.update(d["observables"] or {})
        d["observables"] = obs
    return RunConfig(**d)


def parse_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(raw)


def dump_config(cfg: RunConfig, path) -> Path:
    d = cfg.to_dict()
    d["grid"] = {"t_max": cfg.grid.t_max, "n_steps": cfg.grid.n_steps}
    path = Path(path)
    path.write_text(yaml.safe_dump(d, sort_keys=True))
    return path


def write_series_csv(series: EnsembleSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_HEADER)
        for t, m, s in zip(series.times, series.mean, series.stderr):
            w.writerow((repr(float(t)), repr(float(m)), repr(float(s)), series.n))
    return path


def read_series_csv(path) -> EnsembleSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SERIES_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    a = np.array([[float(x) for x in r] for r in rows[1:]])
    return EnsembleSeries(a[:, 0], a[:, 1], a[:, 2], int(a[0, 3]))


def write_peak_csv(pm: PeakMatrix, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PEAK_HEADER)
        for i, j, p in pm.pairs():
            w.writerow((i, j, repr(p)))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))
    return path


@dataclass
class Manifest:
    """Index of the files one command emitted, with enough metadata to rebuild them."""

    command: str
    config_hash: str | None = None
    config: dict | None = None
    outputs: dict = field(default_factory=dict)
    realizations: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float | None = None
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def add(self, name: str, path) -> Path:
        if name in self.outputs:
            raise ValueError(f"output {name!r} already recorded")
        self.outputs[name] = str(path)
        return Path(path)

    def save(self, out_dir) -> Path:
        self.finished = time.time()
        payload = {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "outputs": self.outputs,
            "realizations": self.realizations,
            "wall_clock": {"started": self.started, "finished": self.finished,
                           "seconds": round(self.finished - self.started, 3)},
            "version": self.version,
            **({"extra": self.extra} if self.extra else {}),
        }
        return write_json(payload, Path(out_dir) / f"manifest_{self.command}.json")
