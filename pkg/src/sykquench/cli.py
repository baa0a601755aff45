"""Command-line entry point: ``sykquench <subcommand> [options]``.

Every pipeline subcommand runs (or resumes) the ensemble described by the
config and flags, then writes its CSV/JSON products and a manifest under the
output directory. Exit codes: 0 success, 1 pipeline error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import ConfigError, EnsembleIOError, RunConfig, realization_statuses, run_ensemble
from .io import Manifest, config_from_dict, parse_config, write_json, write_peak_csv, write_series_csv
from .observables import (
    ObservableError, chi_1L_diagnostic, chi_pair, chi_total, decay_rate, fit_peak_scaling, peak_matrix, refined_max,
    return_amplitude, saturating_k_rel, saturation_curve, time_to_half,
)
from .oracle import (
    BudgetExceeded, CONVENTIONS, coefficients, count_commutator_terms, predict_return_amplitude,
)

log = logging.getLogger("sykquench")

SUBCOMMANDS = ("simulate", "susceptibility", "peaks", "return-amplitude", "decay-rate", "saturation", "chi1L",
               "oracle", "count-terms", "fit-scaling")


class UsageError(Exception):
    pass


# -- argument parsing ---------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out-dir", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="worker processes (default: $SYKQ_THREADS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def _run_options(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--L", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--axis", choices=("x", "z"))
    p.add_argument("--flavor", choices=("fermionic", "bosonic"))
    p.add_argument("--n-realizations", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--J", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--method", choices=("auto", "dense", "krylov"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sykquench", description="Quench dynamics of spin chains with SYK couplings.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser("simulate", help="run or resume an ensemble and write the total susceptibility")
    _run_options(p)
    _common(p)

    p = sub.add_parser("susceptibility", help="chi^a(t), or chi_ij^a(t) with --pair")
    _run_options(p)
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"))
    _common(p)

    p = sub.add_parser("peaks", help="peak heights P_ij of every chi_ij")
    _run_options(p)
    _common(p)

    for name, what in (("return-amplitude", "normalized return amplitudes"), ("decay-rate", "|d/dt| of them")):
        p = sub.add_parser(name, help=what)
        _run_options(p)
        p.add_argument("--k", type=int, nargs="+", help="operator sizes (default 1..2L-1)")
        _common(p)

    p = sub.add_parser("saturation", help="decay-rate saturation curve R(k/L)")
    _run_options(p)
    p.add_argument("--threshold", type=float, default=0.95)
    _common(p)

    p = sub.add_parser("chi1L", help="chi_1L^x peak versus late-time noise")
    _run_options(p)
    _common(p)

    p = sub.add_parser("oracle", help="compare return amplitudes with the quartic short-time prediction")
    _run_options(p)
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--max-drop", type=float, default=0.05, help="window: predicted drop at most this")
    p.add_argument("--tol", type=float, help="allowed relative deviation (default 0.01 for q=2, 0.02 otherwise)")
    _common(p)

    p = sub.add_parser("count-terms", help="nested-commutator term counts")
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--q", type=int, nargs="+", default=[2, 4])
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--n", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--budget", type=int, default=30_000_000)
    p.add_argument("--convention", choices=CONVENTIONS, default="hop-word")
    p.add_argument("--csv", help="also write the table to this file")
    _common(p)

    p = sub.add_parser("fit-scaling", help="fit chi_max against L over several ensembles")
    _run_options(p)
    p.add_argument("--Ls", type=int, nargs="+", required=True)
    p.add_argument("--model", choices=("auto", "x", "z", "quadratic"), default="auto")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
        raw = cfg.to_dict()
        raw["grid"] = {"t_max": cfg.grid.t_max, "n_steps": cfg.grid.n_steps}
    overrides = {"L": args.L, "q": args.q, "axis": args.axis, "flavor": args.flavor,
                 "n_realizations": args.n_realizations, "omega": args.omega, "J": args.J,
                 "method": args.method, "base_seed": args.seed, "output_dir": args.out_dir}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    grid = dict(raw.get("grid") or {})
    if args.t_max is not None:
        grid["t_max"] = args.t_max
    if args.n_steps is not None:
        grid["n_steps"] = args.n_steps
    if grid:
        raw["grid"] = grid
    if "base_seed" not in raw:
        raw["base_seed"] = 0
    if "output_dir" not in raw:
        raw["output_dir"] = "runs/default"
    return config_from_dict(raw)


# -- pipelines ----------------------------------------------------------------------


def _run(cfg: RunConfig, args, manifest: Manifest):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_ensemble(cfg, workers=args.threads)
    manifest.config_hash = cfg.config_hash
    manifest.config = cfg.physics_dict()
    manifest.realizations = realization_statuses(cfg)
    if res.data is None:
        raise ObservableError("no realization completed")
    if res.n_failed:
        log.warning("%d realizations failed and were excluded", res.n_failed)
    return res


def _products(cfg: RunConfig, manifest: Manifest) -> Path:
    """Directory for one command's files, so each file belongs to exactly one manifest."""
    d = Path(cfg.output_dir) / manifest.command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sizes(args, cfg):
    return args.k if args.k else list(range(1, 2 * cfg.L))


def cmd_simulate(args, cfg, manifest):
    res = _run(cfg, args, manifest)
    out = _products(cfg, manifest)
    manifest.add("chi_total", write_series_csv(chi_total(res.data), out / f"chi_{cfg.axis}.csv"))
    print(f"{res.moments.n} realizations aggregated ({res.n_failed} failed) in {cfg.output_dir}")


def cmd_susceptibility(args, cfg, manifest):
    res = _run(cfg, args, manifest)
    out = _products(cfg, manifest)
    if args.pair:
        i, j = args.pair
        series = chi_pair(i, j, res.data)
        path = out / f"chi_{cfg.axis}_{i}_{j}.csv"
    else:
        series = chi_total(res.data)
        path = out / f"chi_{cfg.axis}.csv"
    manifest.add("susceptibility", write_series_csv(series, path))
    value, t, _ = refined_max(series.times, series.mean)
    print(f"max {value:.6g} at t = {t:.4g}")


def cmd_peaks(args, cfg, manifest):
    res = _run(cfg, args, manifest)
    pm = peak_matrix(res.data)
    manifest.add("peaks", write_peak_csv(pm, _products(cfg, manifest) / f"peaks_{cfg.axis}.csv"))
    u = pm.upper()
    print(f"argmax {pm.argmax()}, mean {u.mean():.6g}, cv {u.std() / u.mean():.4g}")


def _amplitudes(args, cfg, manifest, rate: bool):
    if cfg.axis != "x":
        raise UsageError("return amplitudes need --axis x")
    res = _run(cfg, args, manifest)
    out = _products(cfg, manifest)
    summary = {}
    for k in _sizes(args, cfg):
        s = return_amplitude(k, res.data)
        if rate:
            d = decay_rate(s)
            manifest.add(f"decay_rate_k{k}", write_series_csv(d, out / f"decay_rate_k{k}.csv"))
            summary[k] = refined_max(d.times, d.mean)[0]
        else:
            manifest.add(f"return_amplitude_k{k}", write_series_csv(s, out / f"return_amplitude_k{k}.csv"))
            summary[k] = time_to_half(s)
    key = "max_decay_rate" if rate else "time_to_half"
    manifest.add(key, write_json({"k": list(summary), key: list(summary.values())}, out / f"{key}.json"))
    for k, v in summary.items():
        print(f"k={k} {key}={v:.6g}")


def cmd_return_amplitude(args, cfg, manifest):
    _amplitudes(args, cfg, manifest, rate=False)


def cmd_decay_rate(args, cfg, manifest):
    _amplitudes(args, cfg, manifest, rate=True)


def cmd_saturation(args, cfg, manifest):
    if cfg.axis != "x":
        raise UsageError("saturation needs --axis x")
    res = _run(cfg, args, manifest)
    curve = saturation_curve(res.data)
    path = _products(cfg, manifest) / "saturation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("k_rel", "R"))
        for k, r in curve.items():
            w.writerow((repr(k), repr(r)))
    manifest.add("saturation", path)
    print(f"smallest k/L with R >= {args.threshold}: {saturating_k_rel(curve, args.threshold):.4g}")


def cmd_chi1L(args, cfg, manifest):
    if cfg.axis != "x":
        raise UsageError("chi1L needs --axis x")
    res = _run(cfg, args, manifest)
    out = _products(cfg, manifest)
    diag = chi_1L_diagnostic(res.data)
    manifest.add("chi1L", write_series_csv(diag["series"], out / "chi1L.csv"))
    stats = {k: v for k, v in diag.items() if k != "series"}
    manifest.add("chi1L_summary", write_json(stats, out / "chi1L.json"))
    print(f"peak {stats['peak_height']:.4g}, late noise {stats['late_noise_amplitude']:.4g}, "
          f"ratio {stats['ratio']:.4g}")


def cmd_oracle(args, cfg, manifest):
    if cfg.axis != "x":
        raise UsageError("oracle needs --axis x")
    if cfg.flavor != "fermionic" or cfg.q not in (2, 4):
        raise UsageError("closed forms exist for fermionic q = 2 and q = 4 only")
    res = _run(cfg, args, manifest)
    tol = args.tol if args.tol is not None else (0.01 if cfg.q == 2 else 0.02)
    report, worst = {}, 0.0
    for k in args.k:
        s = return_amplitude(k, res.data)
        pred, _ = predict_return_amplitude(coefficients(cfg.q, k, cfg.L, cfg.J), res.data.bandwidths, s.times)
        over = np.nonzero(1 - pred > args.max_drop)[0]
        end = int(over[0]) if len(over) else len(pred)
        dev = float(np.max(np.abs(s.mean[:end] - pred[:end]) / np.abs(pred[:end])))
        report[k] = {"window_end": float(s.times[end - 1]), "points": end, "max_rel_deviation": dev}
        worst = max(worst, dev)
        print(f"k={k}: max relative deviation {dev:.3e} over t <= {s.times[end - 1]:.3g}")
    manifest.add("oracle", write_json({"tolerance": tol, "max_drop": args.max_drop, "sizes": report,
                                       "max_rel_deviation": worst}, _products(cfg, manifest) / "oracle.json"))
    print(f"max relative deviation {worst:.3e} (tolerance {tol:g})")
    return 0 if worst <= tol else 1


def cmd_count_terms(args, manifest):
    rows = []
    for q in args.q:
        for k in args.k:
            for n in args.n:
                try:
                    count = count_commutator_terms(q, k, n, args.L, args.budget, args.convention)
                except BudgetExceeded:
                    count = None
                rows.append((q, k, n, count))
    if len(rows) == 1:
        print("?" if rows[0][3] is None else rows[0][3])
    else:
        print("q,k,n,count")
        for q, k, n, c in rows:
            print(f"{q},{k},{n},{'?' if c is None else c}")
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("L", "q", "k", "n", "count"))
            for q, k, n, c in rows:
                w.writerow((args.L, q, k, n, "?" if c is None else c))
        manifest.add("count_table", path)
        manifest.extra = {"convention": args.convention, "budget": args.budget}
        manifest.save(path.parent)


def cmd_fit_scaling(args, cfg, manifest):
    base = Path(cfg.output_dir)
    Ls, peaks, errs = [], [], []
    rows = []
    for L in args.Ls:
        sub_cfg = replace(cfg, L=L, output_dir=str(base / f"L{L}"))
        sub_cfg.validate()
        res = run_ensemble(sub_cfg, workers=args.threads)
        if res.data is None:
            raise ObservableError(f"no realization completed at L={L}")
        series = chi_total(res.data)
        value, t, m = refined_max(series.times, series.mean)
        Ls.append(L)
        peaks.append(value)
        errs.append(float(series.stderr[m]))
        rows.append({"L": L, "chi_max": value, "t_max": t, "stderr": errs[-1], "config_hash": sub_cfg.config_hash})
        manifest.realizations.extend({"L": L, **r} for r in realization_statuses(sub_cfg))
    model = cfg.axis if args.model == "auto" else args.model
    fit = fit_peak_scaling(Ls, peaks, model, sigma=errs)
    manifest.config = cfg.physics_dict()
    manifest.config_hash = cfg.config_hash
    payload = {"model": model, "terms": fit.terms, "coefficients": fit.coefficients, "stderr": fit.stderr,
               "residual_norm": fit.residual_norm, "points": rows}
    manifest.add("fit", write_json(payload, base / f"fit_{cfg.axis}.json"))
    for term, c, e in zip(fit.terms, fit.coefficients, fit.stderr):
        print(f"{term}: {c:.6g} +- {e:.2g}")


_PIPELINES = {
    "simulate": cmd_simulate, "susceptibility": cmd_susceptibility, "peaks": cmd_peaks,
    "return-amplitude": cmd_return_amplitude, "decay-rate": cmd_decay_rate, "saturation": cmd_saturation,
    "chi1L": cmd_chi1L, "oracle": cmd_oracle, "fit-scaling": cmd_fit_scaling,
}


def dispatch(command: str, args) -> int:
    if command not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {command!r}")
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        os.environ["SYKQ_THREADS"] = str(args.threads)
    manifest = Manifest(command)
    if command == "count-terms":
        cmd_count_terms(args, manifest)
        return 0
    if command == "fit-scaling" and args.L is None:
        args.L = args.Ls[0]
    try:
        cfg = _config(args)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    status = _PIPELINES[command](args, cfg, manifest)
    manifest.save(cfg.output_dir)
    return status or 0


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        print(f"sykquench: error: unknown subcommand {argv[0]!r}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args.command, args)
    except (UsageError, ConfigError) as exc:
        print(f"sykquench: error: {exc}", file=sys.stderr)
        return 2
    except (ObservableError, EnsembleIOError, BudgetExceeded, OSError, ValueError, RuntimeError) as exc:
        print(f"sykquench: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
