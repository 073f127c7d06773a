"""Command-line entry point: ``nhent {simulate,sweep,collapse,spectral,oracle-check}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .collapse import (
    critical_slope,
    estimate_uncertainty,
    fit_collapse,
    read_csv,
    tail_exponent_check,
    write_collapsed_csv,
)
from .config import COMMANDS, ConfigError, RunConfig, parse_config, resolved
from .ensemble import (
    ObservableFlags,
    PointFailed,
    SweepConfig,
    atomic_write,
    point_filename,
    run_point,
    run_sweep,
)
from .evolve import Schedule, StabilizationError
from .model import ModelParams
from .observables import chord_coordinate

log = logging.getLogger("nhent")

SYNTHETIC_FIXTURE = "builtin:synthetic"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _schedule(cfg: RunConfig) -> Schedule:
    return Schedule(**cfg.schedule.model_dump())


def _write_manifest(out: Path, files) -> None:
    entries = [{"file": f, "sha256": hashlib.sha256((out / f).read_bytes()).hexdigest()} for f in files]
    manifest = {"code_version": __version__, "files": entries}
    atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def cmd_simulate(cfg: RunConfig, out: Path, resume: bool) -> int:
    m = cfg.model
    params = ModelParams(J=m.J, gamma=m.gamma, W=m.W, L=m.L, boundary=m.boundary)
    flags = ObservableFlags(entropy_profile=True, density=True, correlation=True, mutual_information=True)
    rec = run_point(params, m.realizations, _schedule(cfg), cfg.base_seed, flags, workers=cfg.workers)
    name = point_filename(params)
    atomic_write(out / name, rec.to_json())
    L = params.L
    ls = np.arange(1, L)
    _write_csv(out / "entropy_profile.csv", ["l", "chord", "S_l", "S_l_err"],
               zip(ls, chord_coordinate(ls, L), rec.mean["S_profile"], rec.stderr["S_profile"]))
    _write_csv(out / "density.csv", ["site", "n", "n_err"],
               zip(range(1, L + 1), rec.mean["density"], rec.stderr["density"]))
    lc = np.arange(1, L // 2 + 1)
    _write_csv(out / "correlation.csv", ["l", "chord", "C", "C_err"],
               zip(lc, chord_coordinate(lc, L), rec.mean["correlation"], rec.stderr["correlation"]))
    _write_manifest(out, [name, "entropy_profile.csv", "density.csv", "correlation.csv", "resolved_config.json"])
    print(f"S_L/2 = {rec.mean['S_half']:.6f} +- {rec.stderr['S_half']:.2g}  ({rec.realizations_completed}/{rec.R} realizations)")
    return 0


def cmd_sweep(cfg: RunConfig, out: Path, resume: bool) -> int:
    s = cfg.sweep
    config = SweepConfig(
        gamma_list=s.gamma_list, W_list=s.W_list, L_list=s.L_list, realizations=s.realizations,
        schedule=_schedule(cfg), base_seed=cfg.base_seed, boundary=s.boundary, J=s.J,
        observables=ObservableFlags(**s.observables.model_dump()),
    )

    def progress(params, status):
        log.info("%s gamma=%g W=%g L=%d", status, params.gamma, params.W, params.L)

    records = run_sweep(config, out, workers=cfg.workers, resume=resume, progress=progress)
    print(f"{len(records)} points written to {out}")
    return 0


def _collapse_input(source: str) -> Path:
    if source == SYNTHETIC_FIXTURE:
        return Path(str(resources.files("nhent") / "data" / "synthetic_collapse.csv"))
    return Path(source)


def cmd_collapse(cfg: RunConfig, out: Path, resume: bool) -> int:
    c = cfg.collapse
    data = read_csv(_collapse_input(c.input), gamma=c.gamma)
    fit = fit_collapse(data, c.init, c.restarts, margin=c.margin, seed=cfg.base_seed)
    if c.uncertainty:
        estimate_uncertainty(data, fit, c.subsets, restarts=c.restarts, margin=c.margin, seed=cfg.base_seed)
    report = {"input": c.input, "gamma": c.gamma, "fit": fit.to_dict()}
    try:
        tail = tail_exponent_check(data, fit)
        report["tail"] = asdict(tail)
    except ValueError as exc:
        report["tail"] = {"error": str(exc)}
    try:
        report["critical_slope"] = critical_slope(data, fit.W_c)
    except ValueError as exc:
        report["critical_slope"] = None
        log.warning("critical slope unavailable: %s", exc)
    atomic_write(out / "collapse_fit.json", json.dumps(report, sort_keys=True, indent=1) + "\n")
    write_collapsed_csv(out / "collapsed.csv", data.select(data.W >= fit.w_min), fit)
    _write_manifest(out, ["collapse_fit.json", "collapsed.csv", "resolved_config.json"])
    err = fit.uncertainties or {}
    print(
        f"W_c = {fit.W_c:.4f} +- {err.get('W_c', float('nan')):.3f}, "
        f"nu = {fit.nu:.4f} +- {err.get('nu', float('nan')):.3f}, "
        f"beta = {fit.beta:.4f} +- {err.get('beta', float('nan')):.3f}, loss = {fit.loss:.3e}"
    )
    return 0


def cmd_spectral(cfg: RunConfig, out: Path, resume: bool) -> int:
    from .spectral import spectral_sweep

    s = cfg.spectral
    params = ModelParams(J=s.J, gamma=s.gamma, W=0.0, L=s.L, boundary=s.boundary)
    points = spectral_sweep(params, s.W_list, s.realizations, cfg.base_seed,
                            with_asymptotic=s.asymptotic, bins=s.bins, n_sites=s.n_sites)
    header = ["W", "O_mean", "O_err", "mipr_mean", "mipr_err", "asymptotic_mipr"]
    rows = [[p.W, p.O_mean, p.O_err, p.mipr_mean, p.mipr_err,
             "" if p.asymptotic_mipr is None else p.asymptotic_mipr] for p in points]
    _write_csv(out / "spectral.csv", header, rows)
    atomic_write(out / "spectral.json",
                 json.dumps([asdict(p) for p in points], sort_keys=True, indent=1) + "\n")
    _write_manifest(out, ["spectral.csv", "spectral.json", "resolved_config.json"])
    print(f"{len(points)} disorder strengths written to {out / 'spectral.csv'}")
    return 0


def cmd_oracle_check(cfg: RunConfig, out: Path, resume: bool) -> int:
    from .reference import oracle_suite

    o = cfg.oracle
    report = oracle_suite(
        instances=o.instances, sizes=o.sizes, gammas=o.gammas, W_values=o.W_values,
        times=o.times, dt=o.dt, seed=cfg.base_seed, tolerance=o.tolerance,
    )
    atomic_write(out / "oracle_check.json", json.dumps(report, sort_keys=True, indent=1) + "\n")
    _write_manifest(out, ["oracle_check.json", "resolved_config.json"])
    for name, value in report["max_residuals"].items():
        print(f"{name:<28s} {value:.3e}")
    print("PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


HANDLERS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "collapse": cmd_collapse,
    "spectral": cmd_spectral,
    "oracle-check": cmd_oracle_check,
}


def _error_report(out: Path | None, exc: BaseException, kind: str) -> None:
    report = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "line", "step_index"):
        if getattr(exc, attr, None) is not None:
            report[attr] = getattr(exc, attr)
    text = json.dumps(report, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None and out.is_dir():
        atomic_write(out / "error.json", text + "\n")


def dispatch(config: RunConfig, resume: bool = False) -> int:
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        payload = {"code_version": __version__, "config": resolved(config)}
        atomic_write(out / "resolved_config.json", json.dumps(payload, sort_keys=True, indent=1) + "\n")
        return HANDLERS[config.command](config, out, resume)
    except (StabilizationError, PointFailed) as exc:
        _error_report(out, exc, "numerical")
        return 3
    except (ValueError, OSError) as exc:
        log.debug("%s", traceback.format_exc())
        _error_report(out, exc, "runtime")
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhent",
        description="Disorder-induced entanglement transitions in the Hatano-Nelson chain.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="base seed (overrides base_seed)")
        p.add_argument("--workers", type=int, help="worker processes; falls back to $NHENT_WORKERS")
        p.add_argument("--resume", action="store_true", help="skip grid points already complete")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    workers = args.workers
    if workers is None and os.environ.get("NHENT_WORKERS"):
        workers = int(os.environ["NHENT_WORKERS"])
    try:
        config = parse_config(args.config, command=args.command, output_dir=args.output,
                              base_seed=args.seed, workers=workers)
    except (ConfigError, OSError) as exc:
        _error_report(None, exc, "config")
        return 2
    return dispatch(config, resume=args.resume)


if __name__ == "__main__":
    sys.exit(main())
