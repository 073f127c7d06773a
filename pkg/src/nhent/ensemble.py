"""Disorder- and time-averaged observables over parameter grids.

Each realization is time-averaged over the recorded steps first; the
realization-level values are then reduced in realization-index order with a
Welford accumulator, so results are bit-identical for any worker count.
Completed grid points are persisted one JSON file each, which makes sweeps
resumable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .evolve import Schedule, StabilizationError, iter_trajectory
from .model import Boundary, ModelParams, realization_seed, sample_disorder
from .observables import (
    antipodal_quarters,
    correlation_profile,
    density_profile,
    entropy_profile,
    half_chain_entropy,
    mutual_information,
)

log = logging.getLogger(__name__)

FAILURE_BUDGET = 0.01


class PointFailed(RuntimeError):
    """Too many realizations of one grid point aborted."""


@dataclass(frozen=True)
class ObservableFlags:
    entropy_profile: bool = False
    density: bool = True
    correlation: bool = True
    mutual_information: bool = True


@dataclass(frozen=True)
class SweepConfig:
    gamma_list: tuple = (-0.5,)
    W_list: tuple = (0.0,)
    L_list: tuple = (64,)
    realizations: int = 200
    schedule: Schedule = Schedule()
    base_seed: int = 0
    boundary: Boundary = Boundary.OPEN
    J: float = 1.0
    observables: ObservableFlags = ObservableFlags()

    def __post_init__(self):
        for name in ("gamma_list", "W_list", "L_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if any(int(L) != L or L % 2 or L < 4 for L in self.L_list):
            raise ValueError(f"every L must be an even integer >= 4, got {self.L_list}")

    def points(self) -> list[ModelParams]:
        return [
            ModelParams(J=self.J, gamma=float(g), W=float(W), L=int(L), boundary=self.boundary)
            for g in self.gamma_list
            for W in self.W_list
            for L in self.L_list
        ]


def realization_observables(params: ModelParams, m: np.ndarray, schedule: Schedule,
                            flags: ObservableFlags = ObservableFlags()) -> dict:
    """Time averages over the recorded steps of one trajectory."""
    A, B = antipodal_quarters(params.L)
    acc: dict[str, np.ndarray | float] = {}
    n = 0
    for _, D in iter_trajectory(params, m, schedule):
        values = {"S_half": half_chain_entropy(D)}
        if flags.entropy_profile:
            values["S_profile"] = entropy_profile(D)
        if flags.density:
            values["density"] = density_profile(D)
        if flags.correlation:
            values["correlation"] = correlation_profile(D)
        if flags.mutual_information and len(A):
            values["I_AB"] = mutual_information(D, A, B)
        for key, v in values.items():
            acc[key] = acc.get(key, 0.0) + np.asarray(v, dtype=float)
        n += 1
    return {key: v / n for key, v in acc.items()}


def _realization_task(args):
    params, schedule, flags, base_seed, r = args
    seed = realization_seed(base_seed, params.L, params.gamma, params.W, r)
    m = sample_disorder(params, seed).m
    try:
        return r, realization_observables(params, m, schedule, flags), None
    except StabilizationError as exc:
        return r, None, {"realization": r, "seed": seed, "step": exc.step_index, "error": str(exc)}


def _single_thread_blas():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(1)


_WORKER_LIMIT = None


def _init_worker():
    global _WORKER_LIMIT
    _WORKER_LIMIT = _single_thread_blas()


class Welford:
    """Streaming mean and variance over scalars or equal-shape arrays."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.n += 1
        if self.mean is None:
            self.mean = x.copy()
            self.m2 = np.zeros_like(x)
            return
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + delta * (x - self.mean)

    def stderr(self):
        if self.n < 2:
            return np.full_like(self.mean, np.nan)
        return np.sqrt(self.m2 / (self.n - 1)) / math.sqrt(self.n)


def _tolist(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else [float(v) for v in a]


@dataclass
class ObservableRecord:
    gamma: float
    W: float
    L: int
    boundary: str
    J: float
    R: int
    realizations_completed: int
    base_seed: int
    schedule: dict
    mean: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    point_key: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ObservableRecord":
        return cls(**json.loads(text))


def point_key(params: ModelParams, R: int, schedule: Schedule, base_seed: int, flags: ObservableFlags) -> str:
    payload = {
        "params": {**asdict(params), "boundary": params.boundary.value},
        "R": R,
        "schedule": asdict(schedule),
        "base_seed": int(base_seed),
        "flags": asdict(flags),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def run_point(
    params: ModelParams,
    R: int = 200,
    schedule: Schedule = Schedule(),
    base_seed: int = 0,
    flags: ObservableFlags = ObservableFlags(),
    *,
    workers: int = 1,
    failure_budget: float = FAILURE_BUDGET,
) -> ObservableRecord:
    """Average the requested observables over R seeded disorder realizations."""
    if R < 1:
        raise ValueError("R must be >= 1")
    tasks = [(params, schedule, flags, base_seed, r) for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
            results = list(pool.map(_realization_task, tasks, chunksize=max(1, R // (4 * workers))))
    else:
        with _single_thread_blas():
            results = [_realization_task(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    stats: dict[str, Welford] = {}
    failures = []
    for r, values, failure in results:
        if failure is not None:
            failures.append(failure)
            continue
        for key, v in values.items():
            stats.setdefault(key, Welford()).add(v)
    if len(failures) > failure_budget * R:
        raise PointFailed(
            f"{len(failures)} of {R} realizations aborted at gamma={params.gamma}, "
            f"W={params.W}, L={params.L}; first: {failures[0]['error']}"
        )
    for f in failures:
        log.warning("realization %(realization)d aborted at step %(step)d", f)

    return ObservableRecord(
        gamma=params.gamma, W=params.W, L=params.L, boundary=params.boundary.value, J=params.J,
        R=R, realizations_completed=R - len(failures), base_seed=int(base_seed),
        schedule=asdict(schedule),
        mean={k: _tolist(s.mean) for k, s in sorted(stats.items())},
        stderr={k: _tolist(s.stderr()) for k, s in sorted(stats.items())},
        failures=failures,
        point_key=point_key(params, R, schedule, base_seed, flags),
    )


def point_filename(params: ModelParams) -> str:
    return f"g{float(params.gamma)!r}_W{float(params.W)!r}_L{params.L}.json"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_hash(config: SweepConfig) -> str:
    payload = asdict(config)
    payload["boundary"] = config.boundary.value
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _load_complete(path: Path, key: str) -> ObservableRecord | None:
    try:
        rec = ObservableRecord.from_json(path.read_text())
    except (OSError, ValueError, TypeError):
        return None
    return rec if rec.point_key == key else None


SCALAR_COLUMNS = ("S_half", "I_AB")


def csv_text(records: Sequence[ObservableRecord]) -> str:
    """Scalar observables flattened to one row per point, 17 significant digits."""
    scalars = [c for c in SCALAR_COLUMNS if any(c in r.mean for r in records)]
    header = ["gamma", "W", "L", "R", "realizations_completed"]
    for c in scalars:
        header += [c, f"{c}_err"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        row = [format(r.gamma, ".17g"), format(r.W, ".17g"), r.L, r.R, r.realizations_completed]
        for c in scalars:
            row += [format(r.mean.get(c, math.nan), ".17g"), format(r.stderr.get(c, math.nan), ".17g")]
        w.writerow(row)
    return buf.getvalue()


def run_sweep(config: SweepConfig, out_dir: str | Path, *, workers: int = 1, resume: bool = True,
              progress=None) -> list[ObservableRecord]:
    """Run every grid point not already complete in ``out_dir``.

    Writes ``g{gamma}_W{W}_L{L}.json`` per point, ``sweep.csv`` and a
    ``manifest.json`` listing each point file with its sha256.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, entries = [], []
    for params in config.points():
        path = out / point_filename(params)
        key = point_key(params, config.realizations, config.schedule, config.base_seed, config.observables)
        rec = _load_complete(path, key) if resume and path.exists() else None
        if rec is None:
            rec = run_point(params, config.realizations, config.schedule, config.base_seed,
                            config.observables, workers=workers)
            atomic_write(path, rec.to_json())
            status = "computed"
        else:
            status = "skipped"
        if progress:
            progress(params, status)
        records.append(rec)
        entries.append({
            "file": path.name, "gamma": params.gamma, "W": params.W, "L": params.L,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        })
    atomic_write(out / "sweep.csv", csv_text(records))
    manifest = {
        "config_hash": config_hash(config),
        "code_version": __version__,
        "points": entries,
        "csv": "sweep.csv",
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return records


def records_dataset(records: Sequence[ObservableRecord], gamma: float | None = None):
    """S_half table of a sweep as a collapse dataset."""
    from .collapse import CollapseDataset

    rows = [r for r in records if gamma is None or math.isclose(r.gamma, gamma, abs_tol=1e-12)]
    return CollapseDataset(
        W=[r.W for r in rows], L=[r.L for r in rows],
        y=[r.mean["S_half"] for r in rows], y_err=[r.stderr["S_half"] for r in rows],
    )

