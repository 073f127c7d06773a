"""Finite-size-scaling collapse of S_{L/2}(W, L) = L^beta F[(W - W_c) L^(1/nu)].

The collapse quality is measured by comparing every point of one size
against linear interpolations of the other sizes at the same scaled
coordinate, within the x-window where all sizes overlap. The parameters
minimizing that loss are found with a restarted Nelder-Mead simplex.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

JITTER = 0.10
MAX_ITER = 2000
TOL = 1e-8
NU_BOX = (0.5, 5.0)
BETA_BOX = (0.0, 1.0)


@dataclass(frozen=True)
class CollapseDataset:
    W: np.ndarray
    L: np.ndarray
    y: np.ndarray
    y_err: np.ndarray | None = None

    def __post_init__(self):
        for name in ("W", "L", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.y_err is not None:
            object.__setattr__(self, "y_err", np.asarray(self.y_err, dtype=float))
        if not (self.W.shape == self.L.shape == self.y.shape):
            raise ValueError("W, L and y must have equal length")

    @property
    def sizes(self) -> np.ndarray:
        return np.unique(self.L)

    def validate(self):
        if self.sizes.size < 2 or np.unique(self.W).size < 3:
            raise ValueError("collapse needs at least 2 sizes and 3 disorder values")
        if np.any(self.y < 0):
            raise ValueError("entropies must be nonnegative")
        return self

    def select(self, mask) -> "CollapseDataset":
        err = None if self.y_err is None else self.y_err[mask]
        return CollapseDataset(self.W[mask], self.L[mask], self.y[mask], err)

    def sizes_subset(self, sizes) -> "CollapseDataset":
        return self.select(np.isin(self.L, list(sizes)))


@dataclass
class CollapseFit:
    W_c: float
    nu: float
    beta: float
    loss: float
    loss_unnormalized: float
    n_rows: int
    w_min: float
    converged: bool
    uncertainties: dict | None = None
    subsets_used: list = field(default_factory=list)

    @property
    def params(self) -> tuple[float, float, float]:
        return self.W_c, self.nu, self.beta

    def to_dict(self) -> dict:
        return asdict(self)


def _loss_terms(data: CollapseDataset, W_c: float, nu: float, beta: float):
    with np.errstate(over="ignore"):
        x = (data.W - W_c) * data.L ** (1.0 / nu)
        y = data.y / data.L**beta
    curves = []
    for size in data.sizes:
        sel = data.L == size
        order = np.argsort(x[sel])
        curves.append((x[sel][order], y[sel][order]))
    if len(curves) < 2:
        return None
    lo = max(c[0][0] for c in curves)
    hi = min(c[0][-1] for c in curves)
    if not lo <= hi:
        return None
    dev = []
    for k, (xk, yk) in enumerate(curves):
        inside = (xk >= lo) & (xk <= hi)
        if not inside.any():
            continue
        others = [np.interp(xk[inside], xo, yo) for j, (xo, yo) in enumerate(curves) if j != k]
        dev.append(yk[inside] - np.mean(others, axis=0))
    if not dev:
        return None
    return np.concatenate(dev)


def collapse_loss(data: CollapseDataset, W_c: float, nu: float, beta: float, normalized: bool = True) -> float:
    """Mean squared deviation of each point from the other sizes' curves.

    Returns +inf when fewer than two sizes overlap in scaled x. With
    ``normalized=False`` the plain sum of squares is returned.
    """
    if not (math.isfinite(W_c) and math.isfinite(nu) and math.isfinite(beta)) or nu <= 0:
        return math.inf
    dev = _loss_terms(data, W_c, nu, beta)
    if dev is None:
        return math.inf
    total = float(np.sum(dev**2))
    return total / dev.size if normalized else total


def _simplex(objective: Callable, x0: np.ndarray):
    f0 = objective(x0)
    fatol = TOL * f0 if math.isfinite(f0) and f0 > 0 else TOL
    with np.errstate(invalid="ignore", over="ignore"):
        return minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxiter": MAX_ITER, "xatol": TOL, "fatol": fatol},
        )


def _fit_domain(data, init, restarts, seed) -> tuple[np.ndarray, float, bool]:
    rng = np.random.default_rng(seed)
    w_lo, w_hi = data.W.min(), data.W.max()

    def objective(p):
        # outside the box the overlap window degenerates and the loss is meaningless
        if not (w_lo - 1.0 <= p[0] <= w_hi and NU_BOX[0] <= p[1] <= NU_BOX[1]
                and BETA_BOX[0] <= p[2] <= BETA_BOX[1]):
            return math.inf
        return collapse_loss(data, p[0], p[1], p[2])

    best_x, best_f, best_ok = np.asarray(init, dtype=float), math.inf, False
    for k in range(max(1, restarts)):
        x0 = np.asarray(init, dtype=float)
        if k:
            x0 = x0 * (1 + rng.uniform(-JITTER, JITTER, size=3))
        res = _simplex(objective, x0)
        if res.fun < best_f:
            best_x, best_f, best_ok = res.x, float(res.fun), bool(res.success)
    return best_x, best_f, best_ok


def fit_collapse(
    data: CollapseDataset,
    init: Sequence[float] = (3.35, 1.9, 0.5),
    restarts: int = 8,
    *,
    margin: float = 0.35,
    seed: int = 0,
    max_rounds: int = 5,
) -> CollapseFit:
    """Minimize the collapse loss over (W_c, nu, beta).

    Only rows with ``W >= W_c - margin`` enter. The cutoff is held fixed
    during each simplex run and updated from the fitted W_c until the row
    set stops changing, so the loss stays continuous for the optimizer.
    """
    data.validate()
    W_c0, nu0, beta0 = init
    if not (data.W.min() <= W_c0 <= data.W.max()) or not (
        NU_BOX[0] <= nu0 <= NU_BOX[1] and BETA_BOX[0] <= beta0 <= BETA_BOX[1]
    ):
        raise ValueError(f"initial guess {tuple(init)} outside the admissible box")

    params = np.array(init, dtype=float)
    w_min = W_c0 - margin
    mask = data.W >= w_min - 1e-12
    for _ in range(max_rounds):
        domain = data.select(mask)
        params, loss, ok = _fit_domain(domain, params, restarts, seed)
        w_min = params[0] - margin
        new_mask = data.W >= w_min - 1e-12
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    else:
        log.warning("collapse fit domain did not settle after %d rounds", max_rounds)
        ok = False
        domain = data.select(mask)
        loss = collapse_loss(domain, *params)

    dev = _loss_terms(domain, *params)
    return CollapseFit(
        W_c=float(params[0]), nu=float(params[1]), beta=float(params[2]),
        loss=float(loss),
        loss_unnormalized=float(np.sum(dev**2)) if dev is not None else math.inf,
        n_rows=int(dev.size) if dev is not None else 0,
        w_min=float(w_min),
        converged=ok,
    )


def drop_one_subsets(sizes) -> list[tuple]:
    sizes = sorted(int(s) for s in sizes)
    return [tuple(c) for c in combinations(sizes, len(sizes) - 1)]


def estimate_uncertainty(
    data: CollapseDataset,
    fit: CollapseFit,
    size_subsets: Sequence[Sequence[int]] | None = None,
    *,
    restarts: int = 8,
    margin: float = 0.35,
    seed: int = 0,
) -> dict:
    """Standard deviation of (W_c, nu, beta) over refits on subsets of sizes."""
    subsets = drop_one_subsets(data.sizes) if size_subsets is None else [tuple(s) for s in size_subsets]
    results, used = [], []
    for sub in subsets:
        part = data.sizes_subset(sub)
        if part.sizes.size < 2:
            log.warning("skipping degenerate size subset %s", sub)
            continue
        try:
            f = fit_collapse(part, fit.params, restarts, margin=margin, seed=seed)
        except ValueError as exc:
            log.warning("skipping size subset %s: %s", sub, exc)
            continue
        results.append(f.params)
        used.append(list(sub))
    if len(results) < 3:
        raise ValueError("uncertainty estimate needs at least 3 usable size subsets")
    arr = np.array(results)
    std = arr.std(axis=0, ddof=1)
    fit.uncertainties = {"W_c": float(std[0]), "nu": float(std[1]), "beta": float(std[2])}
    fit.subsets_used = used
    return fit.uncertainties


@dataclass(frozen=True)
class TailCheck:
    slope: float
    expected: float
    L: int
    n_points: int


def tail_exponent_check(data: CollapseDataset, fit: CollapseFit, offset: float = 0.5) -> TailCheck:
    """Log-log slope of the largest-size S_{L/2} against W - W_c for W > W_c + offset."""
    L = int(data.sizes.max())
    sel = (data.L == L) & (data.W > fit.W_c + offset)
    if sel.sum() < 3:
        raise ValueError("insufficient tail points for the power-law check")
    slope = np.polyfit(np.log(data.W[sel] - fit.W_c), np.log(data.y[sel]), 1)[0]
    return TailCheck(float(slope), -fit.nu * fit.beta, L, int(sel.sum()))


def critical_slope(data: CollapseDataset, W_c: float) -> float:
    """Log-log slope of S_{L/2}(W_c, L) against L, interpolating each size in W."""
    Ls, S = [], []
    for size in data.sizes:
        sel = data.L == size
        order = np.argsort(data.W[sel])
        w, y = data.W[sel][order], data.y[sel][order]
        if w[0] <= W_c <= w[-1]:
            Ls.append(size)
            S.append(np.interp(W_c, w, y))
    if len(Ls) < 2:
        raise ValueError("W_c not bracketed by at least two sizes")
    return float(np.polyfit(np.log(Ls), np.log(S), 1)[0])


def scaling_function(x, nu: float, beta: float, x0: float = 6.0, amplitude: float = 1.0):
    """Smooth F with F(0) = amplitude and F(x) ~ x^(-nu beta) for x >> x0."""
    x = np.asarray(x, dtype=float)
    return amplitude * (1 + (x / x0) ** 2) ** (-nu * beta / 2)


def synthetic_dataset(
    W_c: float = 3.35,
    nu: float = 1.9,
    beta: float = 0.5,
    sizes: Sequence[int] = (32, 64, 96, 128, 192, 256, 320),
    W_grid: Sequence[float] | None = None,
    noise: float = 0.0,
    seed: int = 0,
    x0: float = 6.0,
) -> CollapseDataset:
    """S = L^beta F[(W - W_c) L^(1/nu)] with relative Gaussian noise."""
    W_grid = np.arange(2.0, 6.0001, 0.025) if W_grid is None else np.asarray(W_grid, dtype=float)
    rng = np.random.default_rng(seed)
    W, L = np.meshgrid(W_grid, np.asarray(sizes, dtype=float), indexing="ij")
    W, L = W.ravel(), L.ravel()
    y = L**beta * scaling_function((W - W_c) * L ** (1 / nu), nu, beta, x0=x0)
    if noise:
        y = y * (1 + noise * rng.standard_normal(y.size))
    return CollapseDataset(W, L, y, np.abs(y) * noise)


def read_csv(path: str | Path, gamma: float | None = None, column: str = "S_half") -> CollapseDataset:
    """Load (W, L, S_half[, S_half_err]) rows from an ensemble CSV export."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if gamma is not None and "gamma" in rows[0]:
        rows = [r for r in rows if math.isclose(float(r["gamma"]), gamma, abs_tol=1e-12)]
    elif "gamma" in rows[0] and len({r["gamma"] for r in rows}) > 1:
        raise ValueError(f"{path}: several gamma values present, select one")
    err_col = f"{column}_err"
    return CollapseDataset(
        W=[float(r["W"]) for r in rows],
        L=[float(r["L"]) for r in rows],
        y=[float(r[column]) for r in rows],
        y_err=[float(r[err_col]) for r in rows] if err_col in rows[0] else None,
    )


def write_collapsed_csv(path: str | Path, data: CollapseDataset, fit: CollapseFit) -> None:
    x = (data.W - fit.W_c) * data.L ** (1 / fit.nu)
    y = data.y / data.L**fit.beta
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "L", "W"])
        for row in sorted(zip(data.L, x, y, data.W)):
            w.writerow([format(row[1], ".17g"), format(row[2], ".17g"), int(row[0]), format(row[3], ".17g")])
