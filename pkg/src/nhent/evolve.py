"""Non-unitary Slater-determinant dynamics with per-step QR stabilization.

The half-filled state is stored as an L x N frame ``Q`` with orthonormal
columns spanning the occupied orbitals. One step applies the propagator
``P = exp(-i H dt)`` and re-orthonormalizes:

    Q <- qr(P @ Q).Q

which keeps the exponentially growing and decaying components of the
non-Hermitian evolution representable. The normalized many-body state never
needs the R factor, so it is discarded after the health check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg as sla

from .model import DisorderRealization, Hamiltonian, ModelParams, build_hamiltonian, reflect

MIN_PIVOT = 1e-13
ORTHO_TOL = 1e-10


class StabilizationError(RuntimeError):
    """QR re-orthonormalization hit a numerically rank-deficient frame."""

    def __init__(self, step_index: int, min_pivot: float, detail: str = ""):
        self.step_index = step_index
        self.min_pivot = min_pivot
        msg = f"stabilization failed at step {step_index}: min |R_ii| = {min_pivot:.3e}"
        super().__init__(f"{msg} {detail}".strip())


@dataclass(frozen=True)
class SlaterFrame:
    Q: np.ndarray
    step_index: int = 0
    min_pivot: float = 1.0


@dataclass(frozen=True)
class Propagator:
    P: np.ndarray
    dt: float


@dataclass(frozen=True)
class Schedule:
    dt: float = 2.0
    n_steps: int = 1000
    record_last: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 1 <= self.record_last <= self.n_steps:
            raise ValueError(
                f"need n_steps >= record_last >= 1, got n_steps={self.n_steps}, "
                f"record_last={self.record_last}"
            )


@dataclass
class Health:
    """Running numerical-health record of one trajectory."""

    min_pivot: float = np.inf
    max_ortho_error: float = 0.0
    steps: int = 0


def init_neel(L: int, occupied_parity: int = 1) -> SlaterFrame:
    """Neel frame: column j is the unit vector on (1-based) site 2j.

    ``occupied_parity=0`` gives the complementary frame on odd 1-based
    sites, used for the reflected chain.
    """
    if L % 2 or L < 2:
        raise ValueError(f"L must be even, got {L}")
    N = L // 2
    Q = np.zeros((L, N), dtype=complex)
    Q[np.arange(occupied_parity, L, 2), np.arange(N)] = 1.0
    return SlaterFrame(Q=Q)


def make_propagator(H: Hamiltonian | np.ndarray, dt: float) -> Propagator:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    M = np.asarray(getattr(H, "H", H), dtype=complex)
    # scaling-and-squaring Pade; eigendecomposition is ill-conditioned for skin modes
    return Propagator(P=sla.expm(-1j * dt * M), dt=float(dt))


def orthonormality_error(Q: np.ndarray) -> float:
    G = Q.conj().T @ Q
    G[np.diag_indices_from(G)] -= 1.0
    return float(np.max(np.abs(G))) if G.size else 0.0


def step(frame: SlaterFrame, prop: Propagator, *, check: bool = False) -> SlaterFrame:
    """Apply one propagator step followed by QR re-orthonormalization.

    The column phases are fixed so that diag(R) is real and positive, which
    makes the frame unique.
    """
    index = frame.step_index + 1
    Q, R = sla.qr(prop.P @ frame.Q, mode="economic", check_finite=False)
    d = np.diagonal(R)
    mags = np.abs(d)
    min_pivot = float(mags.min()) if mags.size else 1.0
    if not min_pivot >= MIN_PIVOT:
        raise StabilizationError(index, min_pivot)
    Q *= (d.conj() / mags)[None, :]
    if check:
        err = orthonormality_error(Q)
        if err > ORTHO_TOL:
            raise StabilizationError(index, min_pivot, f"(|Q^H Q - I|_max = {err:.3e})")
    return SlaterFrame(Q=Q, step_index=index, min_pivot=min_pivot)


def correlation_matrix(frame: SlaterFrame | np.ndarray) -> np.ndarray:
    """D_ij = <c_i^dag c_j> = (Q Q^dag)^T."""
    Q = getattr(frame, "Q", frame)
    return Q.conj() @ Q.T


def iter_trajectory(
    params: ModelParams,
    dis: DisorderRealization | np.ndarray,
    schedule: Schedule = Schedule(),
    *,
    health: Health | None = None,
    debug: bool = False,
) -> Iterator[tuple[int, np.ndarray]]:
    """Evolve the Neel state and yield ``(step_index, D)`` for the recorded steps.

    For gamma > 0 the chain is reflected so that the skin modes pile up at
    the left edge, where the column ordering of the Neel frame keeps the QR
    well conditioned; correlation matrices are reflected back before they
    are yielded.
    """
    flipped = params.gamma > 0
    if flipped:
        run_params, m = reflect(params, dis)
        frame = init_neel(params.L, occupied_parity=0)
    else:
        run_params, m = params, getattr(dis, "m", dis)
        frame = init_neel(params.L)
    prop = make_propagator(build_hamiltonian(run_params, m), schedule.dt)
    health = health if health is not None else Health()
    first_recorded = schedule.n_steps - schedule.record_last + 1

    for _ in range(schedule.n_steps):
        frame = step(frame, prop, check=debug)
        health.steps = frame.step_index
        health.min_pivot = min(health.min_pivot, frame.min_pivot)
        if frame.step_index >= first_recorded:
            err = orthonormality_error(frame.Q)
            health.max_ortho_error = max(health.max_ortho_error, err)
            if err > ORTHO_TOL:
                raise StabilizationError(
                    frame.step_index, frame.min_pivot, f"(|Q^H Q - I|_max = {err:.3e})"
                )
            D = correlation_matrix(frame)
            yield frame.step_index, (D[::-1, ::-1] if flipped else D)


def evolve_trajectory(
    params: ModelParams,
    dis: DisorderRealization | np.ndarray,
    schedule: Schedule = Schedule(),
    **kwargs,
) -> list[np.ndarray]:
    return [D for _, D in iter_trajectory(params, dis, schedule, **kwargs)]
