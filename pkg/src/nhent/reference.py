"""Independent oracles for the Slater-determinant engine.

``brute_force_evolution`` works in the full half-filled Fock sector and
shares no code path with :mod:`nhent.evolve`: the many-body generator is
assembled from fermionic matrix elements, propagated with a sliced Taylor
series (not Pade), and entropies come from Schmidt values of the state
vector rather than from correlation-matrix spectra.

``clean_pbc_correlation`` gives the long-time correlation matrix of the
clean periodic chain from momentum sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_SITES = 12


def half_filled_basis(L: int) -> np.ndarray:
    """Bitmasks with L/2 set bits in ascending order; bit i is site i."""
    states = np.arange(1 << L, dtype=np.int64)
    return states[np.bitwise_count(states) == L // 2]


def _hop(basis: np.ndarray, i: int, j: int):
    """Matrix elements of c_i^dag c_j on ``basis``.

    Returns (source positions, target states, signs). Canonical ordering puts
    lower site indices leftmost, so moving an operator to site k costs
    (-1)^(number of occupied sites below k).
    """
    bi, bj = np.int64(1) << i, np.int64(1) << j
    if i == j:
        src = np.nonzero(basis & bi)[0]
        return src, basis[src], np.ones(src.size)
    ok = ((basis & bj) != 0) & ((basis & bi) == 0)
    src = np.nonzero(ok)[0]
    s = basis[src] ^ bj
    sign = (-1.0) ** np.bitwise_count(basis[src] & (bj - 1))
    sign *= (-1.0) ** np.bitwise_count(s & (bi - 1))
    return src, s | bi, sign


def many_body_matrix(H: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Dense matrix of sum_ij H_ij c_i^dag c_j in the given sector basis."""
    L = H.shape[0]
    M = np.zeros((basis.size, basis.size), dtype=complex)
    for i in range(L):
        for j in range(L):
            if H[i, j] == 0:
                continue
            src, tgt, sign = _hop(basis, i, j)
            M[np.searchsorted(basis, tgt), src] += H[i, j] * sign
    return M


def taylor_evolve(M: np.ndarray, psi: np.ndarray, t: float, slice_norm: float = 0.5) -> np.ndarray:
    """Normalized exp(-i M t) psi by Taylor series on slices with ||M dt|| <= slice_norm."""
    norm1 = float(np.abs(M).sum(axis=0).max()) if M.size else 0.0
    n = max(1, math.ceil(norm1 * abs(t) / slice_norm))
    tau = t / n
    v = psi / np.linalg.norm(psi)
    for _ in range(n):
        term, acc = v, v.copy()
        for k in range(1, 60):
            term = (-1j * tau / k) * (M @ term)
            acc += term
            if np.linalg.norm(term) < 1e-18 * np.linalg.norm(acc):
                break
        v = acc / np.linalg.norm(acc)
    return v


def neel_index(basis: np.ndarray, L: int) -> int:
    mask = sum(1 << s for s in range(1, L, 2))
    return int(np.searchsorted(basis, mask))


@dataclass
class BruteForceResult:
    L: int
    basis: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)

    def entropy(self, A) -> float:
        return fock_entropy(self.psi, self.basis, self.L, A)


def fock_correlation(psi: np.ndarray, basis: np.ndarray, L: int) -> np.ndarray:
    D = np.zeros((L, L), dtype=complex)
    for i in range(L):
        for j in range(L):
            src, tgt, sign = _hop(basis, i, j)
            D[i, j] = np.vdot(psi[np.searchsorted(basis, tgt)], sign * psi[src])
    return D


def fock_entropy(psi: np.ndarray, basis: np.ndarray, L: int, A) -> float:
    """Entropy of the fermionic reduced state on sites ``A``.

    Modes are reordered so that ``A`` comes first (picking up the fermionic
    permutation sign per basis state), then the Schmidt values of the
    A|rest bipartition are computed.
    """
    A = sorted(set(int(a) for a in A))
    if not A:
        raise ValueError("subsystem must be nonempty")
    order = A + [s for s in range(L) if s not in A]
    new_pos = np.empty(L, dtype=np.int64)
    new_pos[order] = np.arange(L)
    full = np.zeros(1 << L, dtype=complex)
    for amp, state in zip(psi, basis):
        occ = [s for s in range(L) if state >> s & 1]
        pos = new_pos[occ]
        # occ is ascending, so pairs with pos[a] > pos[b], a < b, are inversions
        inversions = int(np.sum(np.triu(pos[:, None] > pos[None, :], 1)))
        idx = int(np.sum(np.int64(1) << pos))
        full[idx] += amp * (-1) ** inversions
    nA = len(A)
    schmidt = np.linalg.svd(full.reshape(1 << (L - nA), 1 << nA), compute_uv=False)
    p = schmidt**2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def brute_force_evolution(H, t: float) -> BruteForceResult:
    """Exact normalized exp(-i H t)|Neel> in the half-filled Fock sector."""
    H = np.asarray(getattr(H, "H", H), dtype=complex)
    L = H.shape[0]
    if L > MAX_SITES:
        raise ValueError(f"brute force limited to L <= {MAX_SITES}, got {L}")
    if L % 2:
        raise ValueError(f"L must be even, got {L}")
    basis = half_filled_basis(L)
    psi0 = np.zeros(basis.size, dtype=complex)
    psi0[neel_index(basis, L)] = 1.0
    psi = psi0 if t == 0 else taylor_evolve(many_body_matrix(H, basis), psi0, t)
    return BruteForceResult(L=L, basis=basis, psi=psi, D=fock_correlation(psi, basis, L))


def _occupied(ks: np.ndarray, score: np.ndarray, n: int) -> np.ndarray:
    # largest score first, ties toward negative k
    order = np.lexsort((ks, -np.round(score, 12)))
    return np.sort(ks[order[:n]])


def clean_pbc_momenta(L: int, gamma: float = -0.5) -> np.ndarray:
    """Occupied momenta of the long-time clean PBC state.

    The L/2 modes k = 2 pi n / L with the largest gamma sin k; the tie
    between k = -pi and k = 0 is broken toward negative k. For gamma < 0
    this is n = -L/2 .. -1.
    """
    ks = 2 * np.pi * np.arange(-L // 2, L // 2) / L
    return _occupied(ks, gamma * np.sin(ks), L // 2)


def momentum_sum_correlation(ks: np.ndarray, L: int) -> np.ndarray:
    d = np.arange(L)[:, None] - np.arange(L)[None, :]
    return np.exp(-1j * d[:, :, None] * ks[None, None, :]).sum(axis=2) / L


def clean_pbc_correlation(L: int, gamma: float = -0.5) -> np.ndarray:
    """D_mn = (1/L) sum_{k occupied} exp(-i k (m - n)) for the clean periodic chain."""
    if L % 2:
        raise ValueError(f"L must be even, got {L}")
    return momentum_sum_correlation(clean_pbc_momenta(L, gamma), L)


def hermitian_ground_correlation(L: int) -> np.ndarray:
    """Half-filled ground state of -sum(c_j^dag c_{j+1} + h.c.) by momentum sums.

    The ring is threaded with half a flux quantum when L = 2 mod 4 so the
    momentum grid matches the gauge-rotated state; Fermi-level ties go to
    negative k.
    """
    shift = 0.0 if L % 4 == 0 else 0.5
    ks = 2 * np.pi * (np.arange(-L // 2, L // 2) + shift) / L
    return momentum_sum_correlation(_occupied(ks, np.cos(ks), L // 2), L)


def gauge_rotation(L: int) -> np.ndarray:
    return 1j ** np.arange(1, L + 1)


def gauge_check(D: np.ndarray) -> float:
    """max |U^dag D U - D'| with U = diag(i, i^2, ...) and D' the Hermitian-chain ground state."""
    L = D.shape[0]
    u = gauge_rotation(L)
    rotated = u.conj()[:, None] * D * u[None, :]
    return float(np.max(np.abs(rotated - hermitian_ground_correlation(L))))


def oracle_suite(
    instances: int = 20,
    sizes=(6, 8, 10),
    gammas=(0.0, -0.5),
    W_values=(0.0, 2.0, 5.0),
    times=(2.0, 10.0, 20.0),
    dt: float = 2.0,
    seed: int = 0,
    tolerance: float = 1e-8,
) -> dict:
    """Compare the Slater-determinant engine against brute force on random instances.

    Each instance draws (L, gamma, W, t, boundary) uniformly from the given
    choices and a disorder seed; residuals are the max-abs difference of
    the correlation matrices and of the entropies of every contiguous
    block {a..b-1}, 0 <= a < b <= L, excluding the full chain.
    """
    from .evolve import Schedule, evolve_trajectory
    from .model import ModelParams, build_hamiltonian, sample_disorder
    from .observables import entanglement_entropy

    rng = np.random.default_rng(seed)
    rows = []
    for k in range(instances):
        L = int(rng.choice(sizes))
        gamma = float(rng.choice(gammas))
        W = float(rng.choice(W_values))
        t = float(rng.choice(times))
        boundary = str(rng.choice(["open", "periodic"]))
        dis_seed = int(rng.integers(2**63))
        n_steps = int(round(t / dt))
        if not math.isclose(n_steps * dt, t):
            raise ValueError(f"time {t} is not a multiple of dt={dt}")
        params = ModelParams(J=1.0, gamma=gamma, W=W, L=L, boundary=boundary)
        dis = sample_disorder(params, dis_seed)
        D = evolve_trajectory(params, dis, Schedule(dt=dt, n_steps=n_steps, record_last=1))[-1]
        ref = brute_force_evolution(build_hamiltonian(params, dis), t)
        d_err = float(np.max(np.abs(D - ref.D)))
        blocks = [np.arange(a, b) for a in range(L) for b in range(a + 1, L + 1) if b - a < L]
        s_err = max(abs(entanglement_entropy(D, A) - ref.entropy(A)) for A in blocks)
        rows.append({
            "instance": k, "L": L, "gamma": gamma, "W": W, "t": t, "boundary": boundary,
            "seed": dis_seed, "D_max_abs": d_err, "S_max_abs": float(s_err),
        })
    max_res = {
        "correlation_matrix": max(r["D_max_abs"] for r in rows),
        "entropy_contiguous_cuts": max(r["S_max_abs"] for r in rows),
    }
    return {
        "instances": rows,
        "max_residuals": max_res,
        "tolerance": tolerance,
        "passed": all(v < tolerance for v in max_res.values()),
    }
