"""Entanglement and correlation observables of a Gaussian (Slater) state.

All functions take the correlation matrix ``D[i, j] = <c_i^dag c_j>`` and
use 0-based site indices. Entropies are in nats.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

EPS = 1e-12


def _sites(A: Iterable[int], L: int) -> np.ndarray:
    idx = np.asarray(list(A) if not isinstance(A, (range, np.ndarray)) else A, dtype=int)
    if idx.size == 0:
        raise ValueError("subsystem must be nonempty")
    if idx.min() < 0 or idx.max() >= L:
        raise ValueError(f"subsystem sites must lie in [0, {L - 1}]")
    if np.unique(idx).size != idx.size:
        raise ValueError("subsystem sites must be distinct")
    return idx


def binary_entropy(xi: np.ndarray, eps: float = EPS) -> float:
    """-sum[x ln x + (1-x) ln(1-x)] with eigenvalues within eps of 0 or 1 dropped."""
    x = np.asarray(xi, dtype=float)
    x = x[(x > eps) & (x < 1 - eps)]
    return float(-np.sum(x * np.log(x) + (1 - x) * np.log1p(-x)))


def subsystem_spectrum(D: np.ndarray, A) -> np.ndarray:
    idx = _sites(A, D.shape[0])
    DA = D[np.ix_(idx, idx)]
    return np.linalg.eigvalsh((DA + DA.conj().T) / 2)


def entanglement_entropy(D: np.ndarray, A, eps: float = EPS) -> float:
    """Von Neumann entropy of subsystem ``A`` from the restricted correlation matrix."""
    return binary_entropy(subsystem_spectrum(D, A), eps)


def half_chain_entropy(D: np.ndarray) -> float:
    return entanglement_entropy(D, range(D.shape[0] // 2))


def entropy_profile(D: np.ndarray, eps: float = EPS) -> np.ndarray:
    """S_l for the prefixes {0..l-1}, l = 1..L-1."""
    L = D.shape[0]
    return np.array([entanglement_entropy(D, range(l), eps) for l in range(1, L)])


def density_profile(D: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(D)).copy()


def connected_correlation(D: np.ndarray, l: int) -> float:
    """C(l) = |<c_{L/2}^dag c_{L/2+l}>|^2 with 1-based site labels, 1 <= l <= L/2."""
    L = D.shape[0]
    if not 1 <= l <= L // 2:
        raise ValueError(f"separation l must be in [1, {L // 2}], got {l}")
    c = L // 2 - 1
    return float(abs(D[c, c + l]) ** 2)


def correlation_profile(D: np.ndarray) -> np.ndarray:
    """C(l) for l = 1..L/2."""
    L = D.shape[0]
    c = L // 2 - 1
    return np.abs(D[c, c + 1 : c + L // 2 + 1]) ** 2


def chord_coordinate(l, L: int):
    """(L/pi) sin(pi l / L): ring distance used on correlation axes."""
    return L / np.pi * np.sin(np.pi * np.asarray(l, dtype=float) / L)


def power_law_exponent(x: Sequence[float], y: Sequence[float], floor: float = 1e-30) -> float:
    """alpha in y ~ x^-alpha from a least-squares line in log-log space.

    Points with ``y <= floor`` are ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (y > floor) & (x > 0)
    if keep.sum() < 2:
        raise ValueError("need at least two positive points for a power-law fit")
    slope = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0]
    return float(-slope)


def correlation_exponent(D: np.ndarray, l_min: int = 1, l_max: int | None = None, odd_only: bool = True) -> float:
    """Fit C(l) ~ chord(l)^-alpha over l_min..l_max.

    At half filling the clean correlations vanish for even separations, so
    only odd l enter the fit by default.
    """
    L = D.shape[0]
    l_max = L // 2 if l_max is None else l_max
    ls = np.arange(l_min, l_max + 1)
    if odd_only:
        ls = ls[ls % 2 == 1]
    C = correlation_profile(D)[ls - 1]
    return power_law_exponent(chord_coordinate(ls, L), C)


def antipodal_quarters(L: int) -> tuple[range, range]:
    """Default mutual-information regions: first and last quarter of the chain."""
    q = L // 4
    return range(0, q), range(L - q, L)


def mutual_information(D: np.ndarray, A, B, eps: float = EPS) -> float:
    """I_AB = S_A + S_B - S_{A u B} for disjoint A and B."""
    L = D.shape[0]
    a, b = _sites(A, L), _sites(B, L)
    if np.intersect1d(a, b).size:
        raise ValueError("subsystems A and B overlap")
    ab = np.concatenate([a, b])
    return (
        entanglement_entropy(D, a, eps)
        + entanglement_entropy(D, b, eps)
        - entanglement_entropy(D, ab, eps)
    )
