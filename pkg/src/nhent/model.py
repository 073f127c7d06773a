"""Disordered Hatano-Nelson chain: parameters, disorder sampling, Hamiltonian.

The single-particle matrix is

    H[i, i+1] = J_L = -(J - gamma) / 2
    H[i+1, i] = J_R = -(J + gamma) / 2
    H[i, i]   = m_i,   m_i ~ U[-W/2, W/2]

with the two corner entries H[L-1, 0] = J_L, H[0, L-1] = J_R added under
periodic boundaries. Site indices are 0-based in code.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np


class Boundary(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class ModelError(ValueError):
    """Invalid model parameters or mismatched disorder."""


@dataclass(frozen=True)
class ModelParams:
    J: float = 1.0
    gamma: float = -0.5
    W: float = 0.0
    L: int = 64
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if int(self.L) != self.L or self.L < 4 or self.L % 2:
            raise ModelError(f"L must be an even integer >= 4, got {self.L}")
        object.__setattr__(self, "L", int(self.L))
        if not self.W >= 0:
            raise ModelError(f"W must be >= 0, got {self.W}")
        for name in ("J", "gamma", "W"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")

    @property
    def J_L(self) -> float:
        return -(self.J - self.gamma) / 2

    @property
    def J_R(self) -> float:
        return -(self.J + self.gamma) / 2

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC


@dataclass(frozen=True)
class DisorderRealization:
    m: np.ndarray
    seed: int | None = None


@dataclass(frozen=True)
class Hamiltonian:
    H: np.ndarray
    params: ModelParams


@dataclass(frozen=True)
class SimilarityData:
    r: float
    Jprime: float
    Sdiag: np.ndarray = field(repr=False)


def _float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def realization_seed(base_seed: int, L: int, gamma: float, W: float, index: int) -> int:
    """64-bit key for one disorder realization at one grid point.

    Derived through ``numpy.random.SeedSequence`` so keys for different
    points and realization indices are statistically independent and do
    not depend on the order in which they are requested.
    """
    ss = np.random.SeedSequence(
        int(base_seed) & (2**64 - 1),
        spawn_key=(int(L), _float_bits(gamma), _float_bits(W), int(index)),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def uniform_onsite(W: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))
    if W == 0:
        return np.zeros(n)
    return rng.uniform(-W / 2, W / 2, size=n)


def sample_disorder(params: ModelParams, seed: int) -> DisorderRealization:
    """Draw i.i.d. on-site energies m_i ~ U[-W/2, W/2] for ``params.L`` sites."""
    m = uniform_onsite(params.W, params.L, seed)
    m.setflags(write=False)
    return DisorderRealization(m=m, seed=int(seed))


def _hopping_matrix(L: int, onsite, left: float, right: float, periodic: bool) -> np.ndarray:
    H = np.zeros((L, L), dtype=complex)
    H[np.diag_indices(L)] = onsite
    i = np.arange(L - 1)
    H[i, i + 1] = left
    H[i + 1, i] = right
    if periodic:
        H[L - 1, 0] = left
        H[0, L - 1] = right
    return H


def build_hamiltonian(params: ModelParams, dis: DisorderRealization | np.ndarray) -> Hamiltonian:
    m = np.asarray(getattr(dis, "m", dis), dtype=float)
    if m.shape != (params.L,):
        raise ModelError(f"disorder has shape {m.shape}, expected ({params.L},)")
    H = _hopping_matrix(params.L, m, params.J_L, params.J_R, params.periodic)
    return Hamiltonian(H=H, params=params)


def similarity_transform(params: ModelParams) -> SimilarityData:
    """Gauge data mapping the OBC chain onto a Hermitian one.

    ``S = diag(r^{1/2}, r, ..., r^{L/2})`` with ``r = |(J+gamma)/(J-gamma)|``
    satisfies ``S^-1 H S = H(J -> J', gamma -> 0)`` for open boundaries.
    """
    J, g = params.J, params.gamma
    if not abs(g) < abs(J):
        raise ModelError(f"similarity transform needs |gamma| < |J| (gamma={g}, J={J})")
    r = abs((J + g) / (J - g))
    Jprime = math.copysign(math.sqrt(J * J - g * g), J)
    Sdiag = r ** (np.arange(1, params.L + 1) / 2)
    return SimilarityData(r=r, Jprime=Jprime, Sdiag=Sdiag)


def hermitian_partner(params: ModelParams, dis: DisorderRealization | np.ndarray) -> Hamiltonian:
    """H' = H(J -> J', gamma -> 0) with the same disorder and boundary."""
    sim = similarity_transform(params)
    return build_hamiltonian(replace(params, J=sim.Jprime, gamma=0.0), dis)


def reflect(params: ModelParams, dis: DisorderRealization | np.ndarray):
    """Spatial reflection i -> L+1-i.

    Swaps J_L and J_R, i.e. flips the sign of gamma, and reverses the
    disorder vector. Returns the reflected ``(params, m)``.
    """
    m = np.asarray(getattr(dis, "m", dis), dtype=float)
    return replace(params, gamma=-params.gamma), m[::-1].copy()
