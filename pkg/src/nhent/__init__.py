"""Entanglement dynamics of free fermions in the disordered Hatano-Nelson chain."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Boundary,
    DisorderRealization,
    Hamiltonian,
    ModelParams,
    build_hamiltonian,
    sample_disorder,
    similarity_transform,
)
from .evolve import Schedule, SlaterFrame, correlation_matrix, evolve_trajectory, init_neel  # noqa: E402
from .observables import entanglement_entropy, mutual_information  # noqa: E402

__all__ = [
    "Boundary",
    "DisorderRealization",
    "Hamiltonian",
    "ModelParams",
    "Schedule",
    "SlaterFrame",
    "build_hamiltonian",
    "correlation_matrix",
    "entanglement_entropy",
    "evolve_trajectory",
    "init_neel",
    "mutual_information",
    "sample_disorder",
    "similarity_transform",
]
