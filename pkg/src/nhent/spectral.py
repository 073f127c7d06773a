"""Single-particle diagnostics of the disordered Hatano-Nelson chain.

Orthogonality index and mean inverse participation ratio of the right
eigenvectors, transfer-matrix Lyapunov exponents of the Hermitian partner
H', its density of states, and the MIPR predicted by the asymptotic
eigenstate profile |u(x)|^2 ~ r^x exp(-|x - x_n| / xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .model import (
    Boundary,
    ModelParams,
    build_hamiltonian,
    hermitian_partner,
    realization_seed,
    sample_disorder,
    similarity_transform,
    uniform_onsite,
)


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    right_vectors: np.ndarray = field(repr=False)
    # log|det U|, filled when known in closed form
    log_abs_det: float | None = None


@dataclass(frozen=True)
class LocalizationLength:
    E: float
    xi: float
    xi_err: float
    lyapunov: float
    lyapunov_err: float
    extended: bool
    converged: bool


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return (self.edges[1:] + self.edges[:-1]) / 2

    @property
    def mass(self) -> np.ndarray:
        return self.density * np.diff(self.edges)


def eigensystem(params: ModelParams, dis) -> EigenSystem:
    """Right eigenpairs of H with unit-norm columns.

    Under open boundaries with |gamma| < |J| the eigenvectors are built as
    S v from the Hermitian partner's orthonormal eigenvectors v, which is
    far better conditioned than a direct non-Hermitian eigensolve and gives
    log|det U| exactly.
    """
    if params.boundary is Boundary.OPEN and abs(params.gamma) < abs(params.J):
        sim = similarity_transform(params)
        E, V = np.linalg.eigh(hermitian_partner(params, dis).H)
        U = sim.Sdiag[:, None] * V
        norms = np.linalg.norm(U, axis=0)
        U /= norms
        log_det = float(np.sum(np.log(sim.Sdiag)) - np.sum(np.log(norms)))
        return EigenSystem(E.astype(complex), U, log_det)
    E, U = np.linalg.eig(build_hamiltonian(params, dis).H)
    U /= np.linalg.norm(U, axis=0)
    return EigenSystem(E, U)


def orthogonality_index(U) -> float:
    """|det U|^(1/L) evaluated in the log domain; 0 for singular U."""
    log_det = getattr(U, "log_abs_det", None)
    U = getattr(U, "right_vectors", U)
    L = U.shape[1]
    if log_det is None:
        sign, log_det = np.linalg.slogdet(U)
        if sign == 0:
            return 0.0
    return float(np.exp(log_det / L))


def mipr(U) -> float:
    """Mean over eigenvectors of sum_x |u_n(x)|^4."""
    U = getattr(U, "right_vectors", U)
    return float(np.mean(np.sum(np.abs(U) ** 4, axis=0)))


def lyapunov_exponents(energies, hopping: float, m: np.ndarray, n_segments: int = 10, warmup: int = 200):
    """Lyapunov exponents of -t(psi_{x+1} + psi_{x-1}) + m_x psi_x = E psi_x.

    Iterates the 2x2 transfer matrix for all energies at once, renormalizing
    every site. Returns ``(lam, lam_err)`` with a jackknife error over
    ``n_segments`` equal segments after ``warmup`` sites.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    n = m.size - warmup
    if n < n_segments:
        raise ValueError("chain too short for the requested segments")
    seg_len = n // n_segments
    a = np.ones_like(E)
    b = np.full_like(E, 1 / math.sqrt(13.0))
    logs = np.zeros((n_segments, E.size))
    inv_t = 1.0 / hopping
    for x in range(warmup + seg_len * n_segments):
        a, b = (m[x] - E) * inv_t * a - b, a
        s = np.hypot(a, b)
        a /= s
        b /= s
        if x >= warmup:
            logs[(x - warmup) // seg_len] += np.log(s)
    per_seg = logs / seg_len
    lam = per_seg.mean(axis=0)
    # jackknife over segments; equal segment lengths make the leave-one-out mean exact
    loo = (per_seg.sum(axis=0) - per_seg) / (n_segments - 1)
    lam_err = np.sqrt((n_segments - 1) / n_segments * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return np.maximum(lam, 0.0), lam_err


def _xi_from_lambda(E, lam, err, n_sites) -> LocalizationLength:
    extended = lam * n_sites < 10.0
    xi = math.inf if extended else 1.0 / lam
    xi_err = math.inf if extended else err / lam**2
    converged = extended or err <= 0.2 * lam
    return LocalizationLength(float(E), xi, xi_err, float(lam), float(err), bool(extended), bool(converged))


def localization_lengths(energies, params: ModelParams, n_sites: int, seed: int) -> list[LocalizationLength]:
    """Amplitude decay lengths 1/lambda of H' at each energy, one disorder chain shared."""
    if n_sites < 1000:
        raise ValueError("n_sites too small for a meaningful Lyapunov estimate")
    Jp = similarity_transform(params).Jprime
    m = uniform_onsite(params.W, n_sites, seed)
    lam, err = lyapunov_exponents(energies, abs(Jp) / 2, m)
    E = np.atleast_1d(energies)
    return [_xi_from_lambda(e, l, s, n_sites) for e, l, s in zip(E, lam, err)]


def localization_length(E: float, params: ModelParams, n_sites: int = 100_000, seed: int = 0) -> LocalizationLength:
    """Localization length of the Hermitian partner H' at energy E.

    Walks the transfer matrix of
    ``-(J'/2)(psi_{x+1} + psi_{x-1}) + (m_x - E) psi_x = 0``.
    ``xi = 1/lambda`` is an *amplitude* decay length; |psi|^2 decays with
    length xi/2. When ``lambda * n_sites < 10`` the state is reported as
    extended with ``xi = inf``.
    """
    return localization_lengths([E], params, n_sites, seed)[0]


def hermitian_spectra(params: ModelParams, R: int, seed: int) -> np.ndarray:
    """Eigenvalues of H' for R seeded realizations, shape (R, L)."""
    out = np.empty((R, params.L))
    for r in range(R):
        dis = sample_disorder(params, realization_seed(seed, params.L, params.gamma, params.W, r))
        out[r] = np.linalg.eigvalsh(hermitian_partner(params, dis).H)
    return out


def density_of_states(params: ModelParams, R: int = 1, bins: int = 101, seed: int = 0) -> Histogram:
    """Normalized histogram of the eigenvalues of H' over R realizations."""
    if R < 1:
        raise ValueError("R must be >= 1")
    Jp = abs(similarity_transform(params).Jprime)
    half = Jp + params.W / 2
    half *= 1 + 1e-9
    E = hermitian_spectra(params, R, seed).ravel()
    counts, edges = np.histogram(E, bins=bins, range=(-half, half))
    return Histogram(edges=edges, density=counts / (E.size * np.diff(edges)))


def asymptotic_ipr(r: float, xi: float, x_n: float, L: int) -> float:
    """sum_x p(x)^2 for p(x) ~ r^x exp(-|x - x_n| / xi) on x = 1..L.

    ``xi`` is the intensity decay length. Weights are normalized in the log
    domain so extreme r or xi cannot overflow.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not 1 <= x_n <= L:
        raise ValueError("x_n must lie in [1, L]")
    x = np.arange(1, L + 1, dtype=float)
    dist = np.abs(x - x_n)
    if xi <= 0:
        logw = np.where(dist == 0, x * math.log(r), -np.inf)
    else:
        logw = x * math.log(r) - dist / xi
    logp = logw - logsumexp(logw)
    return float(np.exp(logsumexp(2 * logp)))


@dataclass(frozen=True)
class AsymptoticMIPR:
    value: float
    dos: Histogram
    xi: np.ndarray
    ipr: np.ndarray
    unconverged_bins: int


def asymptotic_mipr(
    params: ModelParams,
    R: int = 20,
    bins: int = 101,
    n_sites: int = 20_000,
    seed: int = 0,
    x_n: float | None = None,
) -> AsymptoticMIPR:
    """DOS-weighted average of the asymptotic-profile IPR.

    ``I_M = sum_E D(E) I[xi(E)] / sum_E D(E)`` over histogram bins, with
    xi(E) from the transfer matrix at bin centers and the localization
    center at ``x_n`` (default L/2).
    """
    sim = similarity_transform(params)
    dos = density_of_states(params, R, bins, seed)
    mass = dos.mass
    occupied = mass > 0
    centers = dos.centers[occupied]
    loc = localization_lengths(centers, params, n_sites, seed)
    xn = params.L / 2 if x_n is None else x_n
    xi = np.array([item.xi for item in loc])
    # the profile exponent uses the intensity decay length
    ipr = np.array([asymptotic_ipr(sim.r, x / 2, xn, params.L) for x in xi])
    value = float(np.sum(mass[occupied] * ipr) / np.sum(mass[occupied]))
    bad = sum(not item.converged for item in loc)
    return AsymptoticMIPR(value, dos, xi, ipr, bad)


@dataclass(frozen=True)
class SpectralPoint:
    W: float
    O_mean: float
    O_err: float
    mipr_mean: float
    mipr_err: float
    asymptotic_mipr: float | None = None


def _mean_err(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    err = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), err


def spectral_point(params: ModelParams, R: int, seed: int, *, with_asymptotic: bool = False,
                   bins: int = 101, n_sites: int = 20_000) -> SpectralPoint:
    """Disorder-averaged O and MIPR at one parameter point, reduced in realization order."""
    O, M = [], []
    for r in range(R):
        dis = sample_disorder(params, realization_seed(seed, params.L, params.gamma, params.W, r))
        es = eigensystem(params, dis)
        O.append(orthogonality_index(es))
        M.append(mipr(es))
    asym = None
    if with_asymptotic:
        asym = asymptotic_mipr(params, R=R, bins=bins, n_sites=n_sites, seed=seed).value
    return SpectralPoint(params.W, *_mean_err(O), *_mean_err(M), asym)


def spectral_sweep(params: ModelParams, W_list, R: int, seed: int, **kwargs) -> list[SpectralPoint]:
    return [spectral_point(replace(params, W=float(W)), R, seed, **kwargs) for W in W_list]
