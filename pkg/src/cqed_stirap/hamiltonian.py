"""Pulse schedule, the rotating-frame Hamiltonian and its spectrum.

H(t) = delta * n_b + g_c * (c^dag s^- + h.c.) - J1(t) (a^dag b + h.c.) - J2(t) (b^dag c + h.c.)

with Gaussian pulses J_i(t) = K exp(-(t - t_i)^2) in parametric time t.
All energies are in units of K unless a caller passes a different K.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from .fock import ConservedBasis, FockState, HermitianOperator, Qubit, build_bilinear, enumerate_basis

T1_DEFAULT = 3.697
T2_DEFAULT = 2.4242
DELTA_DEFAULT = 0.5

DEGENERACY_TOL = 1e-10
AMBIGUITY_THRESHOLD = 0.5


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    N: int
    K: float = 1.0
    delta: float = DELTA_DEFAULT
    g_c: float = 0.0
    t1_tilde: float = T1_DEFAULT
    t2_tilde: float = T2_DEFAULT

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K!r}")
        if not self.t1_tilde > self.t2_tilde:
            raise ValueError("pulse ordering requires t1_tilde > t2_tilde (Stokes pulse first)")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def scaled_family(cls, N: int, g_sqrtN: float = 0.8944, delta_N: float = 10.0, J_N: float = 20.0, **kw):
        """Parameters with g_c*sqrt(N), delta*N and K*N held fixed."""
        return cls(N=N, K=J_N / N, delta=delta_N / N, g_c=g_sqrtN / math.sqrt(N), **kw)


def pulse_values(params: ModelParams, t_tilde):
    t = np.asarray(t_tilde, dtype=float)
    J1 = params.K * np.exp(-((t - params.t1_tilde) ** 2))
    J2 = params.K * np.exp(-((t - params.t2_tilde) ** 2))
    if J1.ndim == 0:
        return float(J1), float(J2)
    return J1, J2


def pulse_derivatives(params: ModelParams, t_tilde):
    J1, J2 = pulse_values(params, t_tilde)
    t = np.asarray(t_tilde, dtype=float)
    dJ1 = -2.0 * (t - params.t1_tilde) * J1
    dJ2 = -2.0 * (t - params.t2_tilde) * J2
    if np.ndim(dJ1) == 0:
        return float(dJ1), float(dJ2)
    return dJ1, dJ2


@dataclass(frozen=True)
class HamiltonianTerms:
    """The four fixed operators from which H(t) is assembled."""

    basis: ConservedBasis
    num_b: sps.csr_matrix
    jc_c: sps.csr_matrix
    hop_ab: sps.csr_matrix
    hop_bc: sps.csr_matrix


@lru_cache(maxsize=8)
def hamiltonian_terms(N: int) -> HamiltonianTerms:
    basis = enumerate_basis(N)
    return HamiltonianTerms(
        basis,
        *(build_bilinear(basis, kind).matrix for kind in ("num_b", "jc_c", "hop_ab", "hop_bc")),
    )


def basis_for(params: ModelParams) -> ConservedBasis:
    return hamiltonian_terms(params.N).basis


def assemble(params: ModelParams, t_tilde: float) -> HermitianOperator:
    terms = hamiltonian_terms(params.N)
    J1, J2 = pulse_values(params, t_tilde)
    m = params.delta * terms.num_b + params.g_c * terms.jc_c - J1 * terms.hop_ab - J2 * terms.hop_bc
    return HermitianOperator(terms.basis, sps.csr_matrix(m), f"H({t_tilde:g})")


def assemble_derivative(params: ModelParams, t_tilde: float) -> HermitianOperator:
    """Analytic dH/dt~ = -J1'(t) hop_ab - J2'(t) hop_bc."""
    terms = hamiltonian_terms(params.N)
    dJ1, dJ2 = pulse_derivatives(params, t_tilde)
    m = -dJ1 * terms.hop_ab - dJ2 * terms.hop_bc
    return HermitianOperator(terms.basis, sps.csr_matrix(m), f"dH({t_tilde:g})")


@dataclass(frozen=True)
class SpectrumSlice:
    t_tilde: float
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def vector(self, nu: int) -> np.ndarray:
        return self.vectors[:, nu]


def _degenerate_clusters(energies: np.ndarray, tol: float):
    start = 0
    for k in range(1, len(energies) + 1):
        if k == len(energies) or energies[k] - energies[k - 1] > tol:
            yield start, k
            start = k


def fix_gauge(energies: np.ndarray, vectors: np.ndarray, previous: np.ndarray | None = None,
              tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Fix eigenvector phases in place of an arbitrary eigensolver choice.

    Each column gets its largest-magnitude component real and positive.
    Inside a degenerate cluster with a ``previous`` slice available, the
    cluster basis is first rotated to best match the previous vectors.
    """
    V = np.array(vectors, dtype=complex, copy=True)
    if previous is not None:
        for lo, hi in _degenerate_clusters(energies, tol):
            if hi - lo < 2:
                continue
            block = V[:, lo:hi]
            # project previous cluster vectors into this eigenspace, then orthonormalize
            overlap = block.conj().T @ previous[:, lo:hi]
            u, _, vh = np.linalg.svd(overlap)
            V[:, lo:hi] = block @ (u @ vh)
    idx = np.argmax(np.abs(V), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    V /= pivots / np.abs(pivots)
    return V


def diagonalize(params: ModelParams, t_tilde: float, previous: SpectrumSlice | None = None) -> SpectrumSlice:
    H = assemble(params, t_tilde).toarray()
    try:
        energies, vectors = scipy.linalg.eigh(H, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"eigendecomposition failed at t_tilde={t_tilde}: {exc}") from exc
    vectors = fix_gauge(energies, vectors, None if previous is None else previous.vectors)
    return SpectrumSlice(float(t_tilde), energies, vectors)


def spectrum_scan(params: ModelParams, t_grid, threads: int = 1) -> list[SpectrumSlice]:
    """Diagonalize H on every grid point; gauge fixing runs in grid order."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")

    def raw(t):
        try:
            return scipy.linalg.eigh(assemble(params, t).toarray())
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolverError(f"eigendecomposition failed at t_tilde={t}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            decomps = list(pool.map(raw, t_grid))
    else:
        decomps = [raw(t) for t in t_grid]

    slices = []
    prev = None
    for t, (E, V) in zip(t_grid, decomps):
        V = fix_gauge(E, V, prev)
        slices.append(SpectrumSlice(float(t), E, V))
        prev = V
    return slices


@dataclass(frozen=True)
class TrackPoint:
    t_tilde: float
    index: int
    energy: float
    overlap: float
    ambiguous: bool


def track_branch(slices, seed_index: int, references=None,
                 threshold: float = AMBIGUITY_THRESHOLD) -> list[TrackPoint]:
    """Follow one eigenbranch across a list of slices.

    Without ``references`` the follower picks, at every step, the eigenvector
    with maximal squared overlap with the one followed on the previous slice.
    With ``references`` (one vector per slice) the overlap is taken with the
    reference instead, which keeps the route pinned to an externally defined
    state such as the quantum image of a mean-field branch.
    """
    if not slices:
        raise ValueError("track_branch needs at least one slice")
    if references is not None and len(references) != len(slices):
        raise ValueError("need exactly one reference vector per slice")
    first = slices[0]
    if not 0 <= seed_index < first.dim:
        raise IndexError(f"seed index {seed_index} out of range for dimension {first.dim}")

    if references is not None:
        ov = np.abs(first.vectors.conj().T @ references[0]) ** 2
        seed_index = int(np.argmax(ov))
        start_overlap = float(ov[seed_index] / max(np.vdot(references[0], references[0]).real, 1e-300))
    else:
        start_overlap = 1.0
    route = [TrackPoint(first.t_tilde, int(seed_index), float(first.energies[seed_index]), start_overlap,
                        start_overlap < threshold)]
    followed = first.vectors[:, seed_index]
    for k, sl in enumerate(slices[1:], start=1):
        target = followed if references is None else references[k] / np.linalg.norm(references[k])
        ov = np.abs(sl.vectors.conj().T @ target) ** 2
        nu = int(np.argmax(ov))
        best = float(ov[nu])
        route.append(TrackPoint(sl.t_tilde, nu, float(sl.energies[nu]), best, best < threshold))
        followed = sl.vectors[:, nu]
    return route


@dataclass(frozen=True)
class CrossingMetrics:
    nu: int
    nu_prime: int
    t_tilde: float
    gap: float
    sigma: float
    ratio: float
    degenerate: bool

    def diabatic_at(self, rate: float, margin: float = 10.0) -> bool:
        """Landau-Zener style test: rate >> d^2/sigma (by ``margin``)."""
        return rate > margin * self.ratio


def crossing_metrics(params: ModelParams, slices, nu: int, nu_prime: int) -> CrossingMetrics:
    """Gap, coupling and d^2/sigma at the closest approach of two levels."""
    if not slices:
        raise ValueError("crossing_metrics needs at least one slice")
    dim = slices[0].dim
    for k in (nu, nu_prime):
        if not 0 <= k < dim:
            raise IndexError(f"eigen index {k} out of range for dimension {dim}")
    gaps = np.array([abs(sl.energies[nu] - sl.energies[nu_prime]) for sl in slices])
    k = int(np.argmin(gaps))
    sl = slices[k]
    dH = assemble_derivative(params, sl.t_tilde).matrix
    sigma = float(abs(np.vdot(sl.vectors[:, nu], dH @ sl.vectors[:, nu_prime])))
    gap = float(gaps[k])
    if nu == nu_prime or sigma == 0.0:
        return CrossingMetrics(nu, nu_prime, sl.t_tilde, gap, sigma, math.inf, True)
    return CrossingMetrics(nu, nu_prime, sl.t_tilde, gap, sigma, gap**2 / sigma, False)


def initial_state_index(params: ModelParams) -> int:
    """Basis index of |N, 0, 0, down>, the prepared state at t~ = 0."""
    return basis_for(params).index_of(FockState(params.N, 0, 0, Qubit.DOWN))
