"""Real-time sweeps and the diagnostics evaluated along them.

The pulse clock runs as t~ = rate * t. A sweep propagates |X(t)> through
piecewise-frozen steps, exp(-i H(t~_mid) h), with t~_mid the midpoint of
each step. Two propagators are available: an exact eigendecomposition per
step ("eig") and a Chebyshev expansion ("chebyshev", the default) whose
coefficients are shared by all steps because one spectral bound covers
every H(t~).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from scipy.special import comb, jv

from . import _kernels
from .fock import MODES, FockState, Qubit, exchange_matrix
from .hamiltonian import (ModelParams, SpectrumSlice, TrackPoint, assemble, basis_for, diagonalize,
                          hamiltonian_terms, initial_state_index, pulse_values, track_branch)
from .semiclassical import SPBranch, continue_branch, quantum_image

T_END_DEFAULT = 6.0606
# Kh = 0.05 at rate 0.003K; the physical step scales as 1/rate, so the t~ step is fixed.
DT_TILDE_DEFAULT = 0.05 * 0.003
STORE_STRIDE = 100
STEP_TOL = 1e-6
CHEB_TOL = 1e-16


class StepSizeError(RuntimeError):
    pass


def build_dark_state(params: ModelParams, t_tilde: float) -> np.ndarray:
    """Two-mode condensate (cos T a^dag - sin T c^dag)^N |vac> / sqrt(N!)."""
    J1, J2 = pulse_values(params, t_tilde)
    norm = math.hypot(J1, J2)
    cos_t, sin_t = J2 / norm, J1 / norm
    basis = basis_for(params)
    N = params.N
    psi = np.zeros(basis.size, dtype=complex)
    for k in range(N + 1):
        amp = math.sqrt(comb(N, k, exact=True)) * cos_t ** (N - k) * (-sin_t) ** k
        psi[basis.index_of(FockState(N - k, 0, k, Qubit.DOWN))] = amp
    return psi / np.linalg.norm(psi)


def initial_state(params: ModelParams) -> np.ndarray:
    """|N, 0, 0, down>."""
    psi = np.zeros(basis_for(params).size, dtype=complex)
    psi[initial_state_index(params)] = 1.0
    return psi


@dataclass(frozen=True)
class SweepConfig:
    params: ModelParams
    rate: float
    t_tilde_span: tuple[float, float] = (0.0, T_END_DEFAULT)
    store_stride: int = STORE_STRIDE
    dt_tilde: float = DT_TILDE_DEFAULT
    method: str = "chebyshev"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate!r}")
        lo, hi = self.t_tilde_span
        if hi < lo:
            raise ValueError("t_tilde_span must be non-decreasing")
        if self.store_stride < 1:
            raise ValueError("store_stride must be at least 1")
        if not self.dt_tilde > 0:
            raise ValueError("dt_tilde must be positive")
        if self.method not in ("chebyshev", "eig"):
            raise ValueError(f"unknown propagator {self.method!r}")

    @property
    def n_steps(self) -> int:
        lo, hi = self.t_tilde_span
        return int(math.ceil((hi - lo) / self.dt_tilde - 1e-9)) if hi > lo else 0

    @property
    def step_tilde(self) -> float:
        """Actual t~ step: the span divided evenly so the sweep ends exactly on time."""
        lo, hi = self.t_tilde_span
        n = self.n_steps
        return (hi - lo) / n if n else 0.0

    def refined(self, factor: int = 2) -> "SweepConfig":
        return replace(self, dt_tilde=self.step_tilde / factor if self.n_steps else self.dt_tilde)


@dataclass(frozen=True)
class SweepResult:
    times: np.ndarray  # K t
    t_tildes: np.ndarray
    populations: np.ndarray  # columns <n_a>, <n_b>, <n_c>, <s_z>
    norms: np.ndarray
    snapshots: np.ndarray  # rows are states at the stored times
    final_state: np.ndarray
    config: SweepConfig = field(repr=False)

    @property
    def excitation(self) -> np.ndarray:
        return self.populations[:, :3].sum(axis=1) + self.populations[:, 3] + 0.5 * self.norms**2


def _observables(psi: np.ndarray, occ: np.ndarray):
    prob = psi.real**2 + psi.imag**2
    nrm2 = prob.sum()
    pops = prob @ occ
    pops[3] -= 0.5 * nrm2  # qubit column holds 0/1; convert to s_z
    return pops, math.sqrt(nrm2)


def _spectral_bounds(params: ModelParams):
    """Gershgorin interval containing the spectrum of H(t~) for every t~ (|J_i| <= K)."""
    terms = hamiltonian_terms(params.N)
    H0 = (params.delta * terms.num_b + params.g_c * terms.jc_c).tocsr()
    diag = H0.diagonal().real
    off = (np.asarray(abs(H0).sum(axis=1)).ravel() - np.abs(diag)
           + params.K * np.asarray(abs(terms.hop_ab).sum(axis=1)).ravel()
           + params.K * np.asarray(abs(terms.hop_bc).sum(axis=1)).ravel())
    return float((diag - off).min()), float((diag + off).max())


def chebyshev_coefficients(h: float, lo: float, hi: float, tol: float = CHEB_TOL):
    """Coefficients of exp(-i h x) on [lo, hi] in Chebyshev polynomials of the rescaled x."""
    e0 = 0.5 * (hi + lo)
    R = max(0.5 * (hi - lo), 1e-12)
    x = R * h
    kmax = int(x + 30 + 10 * x ** (1 / 3))
    k = np.arange(kmax + 1)
    j = jv(k, x)
    big = np.flatnonzero(np.abs(j) > tol)
    n = max(int(big.max()) + 1 if big.size else 1, 2)
    coeffs = 2.0 * (-1j) ** k[:n] * j[:n]
    coeffs[0] = j[0]
    return coeffs * np.exp(-1j * e0 * h), e0, R


class _ChebyshevPropagator:
    def __init__(self, params: ModelParams, h: float):
        terms = hamiltonian_terms(params.N)
        H0 = sps.csr_matrix(params.delta * terms.num_b + params.g_c * terms.jc_c)
        self._mats = []
        for m in (H0, terms.hop_ab, terms.hop_bc):
            m = sps.csr_matrix(m, dtype=complex)
            m.sort_indices()
            self._mats.append((m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.complex128)))
        lo, hi = _spectral_bounds(params)
        self.coeffs, self.e0, self.R = chebyshev_coefficients(h, lo, hi)

    def run(self, psi, J1s, J2s):
        (p0, i0, d0), (p1, i1, d1), (p2, i2, d2) = self._mats
        return _kernels.chebyshev_steps(psi, p0, i0, d0, p1, i1, d1, p2, i2, d2,
                                        -np.ascontiguousarray(J1s), -np.ascontiguousarray(J2s),
                                        self.coeffs, self.e0, self.R)


def _eig_steps(params: ModelParams, psi, t_mids, h):
    for t in t_mids:
        E, V = scipy.linalg.eigh(assemble(params, t).toarray())
        psi = V @ (np.exp(-1j * E * h) * (V.conj().T @ psi))
    return psi


def evolve(config: SweepConfig, psi0: np.ndarray | None = None, verify: bool = False) -> SweepResult:
    """Propagate psi0 (default |N,0,0,down>) across the sweep.

    With ``verify`` the sweep is repeated at half the step and a
    :class:`StepSizeError` is raised if the final <n_c> moves by more than
    1e-6.
    """
    params = config.params
    basis = basis_for(params)
    psi = initial_state(params) if psi0 is None else np.array(psi0, dtype=np.complex128, copy=True)
    if psi.shape != (basis.size,):
        raise ValueError(f"initial state has shape {psi.shape}, expected ({basis.size},)")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    occ = basis.occupations()
    lo, _ = config.t_tilde_span
    n = config.n_steps
    dtt = config.step_tilde
    h = dtt / config.rate

    marks = list(range(0, n, config.store_stride)) + [n]
    t_mids = lo + (np.arange(n) + 0.5) * dtt
    J1s, J2s = pulse_values(params, t_mids) if n else (np.empty(0), np.empty(0))
    prop = _ChebyshevPropagator(params, h) if (config.method == "chebyshev" and n) else None

    pops, norms, snaps = [], [], []
    for k, (start, stop) in enumerate(zip([0] + marks[:-1], marks)):
        if stop > start:
            if prop is not None:
                psi = prop.run(psi, np.atleast_1d(J1s)[start:stop], np.atleast_1d(J2s)[start:stop])
            else:
                psi = _eig_steps(params, psi, t_mids[start:stop], h)
        p, nrm = _observables(psi, occ)
        pops.append(p)
        norms.append(nrm)
        snaps.append(psi.copy())
    steps = np.array(marks, dtype=float)
    t_tildes = lo + steps * dtt
    result = SweepResult(steps * h * params.K, t_tildes, np.array(pops), np.array(norms),
                         np.array(snaps), psi.copy(), config)
    if verify and n:
        fine = evolve(config.refined(), psi0)
        change = abs(fine.populations[-1, 2] - result.populations[-1, 2])
        if change > STEP_TOL:
            raise StepSizeError(f"halving the step changed final <n_c> by {change:.3g} > {STEP_TOL:g}")
    return result


def adiabatic_projection(psi: np.ndarray, sl: SpectrumSlice) -> np.ndarray:
    if psi.shape[0] != sl.dim:
        raise ValueError(f"state dimension {psi.shape[0]} does not match slice dimension {sl.dim}")
    amp = sl.vectors.conj().T @ psi
    return amp.real**2 + amp.imag**2


def participation_number(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    return float(1.0 / np.sum(p**2))


def participation_series(result: SweepResult) -> np.ndarray:
    """eta at every stored snapshot (one diagonalization each)."""
    params = result.config.params
    return np.array([participation_number(adiabatic_projection(psi, diagonalize(params, t)))
                     for t, psi in zip(result.t_tildes, result.snapshots)])


@lru_cache(maxsize=8)
def _exchange_table(N: int):
    basis = hamiltonian_terms(N).basis
    return {(i, j): exchange_matrix(basis, i, j) for i in MODES for j in MODES}


def single_particle_density(psi: np.ndarray, N: int) -> np.ndarray:
    """rho_ij = <A_i^dag A_j> / N for A in (a, b, c, s^-)."""
    table = _exchange_table(N)
    rho = np.empty((4, 4), dtype=complex)
    for i, mi in enumerate(MODES):
        for j, mj in enumerate(MODES):
            rho[i, j] = np.vdot(psi, table[mi, mj] @ psi) / N
    return rho


def single_particle_purity(psi: np.ndarray, N: int) -> float:
    rho = single_particle_density(psi, N)
    return float(np.trace(rho @ rho).real)


@dataclass(frozen=True)
class PurityPoint:
    t_tilde: float
    gamma: float
    index: int
    overlap: float = 1.0
    ambiguous: bool = False


def ssp_route(params: ModelParams, slices: list[SpectrumSlice],
              branch: SPBranch | None = None) -> tuple[list[TrackPoint], SPBranch]:
    """Eigenstates along the SSP: at each slice the one closest to the SSP's quantum image."""
    t_grid = np.array([sl.t_tilde for sl in slices])
    if branch is None:
        branch = continue_branch(params, t_grid)
    if len(branch) != len(slices):
        raise ValueError(f"SP branch broke down at t_tilde={branch.breakpoint}; route needs one SP per slice")
    basis = basis_for(params)
    refs = [quantum_image(sol.state, basis) for sol in branch.solutions]
    return track_branch(slices, 0, references=refs), branch


def purity_scan(params: ModelParams, slices: list[SpectrumSlice], route: list[TrackPoint] | None = None
                ) -> list[PurityPoint]:
    """gamma along a route; the linear model uses the exact dark state instead."""
    if params.g_c == 0:
        out = []
        for sl in slices:
            psi = build_dark_state(params, sl.t_tilde)
            ov = np.abs(sl.vectors.conj().T @ psi) ** 2
            nu = int(np.argmax(ov))
            out.append(PurityPoint(sl.t_tilde, single_particle_purity(psi, params.N), nu, float(ov[nu])))
        return out
    if route is None:
        route, _ = ssp_route(params, slices)
    if len(route) != len(slices):
        raise ValueError("route and slices must have the same length")
    return [PurityPoint(sl.t_tilde, single_particle_purity(sl.vectors[:, pt.index], params.N),
                        pt.index, pt.overlap, pt.ambiguous)
            for sl, pt in zip(slices, route)]


def efficiency(config: SweepConfig, psi0: np.ndarray | None = None) -> float:
    """P = <n_c>_end / N."""
    res = evolve(config, psi0)
    return float(res.populations[-1, 2] / config.params.N)


@dataclass(frozen=True)
class EfficiencyCell:
    N: int
    rate: float
    P: float
    error: str | None = None


@dataclass(frozen=True)
class EfficiencyTable:
    cells: tuple[EfficiencyCell, ...]

    def value(self, N: int, rate: float) -> float:
        for c in self.cells:
            if c.N == N and c.rate == rate:
                return c.P
        raise KeyError((N, rate))

    @property
    def failures(self) -> list[EfficiencyCell]:
        return [c for c in self.cells if c.error is not None]


def efficiency_vs_N(N_list, rate_list, family: dict | None = None,
                    t_tilde_span: tuple[float, float] = (0.0, T_END_DEFAULT),
                    dt_tilde: float = DT_TILDE_DEFAULT, threads: int = 1) -> EfficiencyTable:
    """P(N, rate) over the scaled family; rows ordered by (N, rate) as given."""
    family = family or {}
    keys = [(int(N), float(r)) for N in N_list for r in rate_list]

    def run(key):
        N, rate = key
        try:
            params = ModelParams.scaled_family(N, **family)
            return EfficiencyCell(N, rate, efficiency(SweepConfig(params, rate, t_tilde_span, dt_tilde=dt_tilde)))
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            return EfficiencyCell(N, rate, math.nan, f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(run, keys))
    else:
        cells = [run(k) for k in keys]
    return EfficiencyTable(tuple(cells))


__all__ = [
    "SweepConfig", "SweepResult", "StepSizeError", "PurityPoint", "EfficiencyCell", "EfficiencyTable",
    "build_dark_state", "initial_state", "evolve", "adiabatic_projection", "participation_number",
    "participation_series", "single_particle_density", "single_particle_purity", "ssp_route",
    "purity_scan", "efficiency", "efficiency_vs_N", "chebyshev_coefficients",
]
