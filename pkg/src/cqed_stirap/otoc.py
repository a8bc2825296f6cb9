"""Out-of-time-ordered correlators of n_a and n_c at frozen t~.

Everything is evaluated in the eigenbasis of H(t~): with E the energies
and A = V^dag n_a V, the Heisenberg operator is
A(t)_jk = exp(i (E_j - E_k) t) A_jk, and

    O_nu(t) = sum_nu' |<nu| [n_a(t), n_c] |nu'>|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import build_bilinear
from .hamiltonian import ModelParams, SpectrumSlice, basis_for, diagonalize

DEFAULT_TIMES = np.linspace(0.0, 2000.0, 4001)
_CHUNK = 256


@dataclass(frozen=True)
class OTOCSeries:
    t_tilde: float
    label: float  # eigenstate index, or beta for thermal series
    times: np.ndarray
    values: np.ndarray
    kind: str = "microcanonical"


def _to_eigenbasis(op, sl: SpectrumSlice) -> np.ndarray:
    m = op.matrix if hasattr(op, "matrix") else op
    if m.shape != (sl.dim, sl.dim):
        raise ValueError(f"operator shape {m.shape} does not match slice dimension {sl.dim}")
    V = sl.vectors
    return V.conj().T @ (m @ V)


def heisenberg_matrix(A, sl: SpectrumSlice, t: float) -> np.ndarray:
    """A(t) in the eigenbasis of the slice."""
    A0 = _to_eigenbasis(A, sl)
    if t == 0:
        return A0
    E = sl.energies
    return A0 * np.exp(1j * np.subtract.outer(E, E) * t)


def _number_ops(params: ModelParams, sl: SpectrumSlice):
    basis = basis_for(params)
    A = _to_eigenbasis(build_bilinear(basis, "num_a"), sl)
    C = _to_eigenbasis(build_bilinear(basis, "num_c"), sl)
    return A, C


def commutator_rows(A: np.ndarray, C: np.ndarray, energies: np.ndarray, nu: int, times) -> np.ndarray:
    """Row ``nu`` of [A(t), C] for each time; shape (len(times), dim)."""
    times = np.asarray(times, dtype=float)
    E = energies
    out = np.empty((times.size, E.size), dtype=complex)
    for lo in range(0, times.size, _CHUNK):
        t = times[lo:lo + _CHUNK]
        ph = np.exp(1j * np.outer(t, E))  # e^{i E_k t}
        # (A(t) C)_{nu j} = e^{i E_nu t} sum_k A_{nu k} e^{-i E_k t} C_{kj}
        r1 = (np.exp(1j * E[nu] * t)[:, None]) * ((A[nu][None, :] * ph.conj()) @ C)
        # (C A(t))_{nu j} = sum_k C_{nu k} e^{i E_k t} A_{kj} e^{-i E_j t}
        r2 = ((C[nu][None, :] * ph) @ A) * ph.conj()
        out[lo:lo + _CHUNK] = r1 - r2
    return out


def microcanonical_otoc(params: ModelParams, t_tilde: float, nu: int, times=DEFAULT_TIMES,
                        sl: SpectrumSlice | None = None) -> OTOCSeries:
    if sl is None:
        sl = diagonalize(params, t_tilde)
    if not 0 <= nu < sl.dim:
        raise IndexError(f"eigenstate index {nu} out of range for dimension {sl.dim}")
    A, C = _number_ops(params, sl)
    rows = commutator_rows(A, C, sl.energies, nu, times)
    values = np.sum(rows.real**2 + rows.imag**2, axis=1)
    return OTOCSeries(float(t_tilde), nu, np.asarray(times, dtype=float), values)


def all_state_otoc(params: ModelParams, sl: SpectrumSlice, times) -> np.ndarray:
    """O_nu(t) for every nu; shape (len(times), dim). Costs one d^3 product per time."""
    A, C = _number_ops(params, sl)
    E = sl.energies
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, E.size))
    for k, t in enumerate(times):
        At = A * np.exp(1j * np.subtract.outer(E, E) * t)
        comm = At @ C - C @ At
        out[k] = np.sum(comm.real**2 + comm.imag**2, axis=1)
    return out


def thermal_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if math.isinf(beta):
        w = (energies == energies.min()).astype(float)
    else:
        w = np.exp(-beta * (energies - energies.min()))
    return w / w.sum()


def thermal_otoc(params: ModelParams, t_tilde: float, beta: float, times=None,
                 sl: SpectrumSlice | None = None) -> OTOCSeries:
    """Boltzmann-weighted average of the eigenstate OTOCs."""
    if times is None:
        times = np.linspace(0.0, 50.0, 500)
    if sl is None:
        sl = diagonalize(params, t_tilde)
    w = thermal_weights(sl.energies, beta)
    values = all_state_otoc(params, sl, times) @ w
    return OTOCSeries(float(t_tilde), beta, np.asarray(times, dtype=float), values, "thermal")


def nearest_eigenstate(sl: SpectrumSlice, energy: float, reference: np.ndarray | None = None,
                       tie_tol: float = 1e-9) -> int:
    """Eigen index closest in energy; near-ties go to the larger overlap with ``reference``."""
    dist = np.abs(sl.energies - energy)
    best = np.flatnonzero(dist <= dist.min() + tie_tol)
    if reference is None or best.size == 1:
        return int(best[0])
    ov = np.abs(sl.vectors[:, best].conj().T @ reference)
    return int(best[np.argmax(ov)])


@dataclass(frozen=True)
class GrowthFit:
    t_start: float | None
    t_end: float | None
    rate: float
    saturation: float
    rise_decades: float
    empty: bool

    @property
    def window(self):
        return (self.t_start, self.t_end)


def fit_growth(series, smooth_fraction: float = 0.05, tail_fraction: float = 0.25,
               min_rise_decades: float = 0.5, plateau_margin: float = math.log(2.0)) -> GrowthFit:
    """Locate an exponential growth window preceding saturation.

    The log of the series is smoothed with a running mean over
    ``smooth_fraction`` of the points. The saturation level is the mean of
    the smoothed log over the final ``tail_fraction``. The window ends where
    the smoothed curve first comes within ``plateau_margin`` of saturation
    and starts at the smoothed minimum before that. Growth counts only if it
    spans at least ``min_rise_decades``; the rate is then the least-squares
    slope of log O over the window.
    """
    times = np.asarray(series.times if hasattr(series, "times") else series[0], dtype=float)
    values = np.asarray(series.values if hasattr(series, "values") else series[1], dtype=float)
    keep = values > 1e-14
    if keep.sum() < 10:
        raise ValueError("fit_growth needs at least 10 points above 1e-14")
    t, y = times[keep], np.log(values[keep])
    width = max(1, int(round(smooth_fraction * t.size)))
    ys = np.convolve(y, np.ones(width) / width, mode="valid")
    ts = t[width // 2: width // 2 + ys.size]
    n_tail = max(1, int(round(tail_fraction * ys.size)))
    plateau = ys[-n_tail:].mean()
    saturation = float(np.exp(y[-max(1, int(round(tail_fraction * y.size))):]).mean())

    reached = np.flatnonzero(ys >= plateau - plateau_margin)
    i_end = int(reached[0])
    i_start = int(np.argmin(ys[: i_end + 1]))
    rise = (ys[i_end] - ys[i_start]) / math.log(10.0)
    sel = (t >= ts[i_start]) & (t <= ts[i_end])
    if rise < min_rise_decades or sel.sum() < 3:
        return GrowthFit(None, None, 0.0, saturation, float(max(rise, 0.0)), True)
    slope = float(np.polyfit(t[sel], y[sel], 1)[0])
    if slope <= 0:
        return GrowthFit(None, None, 0.0, saturation, float(rise), True)
    return GrowthFit(float(ts[i_start]), float(ts[i_end]), slope, saturation, float(rise), False)
