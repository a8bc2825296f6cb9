"""Mean-field dynamics, stationary points and Lyapunov exponents.

The mean-field state replaces <a>, <b>, <c>, <s^->, <s^z> by c-numbers.
Stationary points (SPs) are solutions that only rotate as exp(-i mu t);
they solve

    J1 b + mu a = 0
    delta b - J1 a - J2 c - mu b = 0
    J2 b - g s + mu c = 0
    2 g c s_z + mu s = 0

together with |a|^2+|b|^2+|c|^2+s_z+1/2 = N and |s|^2 + s_z^2 = 1/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import lgamma

import numpy as np

from . import _kernels
from .fock import ConservedBasis
from .hamiltonian import ModelParams, pulse_values

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200
BACKTRACK_HALVINGS = 20
SSP_B_FRACTION = 0.05


class SPDivergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeanFieldState:
    a: complex
    b: complex
    c: complex
    s: complex
    sz: float

    @classmethod
    def decoupled(cls, N: int) -> "MeanFieldState":
        """All photons in cavity a, qubit down."""
        return cls(complex(math.sqrt(N)), 0j, 0j, 0j, -0.5)

    @classmethod
    def from_vector(cls, y) -> "MeanFieldState":
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), complex(y[4], y[5]), complex(y[6], y[7]), float(y[8]))

    def to_vector(self) -> np.ndarray:
        return np.array([self.a.real, self.a.imag, self.b.real, self.b.imag,
                         self.c.real, self.c.imag, self.s.real, self.s.imag, self.sz])

    @property
    def populations(self) -> tuple[float, float, float, float]:
        return abs(self.a) ** 2, abs(self.b) ** 2, abs(self.c) ** 2, self.sz

    @property
    def excitation(self) -> float:
        n_a, n_b, n_c, sz = self.populations
        return n_a + n_b + n_c + sz + 0.5

    @property
    def spin_length(self) -> float:
        return abs(self.s) ** 2 + self.sz**2

    def rotated(self, phase: float) -> "MeanFieldState":
        u = complex(math.cos(phase), math.sin(phase))
        return MeanFieldState(self.a * u, self.b * u, self.c * u, self.s * u, self.sz)


def mean_field_rhs(state: MeanFieldState, params: ModelParams, t_tilde: float) -> MeanFieldState:
    J1, J2 = pulse_values(params, t_tilde)
    out = np.empty(9)
    _kernels.mf_rhs(state.to_vector(), J1, J2, params.delta, params.g_c, out)
    return MeanFieldState.from_vector(out)


def classical_energy(state: MeanFieldState, params: ModelParams, t_tilde: float) -> float:
    J1, J2 = pulse_values(params, t_tilde)
    a, b, c, s = state.a, state.b, state.c, state.s
    return float(
        params.delta * abs(b) ** 2
        + 2.0 * params.g_c * (c.conjugate() * s).real
        - 2.0 * J1 * (a.conjugate() * b).real
        - 2.0 * J2 * (b.conjugate() * c).real
    )


def integrate(state: MeanFieldState, params: ModelParams, t_tilde: float, duration: float,
              h: float = 1e-3, samples: int = 1) -> np.ndarray:
    """RK4 flow at frozen t~; returns (samples+1, 9) array of state vectors.

    ``duration`` and ``h`` are in units of 1/K.
    """
    J1, J2 = pulse_values(params, t_tilde)
    steps = max(1, int(round(duration / h / samples)))
    h = duration / (steps * samples)
    traj = _kernels.rk4_trajectory(state.to_vector(), J1, J2, params.delta, params.g_c, h, steps, samples)
    if not np.all(np.isfinite(traj)):
        raise IntegrationError("mean-field trajectory became non-finite")
    return traj


# -- stationary points -----------------------------------------------------

def _unpack(x):
    a = complex(x[0])
    b = complex(x[1], x[2])
    c = complex(x[3], x[4])
    s = complex(x[5], x[6])
    return a, b, c, s, float(x[7]), float(x[8])


def _pack(state: MeanFieldState, mu: float) -> np.ndarray:
    st = state
    if abs(st.a) > 0:
        st = st.rotated(-math.atan2(st.a.imag, st.a.real))
    return np.array([st.a.real, st.b.real, st.b.imag, st.c.real, st.c.imag,
                     st.s.real, st.s.imag, st.sz, mu])


def sp_residual(state: MeanFieldState, mu: float, params: ModelParams, t_tilde: float) -> np.ndarray:
    """Residuals of the four complex SP equations (Re, Im interleaved) and the two constraints.

    The state is first rotated so that ``a`` is real and non-negative.
    """
    return _residual(_pack(state, mu), params, t_tilde)


def _residual(x, params: ModelParams, t_tilde: float) -> np.ndarray:
    a, b, c, s, sz, mu = _unpack(x)
    J1, J2 = pulse_values(params, t_tilde)
    g, d = params.g_c, params.delta
    eqs = (
        J1 * b + mu * a,
        d * b - J1 * a - J2 * c - mu * b,
        J2 * b - g * s + mu * c,
        2.0 * g * c * sz + mu * s,
    )
    r = np.empty(10)
    for k, e in enumerate(eqs):
        r[2 * k] = e.real
        r[2 * k + 1] = e.imag
    r[8] = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + sz + 0.5 - params.N
    r[9] = abs(s) ** 2 + sz**2 - 0.25
    return r


def _jacobian(x, params: ModelParams, t_tilde: float) -> np.ndarray:
    a, b, c, s, sz, mu = _unpack(x)
    J1, J2 = pulse_values(params, t_tilde)
    g, d = params.g_c, params.delta
    # columns: a_r, b_r, b_i, c_r, c_i, s_r, s_i, s_z, mu
    cj = np.zeros((4, 9), dtype=complex)
    cj[0, [0, 1, 2, 8]] = [mu, J1, 1j * J1, a]
    cj[1, [0, 1, 2, 3, 4, 8]] = [-J1, d - mu, 1j * (d - mu), -J2, -1j * J2, -b]
    cj[2, [1, 2, 3, 4, 5, 6, 8]] = [J2, 1j * J2, mu, 1j * mu, -g, -1j * g, c]
    cj[3, [3, 4, 5, 6, 7, 8]] = [2 * g * sz, 2j * g * sz, mu, 1j * mu, 2 * g * c, s]
    jac = np.zeros((10, 9))
    jac[0:8:2] = cj.real
    jac[1:8:2] = cj.imag
    jac[8, :5] = 2 * np.array([a.real, b.real, b.imag, c.real, c.imag])
    jac[8, 7] = 1.0
    jac[9, 5:8] = 2 * np.array([s.real, s.imag, sz])
    return jac


@dataclass(frozen=True)
class SPSolution:
    state: MeanFieldState
    mu: float
    t_tilde: float
    energy: float
    residual: float
    iterations: int = 0


def solve_sp(params: ModelParams, t_tilde: float, guess: MeanFieldState, mu_guess: float = 0.0,
             tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> SPSolution:
    """Damped Gauss-Newton on the SP residual, gauge fixed to real a >= 0."""
    x = _pack(guess, mu_guess)
    if not np.all(np.isfinite(x)):
        raise ValueError("SP guess must be finite")
    r = _residual(x, params, t_tilde)
    norm = float(np.max(np.abs(r)))
    for it in range(max_iter + 1):
        if norm < tol:
            break
        if it == max_iter:
            raise SPDivergenceError(
                f"SP Newton did not converge in {max_iter} iterations at t_tilde={t_tilde} "
                f"(residual {norm:.3e})", r)
        dx = np.linalg.lstsq(_jacobian(x, params, t_tilde), -r, rcond=None)[0]
        step = 1.0
        l2 = np.linalg.norm(r)
        for _ in range(BACKTRACK_HALVINGS):
            trial = x + step * dx
            r_trial = _residual(trial, params, t_tilde)
            if np.linalg.norm(r_trial) < l2:
                break
            step *= 0.5
        x, r = trial, r_trial
        norm = float(np.max(np.abs(r)))
        if not np.isfinite(norm):
            raise SPDivergenceError(f"SP Newton diverged at t_tilde={t_tilde}", r)
    a, b, c, s, sz, mu = _unpack(x)
    state = MeanFieldState(a, b, c, s, sz)
    if x[0] < 0:
        state = state.rotated(math.pi)
    return SPSolution(state, mu, float(t_tilde), classical_energy(state, params, t_tilde), norm, it)


@dataclass
class SPBranch:
    solutions: list = field(default_factory=list)
    breakpoint: float | None = None
    error: str | None = None

    @property
    def t_tilde(self) -> np.ndarray:
        return np.array([s.t_tilde for s in self.solutions])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.solutions])

    def populations(self) -> np.ndarray:
        return np.array([s.state.populations for s in self.solutions])

    def is_ssp(self, N: int, b_fraction: float = SSP_B_FRACTION) -> bool:
        """True for the a -> c transfer branch with a nearly empty cavity b."""
        if not self.solutions:
            return False
        pops = self.populations()
        transfers = pops[0, 0] > 0.5 * N and pops[-1, 2] > 0.5 * N
        return bool(transfers and np.max(pops[:, 1]) / N < b_fraction)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, k):
        return self.solutions[k]


def continue_branch(params: ModelParams, t_grid, seed: MeanFieldState | None = None,
                    mu_seed: float = 0.0) -> SPBranch:
    """Follow one SP branch along ``t_grid`` with a secant predictor."""
    t_grid = np.asarray(t_grid, dtype=float)
    if seed is None:
        seed = MeanFieldState.decoupled(params.N)
    branch = SPBranch()
    prev = prev2 = None
    for t in t_grid:
        if prev is None:
            x0, mu0 = seed, mu_seed
        elif prev2 is None:
            x0, mu0 = prev.state, prev.mu
        else:
            x1, x2 = _pack(prev.state, prev.mu), _pack(prev2.state, prev2.mu)
            w = (t - prev.t_tilde) / (prev.t_tilde - prev2.t_tilde)
            xp = x1 + w * (x1 - x2)
            x0 = MeanFieldState(complex(xp[0]), complex(xp[1], xp[2]), complex(xp[3], xp[4]),
                                complex(xp[5], xp[6]), float(xp[7]))
            mu0 = float(xp[8])
        try:
            sol = solve_sp(params, t, x0, mu0)
        except SPDivergenceError as exc:
            if prev is None:
                raise
            e_pred = prev.energy if prev2 is None else prev.energy + (prev.energy - prev2.energy) * (
                (t - prev.t_tilde) / (prev.t_tilde - prev2.t_tilde))
            sol = _rescue(params, t, prev, e_pred)
            if sol is None:
                branch.breakpoint = float(t)
                branch.error = str(exc)
                return branch
        branch.solutions.append(sol)
        prev2, prev = prev, sol
    return branch


RESCUE_A = (0.0, 0.2, -0.2, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0)
RESCUE_MU = (1.0, 1.05, 0.95, 1.2, 0.8)


def _rescue(params: ModelParams, t: float, prev: SPSolution, e_pred: float) -> SPSolution | None:
    """Multi-start Newton when continuation stalls.

    The typical stall is a resonance between the branch's mu and the
    lower a-b normal mode, where cavity a briefly takes up O(1) photons.
    Seeds keep c, s, s_z from the last point and vary a (with b from
    J1 b + mu a = 0). The root whose energy is closest to the
    extrapolated branch energy is kept.
    """
    J1, _ = pulse_values(params, t)
    st = prev.state
    best = None
    seeds = [(st, prev.mu)]
    for fm in RESCUE_MU:
        mu = prev.mu * fm
        for a in RESCUE_A:
            b = -mu * a / J1 if J1 > 0 else 0.0
            seeds.append((MeanFieldState(complex(a), complex(b), st.c, st.s, st.sz), mu))
    for guess, mu in seeds:
        try:
            sol = solve_sp(params, t, guess, mu)
        except SPDivergenceError:
            continue
        if best is None or abs(sol.energy - e_pred) < abs(best.energy - e_pred):
            best = sol
    return best


def dark_state_sp(params: ModelParams, t_tilde: float) -> tuple[MeanFieldState, float]:
    """Closed-form SP of the linear (g_c = 0) model: the classical dark state."""
    J1, J2 = pulse_values(params, t_tilde)
    norm = math.hypot(J1, J2)
    cos_t, sin_t = J2 / norm, J1 / norm
    rn = math.sqrt(params.N)
    return MeanFieldState(complex(rn * cos_t), 0j, complex(-rn * sin_t), 0j, -0.5), 0.0


def flow_jacobian(solution: SPSolution, params: ModelParams, eps: float = 1e-6) -> np.ndarray:
    """Linearized flow about an SP in the frame co-rotating with exp(-i mu t)."""
    y = solution.state.to_vector()
    J1, J2 = pulse_values(params, solution.t_tilde)
    jac = np.empty((9, 9))
    fp, fm = np.empty(9), np.empty(9)
    for k in range(9):
        e = np.zeros(9)
        e[k] = eps
        _kernels.mf_rhs(y + e, J1, J2, params.delta, params.g_c, fp)
        _kernels.mf_rhs(y - e, J1, J2, params.delta, params.g_c, fm)
        jac[:, k] = (fp - fm) / (2 * eps)
    mu = solution.mu
    for k in range(4):
        # d/dt of z e^{i mu t}: adds i mu z
        jac[2 * k, 2 * k + 1] += mu
        jac[2 * k + 1, 2 * k] -= mu
    return jac


def stability_exponent(solution: SPSolution, params: ModelParams) -> float:
    """Largest real part of the linearized flow spectrum at an SP."""
    return float(np.max(np.linalg.eigvals(flow_jacobian(solution, params)).real))


# -- Lyapunov exponents ----------------------------------------------------

@dataclass(frozen=True)
class LyapunovConfig:
    delta0: float | None = None  # default 1e-6 * sqrt(N)
    xi: float = 0.1
    M: int = 10_000
    h: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.delta0 is not None and not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")


@dataclass(frozen=True)
class LyapunovSeries:
    t_tilde: float
    m: np.ndarray
    Kt: np.ndarray
    lam: np.ndarray

    @property
    def final(self) -> float:
        return float(self.lam[-1])


def perturbation(config: LyapunovConfig, N: int) -> np.ndarray:
    """Initial displacement: random direction in the 8 measured coordinates."""
    rng = np.random.default_rng(config.seed)
    v = rng.standard_normal(8)
    delta0 = config.delta0 if config.delta0 is not None else 1e-6 * math.sqrt(N)
    out = np.zeros(9)
    out[:8] = v / np.linalg.norm(v) * delta0
    return out


def lyapunov(params: ModelParams, t_tilde: float, base: SPSolution,
             config: LyapunovConfig = LyapunovConfig()) -> LyapunovSeries:
    """Finite-time maximal Lyapunov exponents lambda_m, m = 1..M, at frozen t~.

    Reference and test trajectories are evolved for ``xi`` between resets;
    after each interval the test displacement is rescaled to ``delta0``
    along its current direction.
    """
    J1, J2 = pulse_values(params, t_tilde)
    delta0 = config.delta0 if config.delta0 is not None else 1e-6 * math.sqrt(params.N)
    steps = max(1, int(round(config.xi / config.h)))
    h = config.xi / steps
    ref = base.state.to_vector()
    test = ref + perturbation(config, params.N)
    logs = _kernels.benettin(ref, test, J1, J2, params.delta, params.g_c, h, steps, config.M, delta0)
    if not np.all(np.isfinite(logs)):
        raise IntegrationError(f"Lyapunov integration blew up at t_tilde={t_tilde}")
    m = np.arange(1, config.M + 1)
    Kt = params.K * config.xi * m
    lam = np.cumsum(logs) / Kt
    return LyapunovSeries(float(t_tilde), m, Kt, lam)


@dataclass(frozen=True)
class ChaoticWindow:
    t_lo: float | None
    t_hi: float | None
    threshold: float
    t_grid: np.ndarray
    exponents: np.ndarray

    @property
    def empty(self) -> bool:
        return self.t_lo is None

    def contains(self, t_tilde: float) -> bool:
        return not self.empty and self.t_lo <= t_tilde <= self.t_hi


def chaotic_window(params: ModelParams, t_grid, branch: SPBranch,
                   config: LyapunovConfig = LyapunovConfig(), threshold: float | None = None,
                   reference_t: float | None = None, median_factor: float = 3.0,
                   min_threshold: float = 1e-3) -> ChaoticWindow:
    """Longest contiguous run of grid points whose lambda_M exceeds a threshold.

    Finite-time exponents of regular orbits decay only like log(T)/T, so
    they sit on a floor of a few 1e-3 at M ~ 1e4. By default the threshold
    is ``median_factor`` times the median |lambda_M| over the grid, which
    measures that floor as long as the window is a minority of the points.
    With ``reference_t`` it is instead ten times |lambda_M| at that grid
    point. It is never taken below ``min_threshold`` (units of K).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    by_t = {round(s.t_tilde, 12): s for s in branch.solutions}
    lams = np.empty(t_grid.size)
    for k, t in enumerate(t_grid):
        sol = by_t.get(round(float(t), 12))
        if sol is None:
            raise ValueError(f"branch has no solution at t_tilde={t}")
        lams[k] = lyapunov(params, t, sol, config).final
    if threshold is None:
        if reference_t is not None:
            k_ref = int(np.argmin(np.abs(t_grid - reference_t)))
            threshold = 10.0 * abs(lams[k_ref])
        else:
            threshold = median_factor * float(np.median(np.abs(lams)))
        threshold = max(threshold, min_threshold)
    best = (None, None, 0)
    start = None
    for k, above in enumerate(np.append(lams > threshold, False)):
        if above and start is None:
            start = k
        elif not above and start is not None:
            if k - start > best[2]:
                best = (t_grid[start], t_grid[k - 1], k - start)
            start = None
    lo, hi, _ = best
    return ChaoticWindow(None if lo is None else float(lo), None if hi is None else float(hi),
                         float(threshold), t_grid, lams)


# -- quantum image of a mean-field state -----------------------------------

def quantum_image(state: MeanFieldState, basis: ConservedBasis) -> np.ndarray:
    """Coherent product state of the mean-field amplitudes projected on ``basis``.

    Photon modes are Glauber coherent states with amplitudes a, b, c; the
    qubit is the spin-1/2 state with <s^-> = s and <s^z> = s_z. The result
    is normalized. For the linear dark state it reproduces the two-mode
    condensate exactly.
    """
    down = math.sqrt(max(0.5 - state.sz, 0.0))
    up = state.s / down if down > 1e-12 else complex(math.sqrt(max(0.5 + state.sz, 0.0)))
    occ = basis.occupations()
    amps = np.empty(basis.size, dtype=complex)
    for k, (n_a, n_b, n_c, q) in enumerate(occ.astype(int)):
        log_norm = -0.5 * (lgamma(n_a + 1) + lgamma(n_b + 1) + lgamma(n_c + 1))
        val = complex(math.exp(log_norm))
        for z, n in ((state.a, n_a), (state.b, n_b), (state.c, n_c)):
            if n:
                val *= z**n
        amps[k] = val * (up if q else down)
    nrm = np.linalg.norm(amps)
    if nrm == 0:
        raise ValueError("mean-field state has no weight in this excitation sector")
    return amps / nrm
