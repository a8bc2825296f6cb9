"""Excitation-conserving Fock basis for three cavities and one qubit.

States are |n_a, n_b, n_c, s_z> with n_a + n_b + n_c + (s_z + 1/2) = N.
The qubit sits in cavity c. Only operators that conserve the total
excitation number are representable here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np
import scipy.sparse as sps

MAX_EXCITATION = 200
DROP_TOL = 1e-15

MODES = ("a", "b", "c", "s")


class Qubit(IntEnum):
    DOWN = 0
    UP = 1

    @property
    def sz(self) -> float:
        return self.value - 0.5


class FockState(NamedTuple):
    n_a: int
    n_b: int
    n_c: int
    qubit: Qubit

    @property
    def sz(self) -> float:
        return self.qubit.sz

    @property
    def excitation(self) -> int:
        return self.n_a + self.n_b + self.n_c + int(self.qubit)


@dataclass(frozen=True)
class ConservedBasis:
    """Ordered list of Fock states at fixed total excitation ``N``.

    Ordering is lexicographic in (qubit, n_a, n_b); n_c follows from
    conservation. The qubit-down block comes first.
    """

    N: int
    states: tuple[FockState, ...]
    _index: dict = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, state) -> int:
        n_a, n_b, n_c, q = state
        return self._index[FockState(int(n_a), int(n_b), int(n_c), Qubit(int(q)))]

    def state_of(self, index: int) -> FockState:
        return self.states[index]

    def __contains__(self, state) -> bool:
        try:
            self.index_of(state)
        except (KeyError, ValueError):
            return False
        return True

    def occupations(self) -> np.ndarray:
        """Array of shape (size, 4): columns n_a, n_b, n_c, qubit (0/1)."""
        return np.array([(s.n_a, s.n_b, s.n_c, int(s.qubit)) for s in self.states], dtype=float)

    def basis_vector(self, state) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.index_of(state)] = 1.0
        return v


def enumerate_basis(N: int, max_excitation: int = MAX_EXCITATION) -> ConservedBasis:
    if int(N) != N or N < 1:
        raise ValueError(f"total excitation N must be a positive integer, got {N!r}")
    if N > max_excitation:
        raise ValueError(f"N={N} exceeds the safety cap {max_excitation} (dimension {(N + 1) ** 2})")
    N = int(N)
    states = []
    for q in (Qubit.DOWN, Qubit.UP):
        photons = N - int(q)
        for n_a in range(photons + 1):
            for n_b in range(photons - n_a + 1):
                states.append(FockState(n_a, n_b, photons - n_a - n_b, q))
    index = {s: i for i, s in enumerate(states)}
    return ConservedBasis(N, tuple(states), index)


@dataclass(frozen=True)
class HermitianOperator:
    basis: ConservedBasis
    matrix: sps.csr_matrix
    label: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def __matmul__(self, v):
        return apply(self, v)


def _lower(state: FockState, mode: str):
    """Return (amplitude, state) for A_mode|state>, or None if it vanishes."""
    n_a, n_b, n_c, q = state
    if mode == "a":
        return (np.sqrt(n_a), FockState(n_a - 1, n_b, n_c, q)) if n_a else None
    if mode == "b":
        return (np.sqrt(n_b), FockState(n_a, n_b - 1, n_c, q)) if n_b else None
    if mode == "c":
        return (np.sqrt(n_c), FockState(n_a, n_b, n_c - 1, q)) if n_c else None
    if mode == "s":
        return (1.0, FockState(n_a, n_b, n_c, Qubit.DOWN)) if q == Qubit.UP else None
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _raise(state: FockState, mode: str):
    n_a, n_b, n_c, q = state
    if mode == "a":
        return np.sqrt(n_a + 1), FockState(n_a + 1, n_b, n_c, q)
    if mode == "b":
        return np.sqrt(n_b + 1), FockState(n_a, n_b + 1, n_c, q)
    if mode == "c":
        return np.sqrt(n_c + 1), FockState(n_a, n_b, n_c + 1, q)
    if mode == "s":
        return (1.0, FockState(n_a, n_b, n_c, Qubit.UP)) if q == Qubit.DOWN else None
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def exchange_matrix(basis: ConservedBasis, i: str, j: str) -> sps.csr_matrix:
    """Sparse matrix of A_i^dagger A_j with A in {a, b, c, s^-}.

    Not Hermitian for i != j; its adjoint is ``exchange_matrix(basis, j, i)``.
    """
    rows, cols, vals = [], [], []
    for col, state in enumerate(basis.states):
        low = _lower(state, j)
        if low is None:
            continue
        up = _raise(low[1], i)
        if up is None:
            continue
        amp = low[0] * up[0]
        if abs(amp) > DROP_TOL:
            rows.append(basis.index_of(up[1]))
            cols.append(col)
            vals.append(amp)
    d = basis.size
    return sps.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(d, d))


_HOPS = {"hop_ab": ("a", "b"), "hop_bc": ("b", "c"), "jc_c": ("c", "s")}
_NUMBERS = {"num_a": "a", "num_b": "b", "num_c": "c"}
KINDS = tuple(_HOPS) + tuple(_NUMBERS) + ("sz_c", "identity")


def build_bilinear(basis: ConservedBasis, kind) -> HermitianOperator:
    """Build one excitation-conserving Hermitian term.

    ``kind`` is one of :data:`KINDS`, or a tuple ``("exchange", i, j)`` which
    yields the Hermitian part A_i^dagger A_j + A_j^dagger A_i (the plain
    number operator when i == j).
    """
    if isinstance(kind, tuple):
        if len(kind) != 3 or kind[0] != "exchange":
            raise ValueError(f"unsupported operator kind {kind!r}")
        _, i, j = kind
        m = exchange_matrix(basis, i, j)
        if i != j:
            m = m + m.conj().T
        return HermitianOperator(basis, sps.csr_matrix(m), f"exchange({i},{j})")
    if kind in _HOPS:
        i, j = _HOPS[kind]
        m = exchange_matrix(basis, i, j)
        m = m + m.conj().T
    elif kind in _NUMBERS:
        m = exchange_matrix(basis, _NUMBERS[kind], _NUMBERS[kind])
    elif kind == "sz_c":
        m = sps.diags(basis.occupations()[:, 3] - 0.5).astype(complex)
    elif kind == "identity":
        m = sps.identity(basis.size, dtype=complex)
    else:
        raise ValueError(
            f"operator kind {kind!r} is not an excitation-conserving bilinear; "
            f"expected one of {KINDS} or ('exchange', i, j)"
        )
    m = sps.csr_matrix(m)
    m.eliminate_zeros()
    return HermitianOperator(basis, m, kind)


def apply(op: HermitianOperator, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: operator is {op.shape}, vector has {v.shape[0]} rows")
    return op.matrix @ v
