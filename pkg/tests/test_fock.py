import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cqed_stirap.fock import (KINDS, MODES, FockState, Qubit, apply, build_bilinear, enumerate_basis,
                              exchange_matrix)


def brute_force_states(N):
    out = set()
    for n_a, n_b, n_c, q in itertools.product(range(N + 1), range(N + 1), range(N + 1), (0, 1)):
        if n_a + n_b + n_c + q == N:
            out.add((n_a, n_b, n_c, q))
    return out


@pytest.mark.parametrize("N,size", [(1, 4), (3, 16), (20, 441)])
def test_basis_size(N, size):
    assert enumerate_basis(N).size == size


def test_basis_matches_exhaustive_enumeration():
    basis = enumerate_basis(3)
    assert {tuple(int(x) for x in s) for s in basis.states} == brute_force_states(3)


def test_basis_ordering_is_lexicographic():
    keys = [(int(s.qubit), s.n_a, s.n_b) for s in enumerate_basis(6).states]
    assert keys == sorted(keys)


@given(st.integers(min_value=1, max_value=15))
def test_index_bijection(N):
    basis = enumerate_basis(N)
    for k, s in enumerate(basis.states):
        assert basis.index_of(s) == k
        assert basis.state_of(k) == s
        assert s.excitation == N and min(s[:3]) >= 0


@pytest.mark.parametrize("N", [0, -1, 2.5, 201])
def test_basis_rejects_bad_N(N):
    with pytest.raises(ValueError):
        enumerate_basis(N)


def test_safety_cap_is_configurable():
    assert enumerate_basis(5, max_excitation=5).size == 36
    with pytest.raises(ValueError, match="safety cap"):
        enumerate_basis(6, max_excitation=5)


def test_hop_ab_single_photon():
    basis = enumerate_basis(1)
    m = build_bilinear(basis, "hop_ab").toarray()
    i = basis.index_of(FockState(0, 1, 0, Qubit.DOWN))
    j = basis.index_of(FockState(1, 0, 0, Qubit.DOWN))
    assert m[i, j] == pytest.approx(1.0)


def test_num_a_on_full_cavity():
    basis = enumerate_basis(20)
    v = basis.basis_vector(FockState(20, 0, 0, Qubit.DOWN))
    np.testing.assert_allclose(apply(build_bilinear(basis, "num_a"), v), 20 * v)


def test_jc_element_two_excitations():
    basis = enumerate_basis(2)
    m = build_bilinear(basis, "jc_c").toarray()
    i = basis.index_of(FockState(0, 0, 1, Qubit.UP))
    j = basis.index_of(FockState(0, 0, 2, Qubit.DOWN))
    assert m[i, j] == pytest.approx(np.sqrt(2))


def _dense_oracle(basis, i, j):
    """A_i^dag A_j from hand-written ladder formulas."""
    d = basis.size
    out = np.zeros((d, d))
    pos = {"a": 0, "b": 1, "c": 2}
    for col, s in enumerate(basis.states):
        n = [s.n_a, s.n_b, s.n_c, int(s.qubit)]
        if j == "s":
            if n[3] != 1:
                continue
            amp, n[3] = 1.0, 0
        else:
            if n[pos[j]] == 0:
                continue
            amp = np.sqrt(n[pos[j]])
            n[pos[j]] -= 1
        if i == "s":
            if n[3] != 0:
                continue
            n[3] = 1
        else:
            n[pos[i]] += 1
            amp *= np.sqrt(n[pos[i]])
        out[basis.index_of(FockState(n[0], n[1], n[2], Qubit(n[3]))), col] = amp
    return out


@pytest.mark.parametrize("i,j", list(itertools.product(MODES, MODES)))
def test_exchange_matches_ladder_oracle(i, j):
    basis = enumerate_basis(2)
    np.testing.assert_allclose(exchange_matrix(basis, i, j).toarray(), _dense_oracle(basis, i, j), atol=1e-15)


def test_exchange_adjoint():
    basis = enumerate_basis(4)
    for i, j in itertools.product(MODES, MODES):
        diff = exchange_matrix(basis, i, j) - exchange_matrix(basis, j, i).conj().T
        assert diff.count_nonzero() == 0


@pytest.mark.parametrize("kind", KINDS + (("exchange", "a", "c"), ("exchange", "b", "s")))
def test_hermiticity(kind):
    op = build_bilinear(enumerate_basis(6), kind)
    assert op.hermiticity_error() < 1e-14


def test_number_operators_commute_exactly():
    basis = enumerate_basis(8)
    A = build_bilinear(basis, "num_a").matrix
    C = build_bilinear(basis, "num_c").matrix
    assert (A @ C - C @ A).count_nonzero() == 0


@pytest.mark.parametrize("kind", ["a", "hop_ac", ("exchange", "a"), ("swap", "a", "b")])
def test_rejects_unknown_kinds(kind):
    with pytest.raises(ValueError):
        build_bilinear(enumerate_basis(2), kind)


def test_apply_identity_and_num_c():
    N = 7
    basis = enumerate_basis(N)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    np.testing.assert_array_equal(apply(build_bilinear(basis, "identity"), v), v)
    e = basis.basis_vector(FockState(0, 0, N, Qubit.DOWN))
    np.testing.assert_allclose(build_bilinear(basis, "num_c") @ e, N * e)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_quadratic_form_is_real(seed):
    basis = enumerate_basis(3)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    for kind in KINDS:
        q = np.vdot(v, apply(build_bilinear(basis, kind), v))
        assert abs(q.imag) < 1e-12 * max(1.0, abs(q))


def test_apply_dimension_mismatch():
    op = build_bilinear(enumerate_basis(3), "num_a")
    with pytest.raises(ValueError, match="dimension"):
        apply(op, np.ones(5))
