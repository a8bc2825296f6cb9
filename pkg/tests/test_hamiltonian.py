import numpy as np
import pytest

from cqed_stirap.dynamics import build_dark_state
from cqed_stirap.fock import FockState, Qubit
from cqed_stirap.hamiltonian import (T1_DEFAULT, T2_DEFAULT, ModelParams, assemble, assemble_derivative, basis_for,
                                     crossing_metrics, diagonalize, initial_state_index, pulse_derivatives,
                                     pulse_values, spectrum_scan, track_branch)
from cqed_stirap.otoc import nearest_eigenstate
from cqed_stirap.semiclassical import continue_branch, quantum_image


def test_pulse_centers_and_tails():
    p = ModelParams(N=1)
    assert pulse_values(p, T1_DEFAULT)[0] == 1.0
    assert pulse_values(p, T2_DEFAULT)[1] == 1.0
    J1, J2 = pulse_values(p, np.array([-40.0, 40.0]))
    assert np.all(J1 < 1e-300) and np.all(J2 < 1e-300)
    J1, J2 = pulse_values(p, np.linspace(0, 6, 50))
    assert np.all(J1 > 0) and np.all(J2 > 0)


def test_pulse_derivative_matches_finite_difference():
    p = ModelParams(N=1, K=1.7)
    t, eps = 2.9, 1e-6
    num = (np.array(pulse_values(p, t + eps)) - np.array(pulse_values(p, t - eps))) / (2 * eps)
    np.testing.assert_allclose(pulse_derivatives(p, t), num, rtol=1e-8)


@pytest.mark.parametrize("kw", [dict(N=0), dict(N=3, K=0), dict(N=3, K=-1), dict(N=3, t1_tilde=2.0, t2_tilde=3.0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_scaled_family():
    p = ModelParams.scaled_family(5)
    assert p.g_c * np.sqrt(5) == pytest.approx(0.8944)
    assert p.delta * 5 == pytest.approx(10.0)
    assert p.K * 5 == pytest.approx(20.0)


def test_detuning_only_hamiltonian():
    p = ModelParams(N=4, g_c=0.0)
    H = assemble(p, 100.0).toarray()
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    n_b = basis_for(p).occupations()[:, 1]
    np.testing.assert_allclose(np.diag(H).real, 0.5 * n_b)


def test_single_photon_block():
    p = ModelParams(N=1, g_c=0.0)
    t = 3.1
    J1, J2 = pulse_values(p, t)
    basis = basis_for(p)
    idx = [basis.index_of(FockState(*s, Qubit.DOWN)) for s in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    H = assemble(p, t).toarray()
    expected = np.array([[0, -J1, 0], [-J1, 0.5, -J2], [0, -J2, 0]])
    np.testing.assert_allclose(H[np.ix_(idx, idx)].real, expected, atol=1e-15)
    assert np.min(np.abs(np.linalg.eigvalsh(expected))) < 1e-15


def test_initial_state_energy_vanishes():
    p = ModelParams(N=20, g_c=0.2)
    H = assemble(p, 0.0).toarray()
    k = initial_state_index(p)
    assert H[k, k] == 0


def test_derivative_operator():
    p = ModelParams(N=3, g_c=0.1)
    t, eps = 2.7, 1e-6
    num = (assemble(p, t + eps).toarray() - assemble(p, t - eps).toarray()) / (2 * eps)
    np.testing.assert_allclose(assemble_derivative(p, t).toarray(), num, atol=1e-8)


def test_diagonalize_reconstruction_and_gauge():
    p = ModelParams(N=8, g_c=0.2)
    sl = diagonalize(p, 2.8)
    H = assemble(p, 2.8).toarray()
    V, E = sl.vectors, sl.energies
    assert np.max(np.abs(H - (V * E) @ V.conj().T)) < 1e-9
    assert np.max(np.abs(V.conj().T @ V - np.eye(sl.dim))) < 1e-10
    assert np.all(np.diff(E) >= 0)
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(sl.dim)]
    assert np.max(np.abs(piv.imag)) < 1e-12 and np.all(piv.real > 0)


def test_gauge_is_reproducible():
    p = ModelParams(N=6, g_c=0.1)
    a, b = diagonalize(p, 3.3), diagonalize(p, 3.3)
    assert np.max(np.linalg.norm(a.vectors - b.vectors, axis=0)) < 1e-9


def test_one_excitation_has_exact_zero():
    sl = diagonalize(ModelParams(N=1, g_c=0.0), 3.0)
    assert sl.dim == 4
    assert np.min(np.abs(sl.energies)) < 1e-14
    # with the qubit coupled the 4-site chain has determinant g^2 J1^2, so no zero mode
    p = ModelParams(N=1, g_c=0.2)
    J1, _ = pulse_values(p, 3.0)
    assert np.prod(diagonalize(p, 3.0).energies) == pytest.approx(0.04 * J1**2, rel=1e-10)


def test_dark_state_lies_in_zero_energy_eigenspace():
    p = ModelParams(N=20, g_c=0.0)
    for t in (1.0, 3.06, 5.0):
        sl = diagonalize(p, t)
        zero = np.abs(sl.energies) < 1e-8
        psi = build_dark_state(p, t)
        weight = np.sum(np.abs(sl.vectors[:, zero].conj().T @ psi) ** 2)
        assert weight > 1 - 1e-9


def test_spectrum_scan_shapes_and_single_point():
    p = ModelParams(N=5, g_c=0.1)
    grid = np.linspace(0, 6, 7)
    slices = spectrum_scan(p, grid)
    assert len(slices) == 7 and all(s.dim == 36 for s in slices)
    one = spectrum_scan(p, grid[3:4])[0]
    ref = diagonalize(p, grid[3])
    np.testing.assert_allclose(one.energies, ref.energies, atol=1e-13)
    np.testing.assert_allclose(np.abs(one.vectors), np.abs(ref.vectors), atol=1e-9)


def test_spectrum_scan_threads_match_serial():
    p = ModelParams(N=6, g_c=0.2)
    grid = np.linspace(2, 3, 9)
    a = spectrum_scan(p, grid, threads=1)
    b = spectrum_scan(p, grid, threads=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.energies, y.energies)
        np.testing.assert_array_equal(x.vectors, y.vectors)


@pytest.mark.parametrize("grid", [np.array([]), np.array([1.0, 1.0]), np.array([2.0, 1.0])])
def test_spectrum_scan_rejects_bad_grid(grid):
    with pytest.raises(ValueError):
        spectrum_scan(ModelParams(N=2), grid)


def test_weyl_continuity():
    p = ModelParams(N=8, g_c=0.2)
    grid = np.linspace(2.0, 3.0, 101)
    slices = spectrum_scan(p, grid)
    for a, b in zip(slices, slices[1:]):
        dh = max(np.abs(np.linalg.eigvalsh(assemble_derivative(p, t).toarray())).max() for t in (a.t_tilde, b.t_tilde))
        assert np.max(np.abs(b.energies - a.energies)) <= dh * (b.t_tilde - a.t_tilde) * 1.05 + 1e-12


def test_linear_dark_branch_stays_at_zero():
    p = ModelParams(N=5, g_c=0.0)
    grid = np.linspace(0, 6.0606, 200)
    slices = spectrum_scan(p, grid)
    seed = int(np.argmax(np.abs(slices[0].vectors.conj().T @ build_dark_state(p, 0.0))))
    route = track_branch(slices, seed)
    assert max(abs(pt.energy) for pt in route) < 1e-9


def test_forward_backward_tracking():
    p = ModelParams(N=6, g_c=0.05)
    grid = np.linspace(0, 6.0606, 400)
    slices = spectrum_scan(p, grid)
    seed = initial_state_index(p)
    seed = int(np.argmax(np.abs(slices[0].vectors[seed])))
    fwd = track_branch(slices, seed)
    assert not any(pt.ambiguous for pt in fwd)
    back = track_branch(slices[::-1], fwd[-1].index)
    assert back[-1].index == seed


def test_track_branch_errors():
    with pytest.raises(ValueError):
        track_branch([], 0)
    sl = spectrum_scan(ModelParams(N=2), np.array([0.0, 1.0]))
    with pytest.raises(IndexError):
        track_branch(sl, 99)
    with pytest.raises(ValueError):
        track_branch(sl, 0, references=[np.ones(9)])


def test_reference_indices_by_nearest_ssp_energy(params_g02):
    # reference t~ values are points of a 201-point grid (spacing 6.0606/200)
    grid = np.linspace(0, 6.0606, 201)
    branch = continue_branch(params_g02, grid)
    basis = basis_for(params_g02)
    picked = {}
    for t, ref_nu in ((2.5758, 169), (2.7273, 165), (2.7879, 164), (3.0303, 158)):
        k = int(np.argmin(np.abs(grid - t)))
        sol = branch[k]
        sl = diagonalize(params_g02, grid[k])
        picked[ref_nu] = nearest_eigenstate(sl, sol.energy, quantum_image(sol.state, basis))
    # reference indices are 1-based
    assert picked == {169: 168, 165: 164, 164: 163, 158: 157}


def test_crossing_gap_minimum_at_equal_pulses():
    p = ModelParams(N=1, g_c=0.0)
    grid = np.linspace(2.6, 3.5, 181)
    slices = spectrum_scan(p, grid)
    m = crossing_metrics(p, slices, 0, 3)
    assert m.t_tilde == pytest.approx(0.5 * (T1_DEFAULT + T2_DEFAULT), abs=grid[1] - grid[0])
    J1, J2 = pulse_values(p, m.t_tilde)
    assert m.gap == pytest.approx(np.sqrt(0.25 + 4 * (J1**2 + J2**2)), rel=1e-9)
    assert m.sigma >= 0 and m.gap >= 0


def test_crossing_same_level_is_degenerate():
    p = ModelParams(N=2, g_c=0.1)
    m = crossing_metrics(p, spectrum_scan(p, np.linspace(2, 3, 5)), 3, 3)
    assert m.degenerate and m.gap == 0 and np.isinf(m.ratio)
    assert not m.diabatic_at(1.0)


def test_crossing_index_errors():
    p = ModelParams(N=2)
    sl = spectrum_scan(p, np.array([1.0]))
    with pytest.raises(IndexError):
        crossing_metrics(p, sl, 0, 9)
    with pytest.raises(ValueError):
        crossing_metrics(p, [], 0, 1)
