import numpy as np
import pytest
import scipy.linalg

from qrefrig.frames import (
    HADAMARD, SIGMA1_MINUS, SIGMA1_PLUS, SIGMA_X_MINUS, SIGMA_X_PLUS, SIGMA_Y_MINUS, SIGMA_Y_PLUS, FluxQubitParams,
    build_flux_model, diagonalize_fq1, diagonalizing_unitary, effective_swap_hamiltonian, frame_unitary,
    main_text_split, swap_couplings, verify_rwa,
)
from qrefrig.quantum import (
    IDENTITY2, KET0, KET1, KET_MINUS_X, KET_MINUS_Y, KET_PLUS_Y, SIGMA_X, SIGMA_Y, SIGMA_Z, is_hermitian, kron,
)

P = FluxQubitParams.from_main_text()


def test_splitting_and_angle():
    assert P.omega2 == pytest.approx(1.0)
    assert P.theta == pytest.approx(np.arctan(0.1 / np.sqrt(1 - 0.01)))
    zero = FluxQubitParams(0.1, 1.0, 0.0, 1.1, 0.0, 0.0, 0.1)
    assert zero.theta == 0.0
    with pytest.raises(ValueError):
        FluxQubitParams(0.1, 0.0, 1.0, 1.1, 0.0, 0.0, 0.1).theta


def test_correspondence_with_main_text_couplings():
    g1 = P.g1_raw * P.omega2_bias / P.omega2
    g3 = -P.g3_raw * P.delta2 / P.omega2
    assert g1 == pytest.approx(5e-5) and g3 == pytest.approx(8e-4)


def test_lab_model_hermitian():
    m = build_flux_model(P)
    for t in (0.0, 0.7, 123.4):
        assert is_hermitian(m.hamiltonian(t))


def test_diagonalization_matches_unitary_conjugation():
    d = diagonalize_fq1(P)
    u = d.unitary
    assert np.allclose(u @ u.conj().T, np.eye(8), atol=1e-14)
    lab = build_flux_model(P).hamiltonian.static_part()
    assert np.abs(u @ lab @ u.conj().T - d.model.hamiltonian.static_part()).max() < 1e-12
    # qubit 2 local term becomes (w2/2) s2z
    rot = scipy.linalg.expm(1j * P.theta / 2 * SIGMA_Y)
    local = rot @ (P.omega2_bias / 2 * SIGMA_Z + P.delta2 / 2 * SIGMA_X) @ rot.conj().T
    assert np.allclose(local, P.omega2 / 2 * SIGMA_Z, atol=1e-14)
    e_lab = np.linalg.eigvalsh(lab)
    assert np.allclose(e_lab, np.linalg.eigvalsh(d.model.hamiltonian.static_part()), atol=1e-12)


def test_main_text_split_correspondence():
    main, extra, had = main_text_split(P)
    static = diagonalize_fq1(P).model.hamiltonian.static_part()
    # extra is returned in the same (qubit-3 Hadamard-rotated) frame as main
    assert np.abs(had @ static @ had.conj().T - (main + extra)).max() < 1e-12
    assert np.allclose(HADAMARD @ SIGMA_Z @ HADAMARD, SIGMA_X)


def test_ladder_operators():
    assert np.allclose(SIGMA_Y_PLUS @ KET_MINUS_Y, KET_PLUS_Y)
    assert np.allclose(SIGMA_Y_PLUS @ SIGMA_Y_MINUS - SIGMA_Y_MINUS @ SIGMA_Y_PLUS, SIGMA_Y)
    assert np.allclose(SIGMA_X_PLUS @ SIGMA_X_MINUS - SIGMA_X_MINUS @ SIGMA_X_PLUS, SIGMA_X)
    assert np.allclose(SIGMA1_MINUS @ KET0, KET1)


def test_flip_flop_identity():
    lhs = 0.5 * (kron(SIGMA_X, SIGMA_Z) + kron(SIGMA_Y, SIGMA_X))
    assert np.allclose(lhs, kron(SIGMA1_MINUS, SIGMA_Y_PLUS) + kron(SIGMA1_PLUS, SIGMA_Y_MINUS), atol=1e-15)
    rhs = 1j * (kron(SIGMA_Y_PLUS, SIGMA_X_MINUS) - kron(SIGMA_Y_MINUS, SIGMA_X_PLUS))
    assert np.allclose(rhs, -0.5 * (kron(SIGMA_X, SIGMA_Z) + kron(SIGMA_Z, SIGMA_Y)), atol=1e-15)


@pytest.mark.parametrize("convention", ["quoted", "derived"])
def test_effective_hamiltonian(convention):
    h = effective_swap_hamiltonian(P, convention)
    assert np.abs(h - h.conj().T).max() < 1e-14
    c1, _ = swap_couplings(P, convention)
    exc = kron(KET0, KET_MINUS_Y, KET_MINUS_X)
    flip = kron(KET1, KET_PLUS_Y, KET_MINUS_X)
    assert abs(flip.conj() @ h @ exc) == pytest.approx(abs(c1))


def test_effective_requires_resonance():
    off = FluxQubitParams(0.1, P.omega2_bias, P.delta2, 1.2, P.g1_raw, P.g3_raw, 0.1)
    with pytest.raises(ValueError):
        effective_swap_hamiltonian(off)


def test_frame_unitary_is_unitary():
    for t in (0.0, 3.3, 1e4):
        w = frame_unitary(P, t)
        assert np.allclose(w @ w.conj().T, np.eye(8), atol=1e-13)


@pytest.mark.parametrize("lam, tol", [(0.1, 5e-3), (0.01, 5e-5)])
def test_zero_couplings_trivial(lam, tol):
    # only the drive's counter-rotating terms separate the two frames; their effect scales as (lam/w2)^2
    p = FluxQubitParams(lam, P.omega2_bias, P.delta2, 1.0 + lam, 0.0, 0.0, lam)
    rep = verify_rwa(p, horizon=200.0, dt=0.02, sample_spacing=2.0)
    assert rep.swap_frequency_full == 0.0 and rep.swap_frequency_eff == 0.0
    assert rep.min_fidelity == pytest.approx(1.0, abs=tol)


def test_rwa_strong_coupling_is_fast():
    # g1 20x the default: swap period ~3000, still deep in the perturbative regime
    p = FluxQubitParams.from_main_text(g1=1e-3, g3=0.0)
    rep = verify_rwa(p)
    assert not rep.regime_warning
    assert rep.relative_error < 0.05
    assert rep.min_fidelity > 0.8
