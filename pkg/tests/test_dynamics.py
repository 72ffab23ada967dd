import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from qrefrig import _backend
from qrefrig.dynamics import (
    Constant, FunctionEnvelope, Harmonic, HamiltonianTerm, LindbladChannel, NumericalAbort, OpenSystemModel,
    TimeDependentHamiltonian, dissipator, expm, liouvillian, liouvillian_expm, propagate, rhs, thermal_channels,
)
from qrefrig.quantum import (
    KET0, KET1, P_EXCITED, SIGMA_MINUS, SIGMA_X, SIGMA_Z, SubsystemLayout, embed, expectation, ket_to_dm,
    random_density_matrix, random_hermitian,
)

ONE = SubsystemLayout(1)
TWO = SubsystemLayout(2)


def _random_model(rng, driven=False):
    h = TimeDependentHamiltonian([random_hermitian(4, rng)])
    if driven:
        h = h + TimeDependentHamiltonian([HamiltonianTerm(embed(SIGMA_X, TWO, 1), Harmonic(0.1, 1.0))])
    chans = [LindbladChannel(random_hermitian(4, rng) + 1j * random_hermitian(4, rng), rng.uniform(0.01, 0.1))]
    return OpenSystemModel(TWO, h, chans)


def test_thermal_rates():
    down, up = thermal_channels(SIGMA_MINUS, 1e-4, 1.0, 0.1)
    n = 1 / np.expm1(10.0)
    assert down.rate == pytest.approx(1e-4 * (1 + n), rel=1e-12, abs=0)
    assert up.rate == pytest.approx(1e-4 * n, rel=1e-12, abs=0)
    assert down.rate == pytest.approx(1.0000454e-4, rel=1e-7, abs=0)
    assert up.rate == pytest.approx(4.53999e-9, rel=1e-4, abs=0)
    assert thermal_channels(SIGMA_MINUS, 1e-2, 1.1, 0.1)[0].rate == pytest.approx(1.0000167e-2, rel=1e-7, abs=0)


def test_hamiltonian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        HamiltonianTerm(SIGMA_MINUS, Constant(1.0))


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        LindbladChannel(SIGMA_MINUS, -1.0)


def test_envelope_derivatives(rng):
    h = TimeDependentHamiltonian([
        HamiltonianTerm(SIGMA_Z, Constant(0.5)),
        HamiltonianTerm(SIGMA_X, Harmonic(0.3, 1.7, 0.2)),
        HamiltonianTerm(SIGMA_X, FunctionEnvelope(np.sin, np.cos)),
    ])
    assert h.check_derivatives(rng) < 1e-6


@given(st.integers(0, 2**31 - 1))
def test_rhs_trace_free_and_hermitian(seed):
    rng = np.random.default_rng(seed)
    model = _random_model(rng, driven=True)
    rho = random_density_matrix(4, rng)
    d = rhs(rng.uniform(0, 10), rho, model)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, d.conj().T, atol=1e-12)


def test_dissipator_batch_matches_single(rng):
    chans = thermal_channels(SIGMA_MINUS, 0.1, 1.0, 0.5)
    rhos = np.stack([random_density_matrix(2, rng) for _ in range(4)])
    assert np.allclose(dissipator(rhos, chans)[2], dissipator(rhos[2], chans))


def test_liouvillian_matches_rhs(rng):
    model = _random_model(rng)
    rho = random_density_matrix(4, rng)
    vec = liouvillian(model) @ rho.reshape(-1)
    assert np.allclose(vec.reshape(4, 4), rhs(0.0, rho, model), atol=1e-12)


def test_own_expm_matches_scipy(rng):
    a = liouvillian(_random_model(rng)) * 3.0
    assert np.linalg.norm(expm(a) - scipy.linalg.expm(a)) < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_rk4_matches_expm(seed):
    rng = np.random.default_rng(seed)
    model = _random_model(rng)
    rho0 = random_density_matrix(4, rng)
    traj = propagate(model, rho0, (0.0, 20.0), 0.005)
    assert np.linalg.norm(traj.final_state - liouvillian_expm(model, rho0, 20.0)) < 1e-8


def test_rk4_fourth_order(rng):
    model = _random_model(rng, driven=True)
    rho0 = random_density_matrix(4, rng)
    ref = propagate(model, rho0, (0.0, 5.0), 0.0025).final_state
    e1 = np.linalg.norm(propagate(model, rho0, (0.0, 5.0), 0.04).final_state - ref)
    e2 = np.linalg.norm(propagate(model, rho0, (0.0, 5.0), 0.02).final_state - ref)
    assert 12 < e1 / e2 < 20


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba missing")
def test_backends_agree(rng):
    model = _random_model(rng, driven=True)
    rho0 = random_density_matrix(4, rng)
    a = propagate(model, rho0, (0.0, 30.0), 0.01, 10, backend="numba")
    b = propagate(model, rho0, (0.0, 30.0), 0.01, 10, backend="numpy")
    assert np.allclose(a.times, b.times)
    assert np.abs(a.final_state - b.final_state).max() < 1e-12


def test_remainder_step_lands_on_end(rng):
    model = _random_model(rng)
    rho0 = random_density_matrix(4, rng)
    traj = propagate(model, rho0, (0.0, 1.013), 0.01, 7)
    assert traj.times[-1] == pytest.approx(1.013)
    assert np.linalg.norm(traj.final_state - liouvillian_expm(model, rho0, 1.013)) < 1e-9


def test_observers_and_state_stride(rng):
    model = _random_model(rng)
    proj = embed(P_EXCITED, TWO, 0)
    traj = propagate(
        model, random_density_matrix(4, rng), (0.0, 10.0), 0.01, 10,
        observers={"p": lambda t, s: expectation(s, proj).real}, state_stride=25,
    )
    assert len(traj.times) == 101 and len(traj.aux["p"]) == 101
    assert np.allclose(traj.state_times, [0.0, 2.5, 5.0, 7.5, 10.0])
    assert np.all(traj.min_eigenvalues > -1e-10)


def test_thermalization_single_qubit():
    model = OpenSystemModel(ONE, TimeDependentHamiltonian([0.5 * SIGMA_Z]), thermal_channels(SIGMA_MINUS, 0.05, 1.0, 0.5))
    traj = propagate(model, ket_to_dm(KET0), (0.0, 400.0), 0.02, 100)
    expected = 1 / (np.exp(2.0) + 1)
    assert expectation(traj.final_state, P_EXCITED).real == pytest.approx(expected, abs=1e-7)


def test_coarse_step_aborts():
    model = OpenSystemModel(ONE, TimeDependentHamiltonian([5.0 * SIGMA_Z]), [])
    with pytest.raises(NumericalAbort):
        propagate(model, ket_to_dm(KET1), (0.0, 10.0), 0.5)


def test_stiff_dissipator_aborts():
    model = OpenSystemModel(ONE, TimeDependentHamiltonian([0.01 * SIGMA_Z]), [LindbladChannel(SIGMA_MINUS, 400.0)])
    with pytest.raises(NumericalAbort, match="under-resolves"):
        propagate(model, ket_to_dm(KET0), (0.0, 1.0), 0.01)


def test_positivity_abort_reports_time():
    bad = np.diag([1.2, -0.2]).astype(complex)
    model = OpenSystemModel(ONE, TimeDependentHamiltonian([0.5 * SIGMA_Z]), [])
    with pytest.raises(NumericalAbort) as err:
        propagate(model, bad, (0.0, 1.0), 0.01)
    assert err.value.t == 0.0
    assert err.value.min_eigenvalue == pytest.approx(-0.2)


def test_trajectory_concatenate_and_truncate(rng):
    model = _random_model(rng)
    rho0 = random_density_matrix(4, rng)
    a = propagate(model, rho0, (0.0, 4.0), 0.01, 10, state_stride=10)
    b = propagate(model, a.final_state, (4.0, 8.0), 0.01, 10, state_stride=10)
    whole = a.extended(b)
    ref = propagate(model, rho0, (0.0, 8.0), 0.01, 10, state_stride=10)
    assert np.allclose(whole.times, ref.times)
    cut = whole.truncated(5.0)
    assert cut.times[-1] == pytest.approx(5.0)
    assert np.allclose(cut.final_state, whole.states[np.isclose(whole.state_times, 5.0)][0])
    joined = type(a).concatenate([a, b])
    assert len(joined.times) == len(a.times) + len(b.times)
