import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrefrig.quantum import (
    KET0, KET1, P_EXCITED, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z, SubsystemLayout, check_density_matrix,
    embed, expectation, gibbs_state, insert_qubit_state, is_hermitian, ket_to_dm, kron, min_eigenvalue, partial_trace,
    pauli, permute_qubits, random_density_matrix, random_hermitian, thermal_occupation,
)

seeds = st.integers(0, 2**31 - 1)


def test_pauli_algebra():
    assert np.allclose(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z)
    assert np.allclose(SIGMA_PLUS + SIGMA_MINUS, SIGMA_X)
    assert np.allclose(SIGMA_MINUS @ KET0, KET1)
    assert expectation(ket_to_dm(KET0), SIGMA_Z).real == pytest.approx(1.0)
    assert expectation(ket_to_dm(KET0), P_EXCITED).real == pytest.approx(1.0)


def test_embed_matches_kron():
    lay = SubsystemLayout(3)
    assert np.allclose(embed(SIGMA_X, lay, 1), kron(np.eye(2), SIGMA_X, np.eye(2)))
    assert np.allclose(pauli("z", lay, 2), kron(np.eye(2), np.eye(2), SIGMA_Z))


@given(seeds)
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density_matrix(2, rng) for _ in range(3))
    lay = SubsystemLayout(3)
    rho = kron(a, b, c)
    assert np.allclose(partial_trace(rho, lay, [0]), a)
    assert np.allclose(partial_trace(rho, lay, [1, 2]), kron(b, c))
    # kept sites come back in layout order, whatever order they are requested in
    assert np.allclose(partial_trace(rho, lay, [2, 0]), kron(a, c))


@given(seeds)
def test_partial_trace_preserves_expectations(seed):
    rng = np.random.default_rng(seed)
    lay = SubsystemLayout(2)
    rho = random_density_matrix(4, rng)
    op = random_hermitian(2, rng)
    assert expectation(rho, embed(op, lay, 1)) == pytest.approx(expectation(partial_trace(rho, lay, [1]), op))


def test_partial_trace_batched(rng):
    lay = SubsystemLayout(2)
    rhos = np.stack([random_density_matrix(4, rng) for _ in range(5)])
    out = partial_trace(rhos, lay, [0])
    assert out.shape == (5, 2, 2)
    assert np.allclose(out[3], partial_trace(rhos[3], lay, [0]))


def test_permute_and_insert(rng):
    lay = SubsystemLayout(3)
    a, b, c = (random_density_matrix(2, rng) for _ in range(3))
    assert np.allclose(permute_qubits(kron(a, b, c), lay, [2, 0, 1]), kron(c, a, b))
    assert np.allclose(insert_qubit_state(kron(a, c), b, lay, 1), kron(a, b, c))


def test_thermal_occupation_values():
    assert thermal_occupation(1.0, 0.1) == pytest.approx(1 / np.expm1(10.0), rel=1e-12)
    # the quoted 4.53999e-5 is the Boltzmann factor exp(-10); Bose-Einstein differs at the 5e-5 level
    assert thermal_occupation(1.0, 0.1) == pytest.approx(4.53999e-5, rel=1e-4)
    assert thermal_occupation(0.1, 0.1) == pytest.approx(0.581977, rel=1e-5)
    assert thermal_occupation(1.0, 1e-3) == 0.0
    with pytest.raises(ValueError):
        thermal_occupation(1.0, 0.0)
    with pytest.raises(ValueError):
        thermal_occupation(-1.0, 0.1)


def test_gibbs_excited_population():
    rho = gibbs_state(0.5 * SIGMA_Z, 0.1)
    assert expectation(rho, P_EXCITED).real == pytest.approx(4.53979e-5, rel=1e-5)


@given(seeds, st.integers(1, 4))
def test_random_states_are_valid(seed, rank):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(4, rng, rank=rank)
    check_density_matrix(rho)
    assert is_hermitian(rho)
    assert min_eigenvalue(rho) > -1e-12


def test_check_density_matrix_rejects():
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.0, 1.0]).astype(complex))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.5, -0.5]).astype(complex))
