import math
import warnings

import numpy as np
import pytest

from qrefrig.dynamics import propagate
from qrefrig.quantum import KET_MINUS_Y, SIGMA_Y, expectation, is_hermitian, ket_to_dm, kron, partial_trace, random_density_matrix
from qrefrig.refrigerators import (
    RefrigeratorConfig, avg_heat_flow, build_refrigerator_I, build_refrigerator_II, cop, initial_state_I,
    initial_state_II, reset_qubit2, run_protocol, run_protocol_I, run_protocol_II, verify_w_ini, w_ini,
)
from qrefrig.thermo import accumulate, energy, flux_observers

# couplings and rates 10x the defaults (drive and splittings unchanged): runs are 10x shorter and the
# weak-coupling hierarchy g1, gamma2 << lam is kept, so the dimensionless outputs barely move
FAST = RefrigeratorConfig(g1=5e-4, g3=8e-3, gamma2=1e-3, gamma3=0.1, pilot_horizon_II=2e4)


@pytest.fixture(scope="module")
def fast_I():
    return run_protocol_I(FAST)


@pytest.fixture(scope="module")
def fast_II():
    return run_protocol_II(FAST)


def test_defaults():
    cfg = RefrigeratorConfig()
    assert (cfg.omega1, cfg.omega2, cfg.omega3, cfg.lam) == (0.1, 1.0, 1.1, 0.1)
    assert (cfg.g1, cfg.g3, cfg.gamma2, cfg.gamma3, cfg.temperature) == (5e-5, 8e-4, 1e-4, 1e-2, 0.1)
    assert cfg.interval == 1e4 and cfg.omega_d == 1.0 and cfg.stride == 10


def test_off_resonance_rejected():
    with pytest.raises(ValueError, match="resonance"):
        build_refrigerator_II(RefrigeratorConfig(omega3=1.2))
    build_refrigerator_II(RefrigeratorConfig(omega3=1.2, allow_detuning=True))


def test_rate_ordering_warning():
    with pytest.warns(UserWarning):
        build_refrigerator_II(RefrigeratorConfig(gamma3=1e-4))


def test_digest_tracks_values():
    assert RefrigeratorConfig().digest() == RefrigeratorConfig().digest()
    assert RefrigeratorConfig().digest() != RefrigeratorConfig(g3=1e-3).digest()


def test_models_hermitian_and_sized():
    m1, b1 = build_refrigerator_I(RefrigeratorConfig())
    m2, b2 = build_refrigerator_II(RefrigeratorConfig())
    for m in (m1, m2):
        for t in (0.0, 1.3, 77.0):
            assert is_hermitian(m.hamiltonian(t))
    assert m1.dim == 4 and m2.dim == 8
    assert len(m1.channels) == 2 and len(m2.channels) == 4


def test_bipartition_reassembles_hamiltonian():
    m, bip = build_refrigerator_II(RefrigeratorConfig())
    for t in (0.0, 2.1):
        assert np.allclose(bip.full_hamiltonian(t), m.hamiltonian(t))


def test_initial_states():
    r1 = initial_state_I()
    assert np.isclose(np.trace(r1), 1)
    assert np.allclose(partial_trace(r1, build_refrigerator_I(FAST)[0].layout, [1]), ket_to_dm(KET_MINUS_Y))
    r2 = initial_state_II(RefrigeratorConfig())
    p3 = partial_trace(r2, build_refrigerator_II(RefrigeratorConfig())[0].layout, [2])
    assert p3[0, 0].real == pytest.approx(1 / (math.exp(11) + 1), rel=1e-9)


def test_reset_replaces_only_ancilla(rng):
    m, _ = build_refrigerator_II(RefrigeratorConfig())
    rho = random_density_matrix(8, rng)
    out = reset_qubit2(rho, m.layout)
    assert np.allclose(partial_trace(out, m.layout, [1]), ket_to_dm(KET_MINUS_Y))
    assert np.allclose(partial_trace(out, m.layout, [0, 2]), partial_trace(rho, m.layout, [0, 2]))


@pytest.mark.parametrize("lam_prime", [0.05, 0.1, 0.2, 0.37])
def test_w_ini_quadrature(lam_prime):
    assert verify_w_ini(lam_prime) == pytest.approx(w_ini(), abs=1e-10)


def test_scalar_helpers():
    assert cop(0.04, 29.4) == pytest.approx(0.04 / 29.4)
    assert avg_heat_flow(0.04, 2e5) == pytest.approx(2e-7)
    with pytest.raises(ValueError):
        cop(0.04, 0.0)
    with pytest.raises(ValueError):
        avg_heat_flow(0.04, 0.0)


def test_drive_keeps_ancilla_spin_locked():
    cfg = RefrigeratorConfig(g1=0.0, gamma2=0.0, t_int=100.0)
    m, _ = build_refrigerator_I(cfg)
    traj = propagate(m, initial_state_I(), (0.0, 200.0), 0.02, 50)
    # without coupling the ancilla just precesses; |<sigma_y>| in the rotating frame stays 1
    ry = partial_trace(traj.final_state, m.layout, [1])
    # purity is lost only through the integrator's O(dt^4) error
    assert abs(np.trace(ry @ ry)) == pytest.approx(1.0, abs=1e-7)


def test_protocol_I_accounting(fast_I):
    r = fast_I
    assert r.reset_count == math.floor(6 * r.pilot_fit.T_cool / FAST.interval)
    assert r.W == pytest.approx(r.drive_work + r.reset_count * 0.5)
    assert r.W_ini_total == pytest.approx(0.5 * r.reset_count)
    assert r.COP == pytest.approx(r.Q_out / r.W)
    assert r.t_total == pytest.approx(r.reset_count * FAST.interval)
    assert sum(r.extra["segment_Q_out"]) == pytest.approx(r.Q_out, rel=1e-12)
    t_end, p_end = r.segment_ends
    assert len(t_end) == r.reset_count + 1 and p_end[0] == pytest.approx(0.5)
    assert np.all(np.diff(p_end) < 0)


def test_protocol_I_matches_default_scaling(fast_I):
    # dimensionless outputs agree with the slow default-parameter run to a few percent
    assert fast_I.reset_count == 29
    assert fast_I.Q_out == pytest.approx(0.0422, rel=0.02)
    assert fast_I.W == pytest.approx(29.4, rel=0.03)


def test_protocol_I_explicit_count():
    r = run_protocol_I(FAST, reset_count=3)
    assert r.reset_count == 3 and r.pilot_fit is None
    times = r.trajectory.times
    assert np.count_nonzero(np.diff(times) == 0) == 2


def test_protocol_II_run(fast_II):
    r = fast_II
    p = r.population
    assert p[0] == pytest.approx(0.5) and p[-1] < 0.3
    assert r.Q_out > 0 and r.W > 0
    assert r.t_total == pytest.approx(6 * r.pilot_fit.T_cool, abs=20.0)
    assert abs(r.ledger.Q_A + r.ledger.Q_B + r.ledger.Q_chi) < 1e-8 * r.t_total
    assert r.W == pytest.approx(r.drive_work + 0.5)
    assert np.all(r.trajectory.min_eigenvalues > -1e-10)


def test_protocol_II_closed_first_law():
    cfg = FAST.with_updates(gamma2=0.0, gamma3=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m, bip = build_refrigerator_II(cfg)
    rho0 = initial_state_II(cfg)
    period = 2 * np.pi
    traj = propagate(m, rho0, (0.0, 3 * period), 1e-3, 1, flux_observers(bip))
    led = accumulate(traj, bip)
    du = energy(3 * period, traj.final_state, bip) - energy(0.0, rho0, bip)
    assert led.W_total == pytest.approx(du, abs=1e-9)


def test_stronger_g3_cools_further(fast_II):
    weak = fast_II
    strong = run_protocol_II(FAST.with_updates(g3=1.6e-2))
    assert strong.Q_out > weak.Q_out
    assert strong.steady_population < weak.steady_population


def test_run_protocol_dispatch():
    with pytest.raises(ValueError):
        run_protocol("III", FAST)
