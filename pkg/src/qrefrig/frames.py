"""Flux-qubit realisation of refrigerator II and its rotating-wave reduction.

The lab-frame model has qubit 2 as a flux qubit with bias ``w2'`` and gap
``D2``, qubit 3 as a flux qubit at zero bias with gap ``D3``, inductive
couplings ``g1' s1x s2z`` and ``g3' s2z s3z``, and a drive
``lam s2y cos(w t)`` at ``w = w2 = sqrt(w2'^2 + D2^2)``.

Three changes of frame reduce it to a static flip-flop Hamiltonian:

* ``U = exp(i theta s2y / 2)``, ``theta = arctan(D2 / w2')`` diagonalises qubit 2;
* ``U1(t) = exp(i w2 t s2z / 2) exp(i w2 t s3x / 2)`` removes the carrier;
* ``U2(t) = exp(i lam t s1z / 2) exp(i lam t s2y / 2) exp(i lam t s3x / 2)``
  removes the spin-lock field, leaving only resonant exchange terms.

Two prefactor conventions exist for the final swap couplings: ``"derived"``
uses the coefficients that follow from the frame algebra above
(``g1' w2'/w2`` and ``g3' D2/(2 w2)``), ``"quoted"`` uses ``g1' w2/w2'`` and
``g3' D2/(2 w2')``.  The 1-2 couplings differ by ``(w2/w2')^2`` and the
2-3 couplings by ``w2/w2'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Harmonic, HamiltonianTerm, OpenSystemModel, TimeDependentHamiltonian, propagate
from .fitting import fit_damped_sinusoid
from .quantum import (
    IDENTITY2, KET0, KET_MINUS_X, KET_MINUS_Y, KET_PLUS_X, KET_PLUS_Y, P_EXCITED,
    SIGMA_X, SIGMA_Y, SIGMA_Z, SubsystemLayout, embed, expectation, kron,
)

LAYOUT3 = SubsystemLayout(3, ("q1", "q2", "q3"))
HADAMARD = (SIGMA_X + SIGMA_Z) / np.sqrt(2)
RESONANCE_TOL = 1e-9


@dataclass(frozen=True)
class FluxQubitParams:
    omega1: float = 0.1
    omega2_bias: float = math.sqrt(1 - 0.1**2)
    delta2: float = 0.1
    delta3: float = 1.1
    g1_raw: float = 5e-5 / math.sqrt(1 - 0.1**2)
    g3_raw: float = 0.0
    lam: float = 0.1
    drive_frequency: float | None = None

    @property
    def omega2(self) -> float:
        return math.hypot(self.omega2_bias, self.delta2)

    @property
    def omega(self) -> float:
        return self.omega2 if self.drive_frequency is None else self.drive_frequency

    @property
    def theta(self) -> float:
        if self.omega2_bias == 0:
            raise ValueError("omega2_bias = 0: diagonalisation angle undefined in the arctan branch")
        return math.atan(self.delta2 / self.omega2_bias)

    @classmethod
    def from_main_text(cls, omega1=0.1, omega2=1.0, omega3=1.1, lam=0.1, g1=5e-5, g3=8e-4, delta2=0.1):
        """Flux parameters whose retained terms reproduce the main-text couplings ``g1``, ``g3``."""
        if not 0 < delta2 < omega2:
            raise ValueError("need 0 < delta2 < omega2")
        bias = math.sqrt(omega2**2 - delta2**2)
        return cls(
            omega1=omega1, omega2_bias=bias, delta2=delta2, delta3=omega3,
            g1_raw=g1 * omega2 / bias, g3_raw=-g3 * omega2 / delta2, lam=lam,
        )

    def scaled(self, g1_factor=1.0, g3_factor=1.0) -> "FluxQubitParams":
        return FluxQubitParams(
            self.omega1, self.omega2_bias, self.delta2, self.delta3, self.g1_raw * g1_factor,
            self.g3_raw * g3_factor, self.lam, self.drive_frequency,
        )

    def check_resonance(self, tol: float = RESONANCE_TOL) -> None:
        d = self.delta3 - self.omega2
        if abs(d - self.omega1) > tol or abs(self.omega1 - self.lam) > tol:
            raise ValueError(
                f"resonance D3 - w2 = w1 = lam violated: D3-w2={d:.6g}, w1={self.omega1:.6g}, lam={self.lam:.6g}"
            )


def _e(op, site):
    return embed(op, LAYOUT3, site)


def build_flux_model(p: FluxQubitParams) -> OpenSystemModel:
    """Closed lab-frame model (no dissipators)."""
    terms = [
        HamiltonianTerm(p.omega1 / 2 * _e(SIGMA_Z, 0)),
        HamiltonianTerm(p.omega2_bias / 2 * _e(SIGMA_Z, 1) + p.delta2 / 2 * _e(SIGMA_X, 1)),
        HamiltonianTerm(_e(SIGMA_Y, 1), Harmonic(p.lam, p.omega)),
        HamiltonianTerm(p.delta3 / 2 * _e(SIGMA_X, 2)),
        HamiltonianTerm(p.g1_raw * _e(SIGMA_X, 0) @ _e(SIGMA_Z, 1)),
        HamiltonianTerm(p.g3_raw * _e(SIGMA_Z, 1) @ _e(SIGMA_Z, 2)),
    ]
    return OpenSystemModel(LAYOUT3, TimeDependentHamiltonian(terms), [])


def rotation(axis_op: np.ndarray, angle: float) -> np.ndarray:
    """``exp(i angle axis_op)`` for a Pauli matrix ``axis_op``."""
    return math.cos(angle) * IDENTITY2 + 1j * math.sin(angle) * axis_op


def diagonalizing_unitary(p: FluxQubitParams) -> np.ndarray:
    return _e(rotation(SIGMA_Y, p.theta / 2), 1)


@dataclass
class DiagonalizedModel:
    unitary: np.ndarray
    model: OpenSystemModel
    h12: np.ndarray
    h23: np.ndarray


def diagonalize_fq1(p: FluxQubitParams) -> DiagonalizedModel:
    """Model after ``U = exp(i theta s2y/2)``, built from the closed-form transformed terms."""
    u = diagonalizing_unitary(p)
    w2 = p.omega2
    mix = p.omega2_bias * _e(SIGMA_Z, 1) - p.delta2 * _e(SIGMA_X, 1)
    h12 = (p.g1_raw / w2) * _e(SIGMA_X, 0) @ mix
    h23 = (p.g3_raw / w2) * mix @ _e(SIGMA_Z, 2)
    terms = [
        HamiltonianTerm(p.omega1 / 2 * _e(SIGMA_Z, 0)),
        HamiltonianTerm(w2 / 2 * _e(SIGMA_Z, 1)),
        HamiltonianTerm(_e(SIGMA_Y, 1), Harmonic(p.lam, p.omega)),
        HamiltonianTerm(p.delta3 / 2 * _e(SIGMA_X, 2)),
        HamiltonianTerm(h12),
        HamiltonianTerm(h23),
    ]
    return DiagonalizedModel(u, OpenSystemModel(LAYOUT3, TimeDependentHamiltonian(terms), []), h12, h23)


def main_text_split(p: FluxQubitParams):
    """Split the diagonalised Hamiltonian (with qubit 3 Hadamard-rotated) into main-text and extra parts.

    Returns ``(main, extra, hadamard3)`` where ``main`` is the static part of
    the main-text refrigerator Hamiltonian with ``g1 = g1' w2'/w2``,
    ``g3 = -g3' D2/w2``, ``w3 = D3`` and ``extra`` collects the terms the RWA
    drops; ``hadamard3`` maps ``s3z <-> s3x``.
    """
    w2 = p.omega2
    g1 = p.g1_raw * p.omega2_bias / w2
    g3 = -p.g3_raw * p.delta2 / w2
    main = (
        p.omega1 / 2 * _e(SIGMA_Z, 0) + w2 / 2 * _e(SIGMA_Z, 1) + p.delta3 / 2 * _e(SIGMA_Z, 2)
        + g1 * _e(SIGMA_X, 0) @ _e(SIGMA_Z, 1) + g3 * _e(SIGMA_X, 1) @ _e(SIGMA_X, 2)
    )
    extra = (
        -(p.g1_raw * p.delta2 / w2) * _e(SIGMA_X, 0) @ _e(SIGMA_X, 1)
        + (p.g3_raw * p.omega2_bias / w2) * _e(SIGMA_Z, 1) @ _e(SIGMA_X, 2)
    )
    return main, extra, _e(HADAMARD, 2)


def frame_unitary(p: FluxQubitParams, t: float) -> np.ndarray:
    """``W(t) = U2(t) U1(t) U`` mapping lab states to the doubly rotating frame."""
    w2 = p.omega2
    u1 = kron(IDENTITY2, rotation(SIGMA_Z, w2 * t / 2), rotation(SIGMA_X, w2 * t / 2))
    u2 = kron(rotation(SIGMA_Z, p.lam * t / 2), rotation(SIGMA_Y, p.lam * t / 2), rotation(SIGMA_X, p.lam * t / 2))
    return u2 @ u1 @ diagonalizing_unitary(p)


def _ladder(ket_up, ket_down):
    return np.outer(ket_up, ket_down.conj())


SIGMA_Y_PLUS = _ladder(KET_PLUS_Y, KET_MINUS_Y)
SIGMA_Y_MINUS = _ladder(KET_MINUS_Y, KET_PLUS_Y)
SIGMA_X_PLUS = _ladder(KET_PLUS_X, KET_MINUS_X)
SIGMA_X_MINUS = _ladder(KET_MINUS_X, KET_PLUS_X)
SIGMA1_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA1_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def swap_couplings(p: FluxQubitParams, convention: str = "quoted") -> tuple[float, float]:
    """``(c1, c3)`` multiplying the 1-2 and 2-3 flip-flop terms."""
    w2, bias = p.omega2, p.omega2_bias
    if bias == 0:
        raise ValueError("omega2_bias must be nonzero")
    if convention == "quoted":
        return p.g1_raw * w2 / bias, p.g3_raw * p.delta2 / (2 * bias)
    if convention == "derived":
        return p.g1_raw * bias / w2, p.g3_raw * p.delta2 / (2 * w2)
    raise ValueError(f"unknown convention {convention!r}")


def effective_swap_hamiltonian(p: FluxQubitParams, convention: str = "quoted", check: bool = True) -> np.ndarray:
    """``c1 (s1- s2y+ + s1+ s2y-) + i c3 (s2y+ s3x- - s2y- s3x+)``."""
    if check:
        p.check_resonance()
    c1, c3 = swap_couplings(p, convention)
    h = c1 * (kron(SIGMA1_MINUS, SIGMA_Y_PLUS, IDENTITY2) + kron(SIGMA1_PLUS, SIGMA_Y_MINUS, IDENTITY2))
    h = h + 1j * c3 * (kron(IDENTITY2, SIGMA_Y_PLUS, SIGMA_X_MINUS) - kron(IDENTITY2, SIGMA_Y_MINUS, SIGMA_X_PLUS))
    return h


@dataclass
class RWAReport:
    swap_frequency_full: float
    swap_frequency_eff: float
    relative_error: float
    min_fidelity: float
    swap_frequency_eff_quoted: float
    relative_error_quoted: float
    min_fidelity_quoted: float
    regime_warning: bool
    horizon: float
    coupling_derived: float
    coupling_quoted: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _swap_frequency(t, pop):
    if np.ptp(pop) < 1e-9:
        return 0.0
    return fit_damped_sinusoid(t, pop).omega


def verify_rwa(p: FluxQubitParams, horizon: float | None = None, dt: float = 0.02, sample_spacing: float = 10.0, backend=None) -> RWAReport:
    """Compare the lab-frame flux model with the effective swap Hamiltonian.

    Both start from qubit 1 excited, qubit 2 in ``|-y>`` and qubit 3 in the
    ground state of ``(D3/2) s3x``.  The swap frequency is the angular
    frequency of qubit 1's excited population; fidelities compare the
    effective state with the lab state mapped through ``W(t)``.
    """
    p.check_resonance()
    c1, c3 = swap_couplings(p, "derived")
    rate = max(abs(c1), abs(c3))
    if horizon is None:
        horizon = 2 * (2 * np.pi / (2 * rate)) if rate > 0 else 1000.0
    regime = max(abs(p.g1_raw), abs(p.g3_raw), abs(p.lam)) > p.omega2 / 10
    psi0 = kron(KET0[:, None], KET_MINUS_Y[:, None], KET_MINUS_X[:, None])[:, 0]
    rho0 = np.outer(psi0, psi0.conj())
    stride = max(1, int(round(sample_spacing / dt)))
    lab_model = build_flux_model(p)
    # lab state as seen from the diagonal frame at t=0 is U^dag rho0 U
    u = diagonalizing_unitary(p)
    lab = propagate(lab_model, u.conj().T @ rho0 @ u, (0.0, horizon), dt, stride, state_stride=1, backend=backend)
    proj1 = embed(P_EXCITED, LAYOUT3, 0)
    pop_full = expectation(lab.states, proj1).real
    freq_full = _swap_frequency(lab.state_times, pop_full)

    results = {}
    for conv in ("derived", "quoted"):
        heff = effective_swap_hamiltonian(p, conv, check=False)
        e, v = np.linalg.eigh(heff)
        coeffs = v.conj().T @ psi0
        fids = []
        pops = []
        for t, rl in zip(lab.state_times, lab.states):
            psi = v @ (np.exp(-1j * e * t) * coeffs)
            w = frame_unitary(p, t)
            rot = w @ rl @ w.conj().T
            fids.append(float(np.real(psi.conj() @ rot @ psi)))
            pops.append(float(np.real(psi.conj() @ proj1 @ psi)))
        freq_eff = _swap_frequency(lab.state_times, np.array(pops))
        rel = abs(freq_full - freq_eff) / freq_eff if freq_eff > 0 else (0.0 if freq_full == 0 else np.inf)
        results[conv] = (freq_eff, rel, float(np.min(fids)))
    cd, _ = swap_couplings(p, "derived")
    cp, _ = swap_couplings(p, "quoted")
    return RWAReport(
        swap_frequency_full=freq_full,
        swap_frequency_eff=results["derived"][0], relative_error=results["derived"][1], min_fidelity=results["derived"][2],
        swap_frequency_eff_quoted=results["quoted"][0], relative_error_quoted=results["quoted"][1],
        min_fidelity_quoted=results["quoted"][2], regime_warning=bool(regime), horizon=float(horizon),
        coupling_derived=cd, coupling_quoted=cp,
    )
