"""The two refrigerator models and their protocols.

Refrigerator I: target qubit 1 coupled to a driven, damped ancilla (qubit 2)
that is reset to ``|-y>`` every ``t_int``.  Refrigerator II adds a strongly
damped qubit 3 resonant with the 1-2 flip-flop, so that no resets are needed.

All energies and rates are in units of ``omega2``.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dynamics import (
    Harmonic, HamiltonianTerm, OpenSystemModel, TimeDependentHamiltonian, Trajectory,
    propagate, thermal_channels,
)
from .fitting import CoolingFit, fit_cooling
from .quantum import (
    IDENTITY2, KET_MINUS_Y, P_EXCITED, SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, SubsystemLayout,
    embed, expectation, gibbs_state, insert_qubit_state, ket_to_dm, kron, partial_trace,
)
from .thermo import Bipartition, ThermoLedger, accumulate, flux_observers

MINUS_Y = ket_to_dm(KET_MINUS_Y)
# time between kept full states (in units of 1/omega2); truncation happens on this grid
STATE_SPACING = 20.0


@dataclass(frozen=True)
class RefrigeratorConfig:
    omega1: float = 0.1
    omega2: float = 1.0
    omega3: float = 1.1
    lam: float = 0.1
    g1: float = 5e-5
    g3: float = 8e-4
    gamma2: float = 1e-4
    gamma3: float = 1e-2
    temperature: float = 0.1
    drive_frequency: float | None = None  # None -> omega2
    t_int: float | None = None  # None -> 1/gamma2
    dt: float = 0.02
    sample_stride: int = 0  # 0 -> spacing of about 0.2
    horizon_factor: float = 6.0
    reset_count: int = 0  # 0 -> floor(horizon_factor * T_cool / t_int)
    measurement_cost: float = 0.0
    alpha: float = 0.5
    allow_detuning: bool = False
    pilot_horizon_I: float | None = None  # None -> max(10 t_int, 5/gamma2)
    pilot_horizon_II: float = 2e5
    delta2: float = 0.1  # flux-qubit tunnelling gap used by verify-rwa
    rwa_horizon: float = 0.0  # 0 -> two swap periods

    @property
    def omega_d(self) -> float:
        return self.omega2 if self.drive_frequency is None else self.drive_frequency

    @property
    def interval(self) -> float:
        if self.t_int is not None:
            return self.t_int
        return 1.0 / self.gamma2 if self.gamma2 > 0 else math.inf

    @property
    def stride(self) -> int:
        return self.sample_stride if self.sample_stride > 0 else max(1, int(round(0.2 / self.dt)))

    def validate(self, three_qubits: bool = True) -> "RefrigeratorConfig":
        for name in ("omega1", "omega2", "omega3", "temperature", "dt", "horizon_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("g1", "g3", "gamma2", "gamma3", "lam", "measurement_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.interval <= 0:
            raise ValueError("t_int must be positive")
        if self.reset_count < 0:
            raise ValueError("reset_count must be >= 0")
        if three_qubits:
            if abs(self.omega3 - (self.omega1 + self.omega2)) > 1e-9 and not self.allow_detuning:
                raise ValueError(
                    f"omega3={self.omega3} is off resonance with omega1+omega2={self.omega1 + self.omega2}; "
                    "set allow_detuning=1 to run anyway"
                )
            if not (self.gamma2 * 10 <= self.gamma3 <= self.omega3 / 10):
                warnings.warn("rate ordering gamma2 << gamma3 << omega3 is violated", stacklevel=2)
        return self

    def digest(self) -> str:
        text = ";".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_updates(self, **kw) -> "RefrigeratorConfig":
        return replace(self, **kw)


CONFIG_FIELDS = {f.name: f for f in fields(RefrigeratorConfig)}


# ---------------------------------------------------------------- model builders


def _drive_term(cfg, layout, site=1):
    return HamiltonianTerm(embed(SIGMA_Y, layout, site), Harmonic(cfg.lam, cfg.omega_d))


def build_refrigerator_I(cfg: RefrigeratorConfig):
    """Two qubits: target (site 0) and driven ancilla (site 1) with thermal damping."""
    cfg.validate(three_qubits=False)
    lay = SubsystemLayout(2, ("q1", "q2"))
    h12 = cfg.g1 * kron(SIGMA_X, SIGMA_Z)
    ham = TimeDependentHamiltonian([
        HamiltonianTerm(cfg.omega1 / 2 * embed(SIGMA_Z, lay, 0)),
        HamiltonianTerm(cfg.omega2 / 2 * embed(SIGMA_Z, lay, 1)),
        _drive_term(cfg, lay),
        HamiltonianTerm(h12),
    ])
    chans = thermal_channels(embed(SIGMA_MINUS, lay, 1), cfg.gamma2, cfg.omega2, cfg.temperature, "q2 ")
    model = OpenSystemModel(lay, ham, chans)
    bip = Bipartition(
        lay, [0], [1], h12,
        TimeDependentHamiltonian([cfg.omega1 / 2 * SIGMA_Z]),
        TimeDependentHamiltonian([cfg.omega2 / 2 * SIGMA_Z, HamiltonianTerm(SIGMA_Y, Harmonic(cfg.lam, cfg.omega_d))]),
        chans,
    )
    return model, bip


def build_refrigerator_II(cfg: RefrigeratorConfig):
    """Three qubits: refrigerator I plus qubit 3 coupled to qubit 2 by ``g3 sx sx``."""
    cfg.validate(three_qubits=True)
    lay = SubsystemLayout(3, ("q1", "q2", "q3"))
    h12 = cfg.g1 * embed(SIGMA_X, lay, 0) @ embed(SIGMA_Z, lay, 1)
    h23 = cfg.g3 * embed(SIGMA_X, lay, 1) @ embed(SIGMA_X, lay, 2)
    ham = TimeDependentHamiltonian([
        HamiltonianTerm(cfg.omega1 / 2 * embed(SIGMA_Z, lay, 0)),
        HamiltonianTerm(cfg.omega2 / 2 * embed(SIGMA_Z, lay, 1)),
        HamiltonianTerm(cfg.omega3 / 2 * embed(SIGMA_Z, lay, 2)),
        _drive_term(cfg, lay),
        HamiltonianTerm(h12),
        HamiltonianTerm(h23),
    ])
    chans = thermal_channels(embed(SIGMA_MINUS, lay, 1), cfg.gamma2, cfg.omega2, cfg.temperature, "q2 ")
    chans += thermal_channels(embed(SIGMA_MINUS, lay, 2), cfg.gamma3, cfg.omega3, cfg.temperature, "q3 ")
    model = OpenSystemModel(lay, ham, chans)
    local_b = TimeDependentHamiltonian([
        cfg.omega2 / 2 * kron(SIGMA_Z, IDENTITY2) + cfg.omega3 / 2 * kron(IDENTITY2, SIGMA_Z)
        + cfg.g3 * kron(SIGMA_X, SIGMA_X),
        HamiltonianTerm(kron(SIGMA_Y, IDENTITY2), Harmonic(cfg.lam, cfg.omega_d)),
    ])
    bip = Bipartition(lay, [0], [1, 2], h12, TimeDependentHamiltonian([cfg.omega1 / 2 * SIGMA_Z]), local_b, chans)
    return model, bip


def reset_qubit2(rho: np.ndarray, layout: SubsystemLayout, site: int = 1) -> np.ndarray:
    """Trace out the ancilla and re-prepare it in ``|-y><-y|``."""
    rest = partial_trace(rho, layout, [q for q in range(layout.qubit_count) if q != layout.index(site)])
    return insert_qubit_state(rest, MINUS_Y, layout, site)


def initial_state_I() -> np.ndarray:
    return kron(IDENTITY2 / 2, MINUS_Y)


def initial_state_II(cfg: RefrigeratorConfig) -> np.ndarray:
    return kron(IDENTITY2 / 2, MINUS_Y, gibbs_state(cfg.omega3 / 2 * SIGMA_Z, cfg.temperature))


# ---------------------------------------------------------------- scalar helpers


def w_ini(omega2: float = 1.0) -> float:
    """Work to rotate the ancilla from ``|1>`` to ``|-y>`` with a resonant pulse."""
    return omega2 / 2


def verify_w_ini(lam_prime: float, omega2: float = 1.0, nodes: int = 64) -> float:
    """Integrate the rotating-frame work rate over the pi/2 pulse.

    The pulse ``-lam' cos(omega2 t) sx`` becomes ``-(lam'/2) sx`` in the frame
    rotating at ``omega2``; the state there is ``exp(i lam' t sx/2)|1>``.  The
    lab-frame work rate ``Tr(rho dH/dt)`` averaged over the fast carrier is
    ``Tr(rho' (-(lam' omega2/2) sy))``, integrated up to ``t = pi/(2 lam')``.
    """
    if lam_prime <= 0:
        raise ValueError("lam_prime must be positive")
    t_end = np.pi / (2 * lam_prime)
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = 0.5 * t_end * (x + 1)
    ket1 = np.array([0, 1], dtype=complex)
    op = -(lam_prime * omega2 / 2) * SIGMA_Y
    total = 0.0
    for t, wk in zip(ts, w):
        half = lam_prime * t / 2
        u = np.cos(half) * IDENTITY2 + 1j * np.sin(half) * SIGMA_X
        psi = u @ ket1
        rho = np.outer(psi, psi.conj())
        total += wk * expectation(rho, op).real
    return float(0.5 * t_end * total)


def cop(q_out: float, w: float) -> float:
    if w <= 0:
        raise ValueError(f"COP undefined for non-positive work W={w:g}")
    return q_out / w


def avg_heat_flow(q_out: float, t_total: float) -> float:
    if t_total <= 0:
        raise ValueError("t_total must be positive")
    return q_out / t_total


# ---------------------------------------------------------------- runs


@dataclass
class RunResult:
    protocol: str
    config: RefrigeratorConfig
    trajectory: Trajectory
    ledger: ThermoLedger
    Q_out: float
    W: float
    COP: float
    avg_heat_flow: float
    fit: CoolingFit | None  # None when too few segment ends to fit
    reset_count: int
    steady_population: float
    t_total: float
    drive_work: float
    W_ini_total: float
    pilot_fit: CoolingFit | None = None
    segment_ends: tuple[np.ndarray, np.ndarray] | None = None
    segment_starts: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def population(self) -> np.ndarray:
        return self.trajectory.aux["p_exc_q1"]

    def summary(self) -> dict:
        return {
            "protocol": self.protocol, "Q_out": self.Q_out, "W": self.W, "COP": self.COP,
            "avg_heat_flow": self.avg_heat_flow,
            "T_cool": self.fit.T_cool if self.fit else math.nan, "a": self.fit.a if self.fit else math.nan,
            "reset_count": self.reset_count, "steady_population": self.steady_population,
            "t_total": self.t_total, "drive_work": self.drive_work, "W_ini_total": self.W_ini_total,
        }


def _population_observer(layout):
    proj = embed(P_EXCITED, layout, 0)
    return lambda times, states: expectation(states, proj).real


def _observers(layout, bip, alpha):
    obs = {"p_exc_q1": _population_observer(layout)}
    obs.update(flux_observers(bip, alpha))
    return obs


def _segment(model, bip, cfg, rho, backend=None):
    return propagate(
        model, rho, (0.0, cfg.interval), cfg.dt, cfg.stride, _observers(model.layout, bip, cfg.alpha),
        state_stride=10**12, backend=backend,
    )


def run_protocol_I(cfg: RefrigeratorConfig = RefrigeratorConfig(), reset_count: int | None = None, backend=None, progress=None) -> RunResult:
    """Reset-based refrigerator.

    Each segment propagates for ``t_int`` from ``rho_A (x) |-y><-y|`` with the
    drive phase restarting at zero, then the ancilla is reset.  The cooling
    time is fitted on the populations at the segment ends (including t=0)
    from a pilot of ``max(10 t_int, 5/gamma2)``; the number of segments is
    ``floor(horizon_factor * T_cool / t_int)`` unless given.
    """
    model, bip = build_refrigerator_I(cfg)
    t_int = cfg.interval
    if not math.isfinite(t_int):
        raise ValueError("protocol I needs a finite t_int; set it explicitly when gamma2 = 0")
    rho = initial_state_I()
    explicit = reset_count if reset_count is not None else (cfg.reset_count or None)
    segments: list[Trajectory] = []

    def run_one():
        nonlocal rho
        seg = _segment(model, bip, cfg, rho, backend)
        segments.append(seg)
        rho = reset_qubit2(seg.final_state, model.layout)
        if progress:
            progress(f"protocol I segment {len(segments)}: p_end={seg.aux['p_exc_q1'][-1]:.6f}")

    pilot_fit = None
    if explicit is None:
        pilot_h = cfg.pilot_horizon_I if cfg.pilot_horizon_I else max(10 * t_int, 5 / cfg.gamma2 if cfg.gamma2 > 0 else 0.0)
        n_pilot = max(10, int(math.ceil(pilot_h / t_int - 1e-9)))
        for _ in range(n_pilot):
            run_one()
        ends = np.array([0.5] + [s.aux["p_exc_q1"][-1] for s in segments])
        pilot_fit = fit_cooling(t_int * np.arange(len(ends)), ends)
        m = int(math.floor(cfg.horizon_factor * pilot_fit.T_cool / t_int + 1e-9))
        if m < 1:
            raise ValueError(f"cooling time {pilot_fit.T_cool:g} shorter than one interval; no reset cycle fits")
    else:
        m = int(explicit)
        if m < 1:
            raise ValueError("reset_count must be >= 1")
    while len(segments) < m:
        run_one()
    segments = segments[:m]

    shifted = [s.shifted(k * t_int) for k, s in enumerate(segments)]
    traj = Trajectory.concatenate(shifted)
    ledger = accumulate(traj, bip, cfg.alpha)
    drive_work = ledger.W_total
    w_ini_total = m * w_ini(cfg.omega2)
    work = drive_work + w_ini_total + m * cfg.measurement_cost
    ends_t = t_int * np.arange(m + 1)
    ends_p = np.array([segments[0].aux["p_exc_q1"][0]] + [s.aux["p_exc_q1"][-1] for s in segments])
    fit = fit_cooling(ends_t, ends_p) if m >= 9 else pilot_fit
    t_total = m * t_int
    q_out = ledger.Q_out
    return RunResult(
        protocol="I", config=cfg, trajectory=traj, ledger=ledger, Q_out=q_out, W=work, COP=cop(q_out, work),
        avg_heat_flow=avg_heat_flow(q_out, t_total), fit=fit, reset_count=m, steady_population=float(ends_p[-1]),
        t_total=t_total, drive_work=drive_work, W_ini_total=w_ini_total, pilot_fit=pilot_fit,
        segment_ends=(ends_t, ends_p), segment_starts=ends_t[:-1],
        extra={"segment_Q_out": [-accumulate(s, bip, cfg.alpha).Q_A for s in segments]},
    )


def _fit_series(traj: Trajectory, max_points: int = 20000) -> CoolingFit:
    t = traj.times
    p = traj.aux["p_exc_q1"]
    step = max(1, len(t) // max_points)
    return fit_cooling(t[::step], p[::step])


def run_protocol_II(cfg: RefrigeratorConfig = RefrigeratorConfig(), horizon: float | None = None, backend=None, progress=None) -> RunResult:
    """Continuous refrigerator run to ``horizon_factor * T_cool``.

    A pilot run of ``pilot_horizon_II`` gives ``T_cool``; the run is then
    extended (or truncated) to the final horizon and the fit is repeated on
    the full series.  Passing ``horizon`` skips the pilot.
    """
    model, bip = build_refrigerator_II(cfg)
    stride = cfg.stride
    sample_dt = cfg.dt * stride
    state_stride = max(1, int(round(STATE_SPACING / sample_dt)))
    obs = _observers(model.layout, bip, cfg.alpha)

    def run(rho, t0, t1):
        return propagate(model, rho, (t0, t1), cfg.dt, stride, obs, state_stride=state_stride, backend=backend)

    def snap(h):
        # horizons live on the stored-state grid so truncation keeps an exact final state
        grid = state_stride * sample_dt
        return max(grid, round(h / grid) * grid)

    pilot_fit = None
    if horizon is None:
        pilot_h = snap(cfg.pilot_horizon_II)
        traj = run(initial_state_II(cfg), 0.0, pilot_h)
        pilot_fit = _fit_series(traj)
        final_h = snap(cfg.horizon_factor * pilot_fit.T_cool)
        if progress:
            progress(f"protocol II pilot: T_cool={pilot_fit.T_cool:.6g}, final horizon {final_h:.6g}")
        if final_h > pilot_h:
            traj = traj.extended(run(traj.final_state, pilot_h, final_h))
        elif final_h < pilot_h:
            traj = traj.truncated(final_h)
    else:
        final_h = float(horizon)
        traj = run(initial_state_II(cfg), 0.0, final_h)
    fit = _fit_series(traj)
    ledger = accumulate(traj, bip, cfg.alpha)
    drive_work = ledger.W_total
    work = drive_work + w_ini(cfg.omega2)
    q_out = ledger.Q_out
    t_total = traj.duration
    return RunResult(
        protocol="II", config=cfg, trajectory=traj, ledger=ledger, Q_out=q_out, W=work, COP=cop(q_out, work),
        avg_heat_flow=avg_heat_flow(q_out, t_total), fit=fit, reset_count=0,
        steady_population=float(traj.aux["p_exc_q1"][-1]), t_total=t_total, drive_work=drive_work,
        W_ini_total=w_ini(cfg.omega2), pilot_fit=pilot_fit,
    )


def run_protocol(protocol: str, cfg: RefrigeratorConfig, **kw) -> RunResult:
    protocol = protocol.upper()
    if protocol == "I":
        return run_protocol_I(cfg, **kw)
    if protocol == "II":
        return run_protocol_II(cfg, **kw)
    raise ValueError(f"unknown protocol {protocol!r}")


__all__ = [
    "RefrigeratorConfig", "RunResult", "build_refrigerator_I", "build_refrigerator_II", "reset_qubit2",
    "initial_state_I", "initial_state_II", "w_ini", "verify_w_ini", "cop", "avg_heat_flow",
    "run_protocol_I", "run_protocol_II", "run_protocol",
]
