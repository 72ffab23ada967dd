"""Time-dependent GKSL propagation.

A model is a ``TimeDependentHamiltonian`` (constant operators times scalar
envelopes) plus a list of ``LindbladChannel``.  ``propagate`` integrates the
master equation in the lab frame with fixed-step RK4 and evaluates batched
observers on the sampled states.  ``liouvillian_expm`` is an independent
matrix-exponential route used to validate the integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .kernels import CompiledGenerator
from .quantum import HERMITIAN_TOL, SubsystemLayout, is_hermitian, thermal_occupation

# below this the integration has lost positivity, not just rounding noise
POSITIVITY_ABORT = -1e-6
# largest tolerated (Bohr frequency spread) * dt
MAX_PHASE_PER_STEP = 0.5


class NumericalAbort(RuntimeError):
    """Raised when the integration leaves the physical state space."""

    def __init__(self, message: str, t: float | None = None, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.t = t
        self.min_eigenvalue = min_eigenvalue


# ---------------------------------------------------------------- envelopes


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, t):
        return self.value + 0.0 * np.asarray(t, dtype=float)

    def derivative(self, t):
        return 0.0 * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Harmonic:
    """``amplitude * cos(frequency * t + phase)``."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.cos(self.frequency * np.asarray(t, dtype=float) + self.phase)

    def derivative(self, t):
        return -self.amplitude * self.frequency * np.sin(self.frequency * np.asarray(t, dtype=float) + self.phase)


@dataclass(frozen=True)
class FunctionEnvelope:
    """Arbitrary real envelope with a user-supplied derivative (numpy kernel only)."""

    f: Callable
    df: Callable

    def __call__(self, t):
        return np.asarray(self.f(t), dtype=float)

    def derivative(self, t):
        return np.asarray(self.df(t), dtype=float)


@dataclass
class HamiltonianTerm:
    op: np.ndarray
    envelope: Constant | Harmonic | FunctionEnvelope = field(default_factory=Constant)

    def __post_init__(self):
        self.op = np.asarray(self.op, dtype=complex)
        if not is_hermitian(self.op, HERMITIAN_TOL):
            raise ValueError("Hamiltonian terms must be Hermitian")


class TimeDependentHamiltonian:
    """``H(t) = sum_k f_k(t) H_k`` with real envelopes ``f_k``."""

    def __init__(self, terms: Sequence[HamiltonianTerm | np.ndarray | tuple] = ()):
        parsed = []
        for term in terms:
            if isinstance(term, HamiltonianTerm):
                parsed.append(term)
            elif isinstance(term, tuple):
                parsed.append(HamiltonianTerm(*term))
            else:
                parsed.append(HamiltonianTerm(term))
        self.terms: list[HamiltonianTerm] = parsed
        dims = {t.op.shape for t in parsed}
        if len(dims) > 1:
            raise ValueError(f"inconsistent term shapes {dims}")

    @property
    def dim(self) -> int | None:
        return self.terms[0].op.shape[0] if self.terms else None

    def __add__(self, other: "TimeDependentHamiltonian") -> "TimeDependentHamiltonian":
        return TimeDependentHamiltonian(self.terms + other.terms)

    def __call__(self, t: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), complex)
        for term in self.terms:
            out += float(term.envelope(t)) * term.op
        return out

    def derivative(self, t: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), complex)
        for term in self.terms:
            if not isinstance(term.envelope, Constant):
                out += float(term.envelope.derivative(t)) * term.op
        return out

    def batch(self, times: np.ndarray, derivative: bool = False) -> np.ndarray:
        """``H(t)`` (or ``dH/dt``) stacked over ``times``."""
        times = np.asarray(times, dtype=float)
        out = np.zeros(times.shape + (self.dim, self.dim), complex)
        for term in self.terms:
            if derivative:
                if isinstance(term.envelope, Constant):
                    continue
                c = term.envelope.derivative(times)
            else:
                c = term.envelope(times)
            out += np.asarray(c)[..., None, None] * term.op
        return out

    @property
    def is_static(self) -> bool:
        return all(isinstance(t.envelope, Constant) for t in self.terms)

    def static_part(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), complex)
        for term in self.terms:
            if isinstance(term.envelope, Constant):
                out += term.envelope.value * term.op
        return out

    def check_derivatives(self, rng: np.random.Generator, n: int = 5, t_max: float = 100.0, rel_tol: float = 1e-6) -> float:
        """Worst relative mismatch between ``derivative`` and a central difference."""
        worst = 0.0
        for t in rng.uniform(0.0, t_max, size=n):
            h = 1e-5
            fd = (self(t + h) - self(t - h)) / (2 * h)
            an = self.derivative(t)
            scale = max(np.linalg.norm(an), np.linalg.norm(fd), 1e-12)
            worst = max(worst, float(np.linalg.norm(fd - an) / scale) if scale > 1e-10 else 0.0)
        if worst > rel_tol:
            raise ValueError(f"envelope derivative inconsistent (relative error {worst:.2e})")
        return worst

    def spectral_spread(self) -> float:
        """Upper bound on the Bohr-frequency spread of ``H(t)`` over all ``t``."""
        if not self.terms:
            return 0.0
        e = np.linalg.eigvalsh(self.static_part())
        spread = float(e[-1] - e[0])
        for term in self.terms:
            if isinstance(term.envelope, Harmonic):
                spread += 2 * abs(term.envelope.amplitude) * np.linalg.norm(term.op, 2)
            elif isinstance(term.envelope, FunctionEnvelope):
                # no bound available; sample the envelope on a coarse grid
                amp = float(np.max(np.abs(term.envelope(np.linspace(0, 100, 1001)))))
                spread += 2 * amp * np.linalg.norm(term.op, 2)
        return spread


# ---------------------------------------------------------------- channels / model


@dataclass
class LindbladChannel:
    jump: np.ndarray
    rate: float
    label: str = ""

    def __post_init__(self):
        self.jump = np.asarray(self.jump, dtype=complex)
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be nonnegative, got {self.rate}")


def thermal_channels(jump_lower: np.ndarray, gamma: float, omega: float, temperature: float, label: str = "") -> list[LindbladChannel]:
    """Emission ``(L, gamma (n+1))`` and absorption ``(L^dag, gamma n)`` at occupation ``n(omega, T)``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    n = thermal_occupation(omega, temperature)
    L = np.asarray(jump_lower, dtype=complex)
    return [
        LindbladChannel(L, gamma * (n + 1.0), f"{label}emission"),
        LindbladChannel(L.conj().T, gamma * n, f"{label}absorption"),
    ]


def dissipator(rho: np.ndarray, channels: Sequence[LindbladChannel]) -> np.ndarray:
    """``sum_k r_k (L rho L^dag - {L^dag L, rho}/2)``; batch-capable."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for ch in channels:
        if ch.rate == 0:
            continue
        L = ch.jump
        LdL = L.conj().T @ L
        out += ch.rate * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


@dataclass
class OpenSystemModel:
    layout: SubsystemLayout
    hamiltonian: TimeDependentHamiltonian
    channels: list[LindbladChannel] = field(default_factory=list)

    def __post_init__(self):
        d = self.layout.dim
        if self.hamiltonian.dim not in (None, d):
            raise ValueError(f"Hamiltonian dimension {self.hamiltonian.dim} does not match layout dimension {d}")
        for ch in self.channels:
            if ch.jump.shape != (d, d):
                raise ValueError(f"channel {ch.label!r} has shape {ch.jump.shape}, expected {(d, d)}")
        if self.hamiltonian.dim is None:
            self.hamiltonian = TimeDependentHamiltonian([np.zeros((d, d), complex)])
        self._compiled = None

    @property
    def dim(self) -> int:
        return self.layout.dim

    def compile(self) -> CompiledGenerator:
        if self._compiled is None:
            harmonic = []
            generic = []
            for term in self.hamiltonian.terms:
                env = term.envelope
                if isinstance(env, Harmonic):
                    harmonic.append((env.amplitude * term.op, env.frequency, env.phase))
                elif isinstance(env, FunctionEnvelope):
                    generic.append(term)
            envelope_fn = None
            if generic:
                harmonic_envs = [t.envelope for t in self.hamiltonian.terms if isinstance(t.envelope, Harmonic)]
                generic_envs = [t.envelope for t in generic]

                def envelope_fn(t, _h=harmonic_envs, _g=generic_envs):
                    vals = [np.cos(e.frequency * t + e.phase) for e in _h] + [float(e(t)) for e in _g]
                    return np.array(vals, dtype=float)

                harmonic = harmonic + [(t.op, 0.0, 0.0) for t in generic]
            self._compiled = CompiledGenerator(
                static=self.hamiltonian.static_part(),
                harmonic=harmonic,
                jumps=[ch.jump for ch in self.channels],
                rates=np.array([ch.rate for ch in self.channels], dtype=float),
                envelope_fn=envelope_fn,
            )
        return self._compiled


def rhs(t: float, rho: np.ndarray, model: OpenSystemModel) -> np.ndarray:
    """Reference (dense numpy) GKSL right-hand side."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (model.dim, model.dim):
        raise ValueError(f"state dimension {rho.shape[-2:]} does not match model dimension {model.dim}")
    h = model.hamiltonian(t)
    return -1j * (h @ rho - rho @ h) + dissipator(rho, model.channels)


# ---------------------------------------------------------------- propagation


Observer = Callable[[np.ndarray, np.ndarray], np.ndarray]


def pointwise(f: Callable[[float, np.ndarray], float]) -> Observer:
    """Lift a scalar ``f(t, rho)`` to the batched observer signature."""

    def batched(times, states):
        return np.array([f(t, r) for t, r in zip(times, states)])

    return batched


@dataclass
class Trajectory:
    """Sampled run.  ``aux`` holds observer series aligned with ``times``.

    Only every ``state_stride``-th sampled state is kept in ``states`` (their
    times are ``state_times``); the final state is always kept separately.
    """

    times: np.ndarray
    aux: dict[str, np.ndarray]
    trace_factors: np.ndarray
    min_eigenvalues: np.ndarray
    states: np.ndarray
    state_times: np.ndarray
    final_state: np.ndarray
    dt: float = 0.0

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def shifted(self, offset: float) -> "Trajectory":
        return Trajectory(
            self.times + offset, dict(self.aux), self.trace_factors, self.min_eigenvalues,
            self.states, self.state_times + offset, self.final_state, self.dt,
        )

    def truncated(self, t_end: float) -> "Trajectory":
        """Samples with ``t <= t_end``; the final state becomes the last kept stored state if needed."""
        keep = self.times <= t_end + 1e-9
        skeep = self.state_times <= t_end + 1e-9
        last_t = self.times[keep][-1]
        final = self.final_state
        if last_t < self.times[-1]:
            idx = np.nonzero(np.isclose(self.state_times, last_t, atol=1e-9))[0]
            if len(idx) == 0:
                raise ValueError("truncation point has no stored state; lower state_stride")
            final = self.states[idx[-1]]
        return Trajectory(
            self.times[keep], {k: v[keep] for k, v in self.aux.items()}, self.trace_factors[keep],
            self.min_eigenvalues[keep], self.states[skeep], self.state_times[skeep], final, self.dt,
        )

    @staticmethod
    def concatenate(parts: Sequence["Trajectory"]) -> "Trajectory":
        """Join consecutive runs; a repeated boundary time (reset) is kept twice."""
        return Trajectory(
            np.concatenate([p.times for p in parts]),
            {k: np.concatenate([p.aux[k] for p in parts]) for k in parts[0].aux},
            np.concatenate([p.trace_factors for p in parts]),
            np.concatenate([p.min_eigenvalues for p in parts]),
            np.concatenate([p.states for p in parts]),
            np.concatenate([p.state_times for p in parts]),
            parts[-1].final_state,
            parts[0].dt,
        )

    def extended(self, more: "Trajectory") -> "Trajectory":
        """Continue with ``more`` whose first sample duplicates our last one."""
        drop = 1 if len(more.times) and abs(more.times[0] - self.times[-1]) < 1e-9 else 0
        sdrop = 1 if len(more.state_times) and len(self.state_times) and abs(more.state_times[0] - self.state_times[-1]) < 1e-9 else 0
        return Trajectory(
            np.concatenate([self.times, more.times[drop:]]),
            {k: np.concatenate([self.aux[k], more.aux[k][drop:]]) for k in self.aux},
            np.concatenate([self.trace_factors, more.trace_factors[drop:]]),
            np.concatenate([self.min_eigenvalues, more.min_eigenvalues[drop:]]),
            np.concatenate([self.states, more.states[sdrop:]]),
            np.concatenate([self.state_times, more.state_times[sdrop:]]),
            more.final_state,
            self.dt,
        )


def _check_samples(times, states, check_positivity):
    if not np.all(np.isfinite(states)):
        bad = int(np.nonzero(~np.isfinite(states).all(axis=(-1, -2)))[0][0])
        raise NumericalAbort(f"non-finite state at t={times[bad]:.6g}; reduce dt", t=float(times[bad]))
    herm = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    lam = np.linalg.eigvalsh(herm)[:, 0] if check_positivity else np.zeros(len(states))
    if check_positivity and lam.min() < POSITIVITY_ABORT:
        k = int(np.argmin(lam))
        raise NumericalAbort(
            f"positivity violated: min eigenvalue {lam[k]:.3e} at t={times[k]:.6g} (threshold {POSITIVITY_ABORT:g}); reduce dt",
            t=float(times[k]), min_eigenvalue=float(lam[k]),
        )
    return lam


def propagate(
    model: OpenSystemModel,
    rho0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    sample_stride: int = 1,
    observers: Mapping[str, Observer] | None = None,
    state_stride: int = 1,
    chunk_samples: int = 20000,
    check_positivity: bool = True,
    backend: str | None = None,
) -> Trajectory:
    """Fixed-step RK4 from ``t_span[0]`` to ``t_span[1]``.

    Samples are taken at ``t0`` and every ``sample_stride`` steps, plus the
    end point if it falls off the stride grid (the last step is shortened if
    ``(t1 - t0)/dt`` is not an integer).  Every sample is renormalised to unit
    trace; the pre-normalisation traces are returned as ``trace_factors``.
    Observers are called as ``f(times, states)`` on each chunk of samples.
    """
    t0, t1 = map(float, t_span)
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if sample_stride < 1 or state_stride < 1:
        raise ValueError("strides must be >= 1")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"initial state shape {rho0.shape} does not match model dimension {model.dim}")
    spread = model.hamiltonian.spectral_spread()
    decay = sum(c.rate * np.linalg.norm(c.jump, 2) ** 2 for c in model.channels)
    if (spread + decay) * dt > MAX_PHASE_PER_STEP:
        raise NumericalAbort(
            f"dt={dt:g} under-resolves the generator (spectral spread {spread:.3g}, total decay rate {decay:.3g}, "
            f"product with dt {(spread + decay) * dt:.3g} > {MAX_PHASE_PER_STEP}); positivity and accuracy cannot be "
            "guaranteed, reduce dt"
        )
    observers = dict(observers or {})
    gen = model.compile()

    span = t1 - t0
    n_full = int(math.floor(span / dt + 1e-9))
    rem = span - n_full * dt
    if rem < 1e-12 * max(1.0, span):
        rem = 0.0

    t_chunks = [np.array([t0])]
    s_chunks = []
    tr_chunks = [np.array([float(np.trace(rho0).real)])]
    lam_chunks = [_check_samples(np.array([t0]), rho0[None], check_positivity)]
    aux_chunks: dict[str, list] = {k: [np.asarray(f(np.array([t0]), rho0[None]), dtype=float)] for k, f in observers.items()}
    kept_states = [rho0[None]]
    kept_times = [np.array([t0])]
    sample_index = 1

    def absorb(times, samples, traces):
        nonlocal sample_index
        lam = _check_samples(times, samples, check_positivity)
        t_chunks.append(times)
        tr_chunks.append(traces)
        lam_chunks.append(lam)
        for k, f in observers.items():
            aux_chunks[k].append(np.asarray(f(times, samples), dtype=float))
        idx = np.nonzero((np.arange(sample_index, sample_index + len(times)) % state_stride) == 0)[0]
        if len(idx):
            kept_states.append(samples[idx])
            kept_times.append(times[idx])
        sample_index += len(times)

    rho = rho0.copy()
    done = 0
    chunk_steps = max(1, chunk_samples) * sample_stride
    while done + sample_stride <= n_full:
        nsteps = min(chunk_steps, ((n_full - done) // sample_stride) * sample_stride)
        rho, samples, traces = gen.run(rho, t0 + done * dt, dt, nsteps, sample_stride, backend=backend)
        times = t0 + dt * (done + sample_stride * np.arange(1, len(traces) + 1))
        absorb(times, samples, traces)
        done += nsteps
    tail = n_full - done
    if tail or rem:
        if tail:
            rho, _, _ = gen.run(rho, t0 + done * dt, dt, tail, tail + 1, backend=backend)
        if rem:
            rho, _, _ = gen.run(rho, t0 + n_full * dt, rem, 1, 2, backend=backend)
        tr = float(np.trace(rho).real)
        rho = rho / tr
        absorb(np.array([t1]), rho[None].copy(), np.array([tr]))
    # always keep the final state
    if kept_times[-1][-1] != t_chunks[-1][-1]:
        kept_states.append(rho[None].copy())
        kept_times.append(np.array([t_chunks[-1][-1]]))

    return Trajectory(
        times=np.concatenate(t_chunks),
        aux={k: np.concatenate(v) for k, v in aux_chunks.items()},
        trace_factors=np.concatenate(tr_chunks),
        min_eigenvalues=np.concatenate(lam_chunks),
        states=np.concatenate(kept_states),
        state_times=np.concatenate(kept_times),
        final_state=rho,
        dt=dt,
    )


# ---------------------------------------------------------------- expm oracle


def liouvillian(model: OpenSystemModel) -> np.ndarray:
    """Superoperator of a static model acting on row-major ``vec(rho)``.

    With row-major stacking ``vec(A rho B) = (A kron B^T) vec(rho)``.
    """
    if not model.hamiltonian.is_static:
        raise ValueError("liouvillian requires a time-independent Hamiltonian")
    d = model.dim
    eye = np.eye(d)
    h = model.hamiltonian.static_part()
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in model.channels:
        L = ch.jump
        LdL = L.conj().T @ L
        sup += ch.rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
    return sup


def expm(a: np.ndarray, order: int = 18) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a truncated Taylor core."""
    a = np.asarray(a, dtype=complex)
    norm = np.linalg.norm(a, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    x = a / (2.0**s)
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    # Horner form: I + x(I + x/2(I + x/3(...)))
    for k in range(order, 0, -1):
        term = np.eye(a.shape[0]) + (x @ term) / k
    out = term
    for _ in range(s):
        out = out @ out
    return out


def liouvillian_expm(model: OpenSystemModel, rho0: np.ndarray, t: float, max_dim: int = 4) -> np.ndarray:
    """``unvec(exp(L t) vec(rho0))`` for a time-independent model of at most ``max_dim`` levels."""
    if not model.hamiltonian.is_static:
        raise ValueError("liouvillian_expm requires constant envelopes")
    d = model.dim
    if d > max_dim:
        raise ValueError(f"model dimension {d} exceeds max_dim={max_dim}")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    prop = expm(liouvillian(model) * t)
    return (prop @ rho0.reshape(-1)).reshape(d, d)


__all__ = [
    "Constant", "Harmonic", "FunctionEnvelope", "HamiltonianTerm", "TimeDependentHamiltonian",
    "LindbladChannel", "OpenSystemModel", "Trajectory", "NumericalAbort", "thermal_channels",
    "dissipator", "rhs", "propagate", "pointwise", "liouvillian", "expm", "liouvillian_expm",
    "POSITIVITY_ABORT", "MAX_PHASE_PER_STEP",
]
