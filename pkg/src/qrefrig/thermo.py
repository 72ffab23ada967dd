"""Heat and work bookkeeping for a bipartite open system.

For a split ``H = H_A(t) + H_B(t) + H_AB`` the state is written as
``rho = rho_A (x) rho_B + chi``.  Each party sees a mean-field Hamiltonian
``H'_A = H_A + Tr_B[(I (x) rho_B) H_AB]`` (likewise for B), and the remaining
interaction energy sits in ``H_AB^eff``.  Heat flowing into A is
``-i Tr([H_AB, chi] (H'_A (x) I))``; the correlation absorbs
``Q_chi = -(Q_A + Q_B)``.  Work rates split ``Tr(rho dH/dt)`` between the
parties with a free parameter ``alpha``; only the sum is physical.

Every function accepts one state or a batch ``(n, d, d)`` (with ``t`` a
scalar or an array of matching length).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import LindbladChannel, OpenSystemModel, TimeDependentHamiltonian, Trajectory, dissipator
from .quantum import SubsystemLayout, permute_qubits


@dataclass
class Bipartition:
    """Split of ``layout`` into parties A and B.

    ``interaction`` is ``H_AB`` on the full space (layout order); ``local_A``
    and ``local_B`` act on the party spaces with sites in layout order.
    ``channels`` are the full-space dissipators (needed for the reduced
    equations of motion).
    """

    layout: SubsystemLayout
    party_A: Sequence[int]
    party_B: Sequence[int]
    interaction: np.ndarray
    local_A: TimeDependentHamiltonian
    local_B: TimeDependentHamiltonian
    channels: list[LindbladChannel] = field(default_factory=list)

    def __post_init__(self):
        a = sorted(self.layout.index(s) for s in self.party_A)
        b = sorted(self.layout.index(s) for s in self.party_B)
        if set(a) & set(b):
            raise ValueError("parties must be disjoint")
        if sorted(a + b) != list(range(self.layout.qubit_count)):
            raise ValueError("parties must cover every site")
        if not a or not b:
            raise ValueError("both parties must be nonempty")
        self.party_A, self.party_B = tuple(a), tuple(b)
        self.dA, self.dB = 2 ** len(a), 2 ** len(b)
        self.order = list(a) + list(b)
        self._identity_order = self.order == list(range(self.layout.qubit_count))
        hab = np.asarray(self.interaction, dtype=complex)
        if hab.shape != (self.layout.dim, self.layout.dim):
            raise ValueError("interaction must act on the full space")
        self.interaction = hab
        self._hab = self.to_ab(hab)
        self._hab_t = self._hab.reshape(self.dA, self.dB, self.dA, self.dB)
        self._channels_ab = [LindbladChannel(self.to_ab(ch.jump), ch.rate, ch.label) for ch in self.channels]
        for h, d, name in ((self.local_A, self.dA, "local_A"), (self.local_B, self.dB, "local_B")):
            if h.dim not in (None, d):
                raise ValueError(f"{name} has dimension {h.dim}, expected {d}")

    def to_ab(self, op: np.ndarray) -> np.ndarray:
        """Reorder tensor factors so that A's sites come first."""
        if self._identity_order:
            return np.asarray(op)
        return permute_qubits(op, self.layout, self.order)

    def max_frequency(self) -> float:
        """Bohr-frequency spread of the static part of the full Hamiltonian."""
        ha = self.local_A.static_part() if self.local_A.dim else np.zeros((self.dA, self.dA))
        hb = self.local_B.static_part() if self.local_B.dim else np.zeros((self.dB, self.dB))
        h = np.kron(ha, np.eye(self.dB)) + np.kron(np.eye(self.dA), hb) + self._hab
        e = np.linalg.eigvalsh(h)
        return float(e[-1] - e[0])

    def full_hamiltonian(self, t) -> np.ndarray:
        """``H(t)`` in A-first ordering (batched over ``t``)."""
        ha = _local(self.local_A, t, self.dA)
        hb = _local(self.local_B, t, self.dB)
        return _kron_batch(ha, np.eye(self.dB)) + _kron_batch(np.eye(self.dA), hb) + self._hab


def _local(h: TimeDependentHamiltonian, t, d, derivative=False):
    t = np.asarray(t, dtype=float)
    if h.dim is None:
        return np.zeros(t.shape + (d, d), complex)
    return h.batch(t, derivative=derivative)


def _kron_batch(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 2 and b.ndim == 2:
        return np.kron(a, b)
    if a.ndim == 2:
        a = np.broadcast_to(a, b.shape[:-2] + a.shape)
    if b.ndim == 2:
        b = np.broadcast_to(b, a.shape[:-2] + b.shape)
    n = a.shape[:-2]
    out = np.einsum("...ij,...ab->...iajb", a, b)
    return out.reshape(n + (a.shape[-2] * b.shape[-2], a.shape[-1] * b.shape[-1]))


def _batch(t, rho, bip: Bipartition):
    rho = np.asarray(rho, dtype=complex)
    single = rho.ndim == 2
    if single:
        rho = rho[None]
    if rho.shape[-1] != bip.layout.dim:
        raise ValueError(f"state dimension {rho.shape[-1]} does not match layout dimension {bip.layout.dim}")
    t = np.broadcast_to(np.asarray(t, dtype=float), rho.shape[:1])
    return t, bip.to_ab(rho), single


def _out(x, single):
    return x[0] if single else x


def _marginals(r, bip):
    rt = r.reshape(-1, bip.dA, bip.dB, bip.dA, bip.dB)
    return np.einsum("nibjb->nij", rt), np.einsum("naiaj->nij", rt)


def _shifts(ra, rb, bip):
    shift_a = np.einsum("nab,ibja->nij", rb, bip._hab_t)
    shift_b = np.einsum("nij,jaib->nab", ra, bip._hab_t)
    return shift_a, shift_b


def reduced_states(rho, bip: Bipartition):
    """``(rho_A, rho_B)`` with party sites in layout order."""
    _, r, single = _batch(0.0, rho, bip)
    ra, rb = _marginals(r, bip)
    return _out(ra, single), _out(rb, single)


def correlation(rho, bip: Bipartition) -> np.ndarray:
    """``chi = rho - rho_A (x) rho_B`` in the layout's own ordering."""
    rho = np.asarray(rho, dtype=complex)
    _, r, single = _batch(0.0, rho, bip)
    ra, rb = _marginals(r, bip)
    chi_ab = r - _kron_batch(ra, rb)
    if not bip._identity_order:
        inverse = np.argsort(bip.order)
        chi_ab = permute_qubits(chi_ab, bip.layout, [int(i) for i in inverse])
    return _out(chi_ab, single)


def mean_field_hamiltonian_A(t, rho, bip: Bipartition) -> np.ndarray:
    t, r, single = _batch(t, rho, bip)
    ra, rb = _marginals(r, bip)
    shift_a, _ = _shifts(ra, rb, bip)
    return _out(_local(bip.local_A, t, bip.dA) + shift_a, single)


def mean_field_hamiltonian_B(t, rho, bip: Bipartition) -> np.ndarray:
    t, r, single = _batch(t, rho, bip)
    ra, rb = _marginals(r, bip)
    _, shift_b = _shifts(ra, rb, bip)
    return _out(_local(bip.local_B, t, bip.dB) + shift_b, single)


def effective_interaction(t, rho, bip: Bipartition) -> np.ndarray:
    """``H_AB - shift_A (x) I - I (x) shift_B + Tr((rho_A (x) rho_B) H_AB) I`` (A-first ordering).

    It satisfies ``Tr_A((rho_A (x) I) H_eff) = 0`` and ``Tr_B((I (x) rho_B) H_eff) = 0``.
    """
    _, r, single = _batch(t, rho, bip)
    return _out(_effective_ab(r, bip), single)


def _effective_ab(r, bip):
    ra, rb = _marginals(r, bip)
    shift_a, shift_b = _shifts(ra, rb, bip)
    c = np.einsum("nij,nab,jbia->n", ra, rb, bip._hab_t)
    d = bip.dA * bip.dB
    return (
        bip._hab
        - _kron_batch(shift_a, np.eye(bip.dB))
        - _kron_batch(np.eye(bip.dA), shift_b)
        + c[:, None, None] * np.eye(d)
    )


def _commutator_with_chi(r, bip):
    ra, rb = _marginals(r, bip)
    chi = r - _kron_batch(ra, rb)
    h = bip._hab
    comm = h @ chi - chi @ h
    return comm.reshape(-1, bip.dA, bip.dB, bip.dA, bip.dB), ra, rb


def heat_fluxes(t, rho, bip: Bipartition):
    """``(Q_A, Q_B, Q_chi)`` rates; positive means heat flowing in."""
    t, r, single = _batch(t, rho, bip)
    c, ra, rb = _commutator_with_chi(r, bip)
    shift_a, shift_b = _shifts(ra, rb, bip)
    hpa = _local(bip.local_A, t, bip.dA) + shift_a
    hpb = _local(bip.local_B, t, bip.dB) + shift_b
    qa = (-1j * np.einsum("niaja,nji->n", c, hpa)).real
    qb = (-1j * np.einsum("naiab,nbi->n", c, hpb)).real
    qchi = _correlation_heat(t, r, bip)
    return _out(qa, single), _out(qb, single), _out(qchi, single)


def _correlation_heat(t, r, bip):
    """``Tr(dchi/dt H_eff)`` with ``dchi/dt`` taken from the unitary part of the full dynamics.

    Evaluated without reference to ``Q_A`` or ``Q_B`` so that their balance is a real check.
    """
    h = bip.full_hamiltonian(t)
    drho = -1j * (h @ r - r @ h)
    ra, rb = _marginals(r, bip)
    dra, drb = _marginals(drho, bip)
    chidot = drho - _kron_batch(dra, rb) - _kron_batch(ra, drb)
    return np.einsum("nij,nji->n", chidot, _effective_ab(r, bip)).real


def heat_flux_A(t, rho, bip: Bipartition):
    return heat_fluxes(t, rho, bip)[0]


def heat_flux_B(t, rho, bip: Bipartition):
    return heat_fluxes(t, rho, bip)[1]


def heat_flux_chi(t, rho, bip: Bipartition):
    return heat_fluxes(t, rho, bip)[2]


def reduced_derivatives(t, rho, bip: Bipartition):
    """``(d rho_A/dt, d rho_B/dt)`` from the reduced equations of motion.

    ``d rho_A/dt = -i[H'_A, rho_A] - i Tr_B[H_AB, chi] + Tr_B D(rho)`` and the
    mirror expression for B.
    """
    t, r, single = _batch(t, rho, bip)
    c, ra, rb = _commutator_with_chi(r, bip)
    shift_a, shift_b = _shifts(ra, rb, bip)
    hpa = _local(bip.local_A, t, bip.dA) + shift_a
    hpb = _local(bip.local_B, t, bip.dB) + shift_b
    dra = -1j * (hpa @ ra - ra @ hpa) - 1j * np.einsum("nibjb->nij", c)
    drb = -1j * (hpb @ rb - rb @ hpb) - 1j * np.einsum("naiaj->nij", c)
    if bip._channels_ab:
        dis = dissipator(r, bip._channels_ab)
        da, db = _marginals(dis, bip)
        dra = dra + da
        drb = drb + db
    return _out(dra, single), _out(drb, single)


def work_rates(t, rho, bip: Bipartition, alpha: float = 0.5):
    """``(W_A, W_B)`` rates for the given ``alpha``.

    ``W_A = Tr(rho_A dH_A/dt) - (1-alpha) Tr((drho_A (x) rho_B) H_AB) + alpha Tr((rho_A (x) drho_B) H_AB)``
    and ``W_B`` carries ``Tr(rho_B dH_B/dt)`` and the opposite interaction terms.
    """
    dra, drb = reduced_derivatives(t, rho, bip)
    t, r, single = _batch(t, rho, bip)
    ra, rb = _marginals(r, bip)
    if single:
        dra, drb = dra[None], drb[None]
    x_a = np.einsum("nij,nab,jbia->n", dra, rb, bip._hab_t).real
    x_b = np.einsum("nij,nab,jbia->n", ra, drb, bip._hab_t).real
    pa = np.einsum("nij,nji->n", ra, _local(bip.local_A, t, bip.dA, derivative=True)).real
    pb = np.einsum("nij,nji->n", rb, _local(bip.local_B, t, bip.dB, derivative=True)).real
    wa = pa - (1 - alpha) * x_a + alpha * x_b
    wb = pb + (1 - alpha) * x_a - alpha * x_b
    return _out(wa, single), _out(wb, single)


def work_rate_party(t, rho, bip: Bipartition, alpha: float, party: str):
    if party not in ("A", "B"):
        raise ValueError("party must be 'A' or 'B'")
    wa, wb = work_rates(t, rho, bip, alpha)
    return wa if party == "A" else wb


def work_rate_total(t, rho, bip: Bipartition):
    """``Tr(rho_A dH_A/dt) + Tr(rho_B dH_B/dt)``; independent of ``alpha``."""
    t, r, single = _batch(t, rho, bip)
    ra, rb = _marginals(r, bip)
    pa = np.einsum("nij,nji->n", ra, _local(bip.local_A, t, bip.dA, derivative=True)).real
    pb = np.einsum("nij,nji->n", rb, _local(bip.local_B, t, bip.dB, derivative=True)).real
    return _out(pa + pb, single)


def bath_heat_rate(t, rho, bip: Bipartition):
    """``Tr(D(rho) H(t))``: energy delivered by the dissipators (diagnostic only)."""
    t, r, single = _batch(t, rho, bip)
    if not bip._channels_ab:
        return _out(np.zeros(len(t)), single)
    h = bip.full_hamiltonian(t)
    dis = dissipator(r, bip._channels_ab)
    return _out(np.einsum("nij,nji->n", dis, h).real, single)


def energy(t, rho, bip: Bipartition):
    """``Tr(rho H(t))``."""
    t, r, single = _batch(t, rho, bip)
    return _out(np.einsum("nij,nji->n", r, bip.full_hamiltonian(t)).real, single)


FLUX_KEYS = ("qdot_A", "qdot_B", "qdot_chi", "wdot", "wdot_A", "wdot_B", "bath_heat")


def flux_observers(bip: Bipartition, alpha: float = 0.5) -> dict:
    """Batched observers for ``propagate`` producing every series ``accumulate`` needs."""

    def all_fluxes(times, states):
        qa, qb, qc = heat_fluxes(times, states, bip)
        wa, wb = work_rates(times, states, bip, alpha)
        return {
            "qdot_A": qa, "qdot_B": qb, "qdot_chi": qc, "wdot": work_rate_total(times, states, bip),
            "wdot_A": wa, "wdot_B": wb, "bath_heat": bath_heat_rate(times, states, bip),
        }

    # each observer must return one series; share the work through a one-entry cache
    cache = {}

    def make(key):
        def f(times, states):
            token = (id(states), len(times), float(times[0]))
            if cache.get("token") != token:
                cache["token"] = token
                cache["value"] = all_fluxes(times, states)
            return cache["value"][key]

        return f

    return {k: make(k) for k in FLUX_KEYS}


def cumulative_trapezoid(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(y) == 0:
        return y
    return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])


@dataclass
class ThermoLedger:
    Q_A: float
    Q_B: float
    Q_chi: float
    W_total: float
    W_A: float
    W_B: float
    bath_heat: float
    alpha_used: float
    flux_series: dict = field(repr=False, default_factory=dict)

    @property
    def Q_out(self) -> float:
        """Heat removed from party A (positive when A is cooled)."""
        return -self.Q_A


def accumulate(traj: Trajectory, bip: Bipartition | None = None, alpha: float = 0.5, max_frequency: float | None = None) -> ThermoLedger:
    """Trapezoidal integration of the flux series recorded in ``traj.aux``.

    If the trajectory lacks flux series they are evaluated from its stored
    states, which then must cover every sample.
    """
    times = np.asarray(traj.times, dtype=float)
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise ValueError("trajectory times must be non-decreasing")
    if max_frequency is None and bip is not None:
        max_frequency = bip.max_frequency()
    if max_frequency and len(times) > 1:
        spacing = float(np.max(np.diff(times)))
        if spacing > 2 * np.pi / max_frequency:
            raise ValueError(
                f"sample spacing {spacing:g} exceeds 2*pi/omega_max={2 * np.pi / max_frequency:g}; lower sample_stride"
            )
    aux = traj.aux
    if not all(k in aux for k in FLUX_KEYS):
        if bip is None:
            raise ValueError("trajectory has no flux series and no bipartition was given")
        if len(traj.state_times) != len(times):
            raise ValueError("trajectory has no flux series and does not store every sampled state")
        obs = flux_observers(bip, alpha)
        aux = {k: obs[k](traj.state_times, traj.states) for k in FLUX_KEYS}
    series = {"t": times}
    totals = {}
    widths = 0.5 * np.diff(times)
    for k in FLUX_KEYS:
        y = np.asarray(aux[k], dtype=float)
        series[k] = y
        totals[k] = float(widths @ (y[1:] + y[:-1])) if len(times) > 1 else 0.0
    # running integrals are kept only for the two series that are exported
    series["Q_out_cum"] = -cumulative_trapezoid(series["qdot_A"], times)
    series["W_cum"] = cumulative_trapezoid(series["wdot"], times)
    return ThermoLedger(
        Q_A=totals["qdot_A"], Q_B=totals["qdot_B"], Q_chi=totals["qdot_chi"], W_total=totals["wdot"],
        W_A=totals["wdot_A"], W_B=totals["wdot_B"], bath_heat=totals["bath_heat"], alpha_used=alpha,
        flux_series=series,
    )


def bipartition_from_model(model: OpenSystemModel, party_A, local_A, local_B, interaction) -> Bipartition:
    """Convenience constructor that takes the channels from ``model``."""
    party_B = [q for q in range(model.layout.qubit_count) if q not in {model.layout.index(s) for s in party_A}]
    return Bipartition(model.layout, party_A, party_B, interaction, local_A, local_B, list(model.channels))
