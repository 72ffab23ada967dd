"""Fixed-step RK4 kernels for the GKSL equation.

The generator is written as

    d rho/dt = -i (K rho - (K rho)^dag) + sum_k r_k L_k rho L_k^dag,
    K(t) = K0 + sum_m cos(w_m t + phi_m) H_m,
    K0 = H_static - (i/2) sum_k r_k L_k^dag L_k,

which uses the Hermiticity of rho to halve the commutator cost.  The numba
kernel stores K0, H_m and L_k as coordinate lists because every operator in
the refrigerator models is a sum of a few Pauli strings.  The numpy kernel
uses dense stacks and is the reference/fallback path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend
from ._backend import njit


@njit(cache=True, fastmath=True)
def _rhs_coo(t, r, o, hi, hk, hv, ht, freq, phase, coef, ji, ja, jv, joff, rates):
    d = r.shape[0]
    for m in range(freq.shape[0]):
        coef[m] = np.cos(freq[m] * t + phase[m])
    for i in range(d):
        for j in range(d):
            o[i, j] = 0j
    for p in range(hi.shape[0]):
        v = hv[p]
        if ht[p] >= 0:
            v = v * coef[ht[p]]
        i = hi[p]
        k = hk[p]
        for j in range(d):
            o[i, j] += v * r[k, j]
    for i in range(d):
        for j in range(i, d):
            v = -1j * (o[i, j] - o[j, i].conjugate())
            o[i, j] = v
            o[j, i] = v.conjugate()
        o[i, i] = o[i, i].real
    for ch in range(rates.shape[0]):
        g = rates[ch]
        if g == 0.0:
            continue
        for p in range(joff[ch], joff[ch + 1]):
            ip = ji[p]
            ap = ja[p]
            vp = g * jv[p]
            for q in range(joff[ch], joff[ch + 1]):
                o[ip, ji[q]] += vp * r[ap, ja[q]] * jv[q].conjugate()


@njit(cache=True, fastmath=True)
def _rk4_chunk_numba(rho, t0, dt, nsteps, stride, hi, hk, hv, ht, freq, phase, ji, ja, jv, joff, rates):
    d = rho.shape[0]
    nsamp = nsteps // stride
    samples = np.empty((nsamp, d, d), np.complex128)
    traces = np.empty(nsamp, np.float64)
    coef = np.empty(freq.shape[0], np.float64)
    k1 = np.empty((d, d), np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    tmp = np.empty_like(k1)
    r = rho.copy()
    h = 0.5 * dt
    sixth = dt / 6.0
    j = 0
    for s in range(nsteps):
        t = t0 + s * dt
        _rhs_coo(t, r, k1, hi, hk, hv, ht, freq, phase, coef, ji, ja, jv, joff, rates)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = r[a, b] + h * k1[a, b]
        _rhs_coo(t + h, tmp, k2, hi, hk, hv, ht, freq, phase, coef, ji, ja, jv, joff, rates)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = r[a, b] + h * k2[a, b]
        _rhs_coo(t + h, tmp, k3, hi, hk, hv, ht, freq, phase, coef, ji, ja, jv, joff, rates)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = r[a, b] + dt * k3[a, b]
        _rhs_coo(t + dt, tmp, k4, hi, hk, hv, ht, freq, phase, coef, ji, ja, jv, joff, rates)
        for a in range(d):
            for b in range(d):
                r[a, b] += sixth * (k1[a, b] + 2.0 * (k2[a, b] + k3[a, b]) + k4[a, b])
        if (s + 1) % stride == 0:
            tr = 0.0
            for a in range(d):
                tr += r[a, a].real
            traces[j] = tr
            # a non-positive trace means the step diverged; propagate NaN so the caller aborts
            inv = 1.0 / tr if tr > 0.0 else np.nan
            for a in range(d):
                for b in range(d):
                    r[a, b] = r[a, b] * inv
                    samples[j, a, b] = r[a, b]
            j += 1
    return r, samples, traces


def _rk4_chunk_numpy(rho, t0, dt, nsteps, stride, k0, terms, coef_fn, jumps, rates):
    d = rho.shape[0]
    nsamp = nsteps // stride
    samples = np.empty((nsamp, d, d), complex)
    traces = np.empty(nsamp)
    jumps_dag = np.conj(np.swapaxes(jumps, 1, 2))
    weighted = rates[:, None, None] * jumps

    def f(t, r):
        k = k0 + np.tensordot(coef_fn(t), terms, axes=1) if len(terms) else k0
        a = k @ r
        out = -1j * (a - a.conj().T)
        if len(rates):
            out += np.einsum("kij,jl,klm->im", weighted, r, jumps_dag)
        return out

    r = rho.copy()
    j = 0
    for s in range(nsteps):
        t = t0 + s * dt
        k1 = f(t, r)
        k2 = f(t + 0.5 * dt, r + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, r + 0.5 * dt * k2)
        k4 = f(t + dt, r + dt * k3)
        r = r + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if (s + 1) % stride == 0:
            tr = np.trace(r).real
            traces[j] = tr
            r = r * (1.0 / tr if tr > 0.0 else np.nan)
            samples[j] = r
            j += 1
    return r, samples, traces


def _coo(m: np.ndarray, tol: float = 0.0):
    i, k = np.nonzero(np.abs(m) > tol)
    return i.astype(np.int64), k.astype(np.int64), m[i, k].astype(complex)


@dataclass
class CompiledGenerator:
    """Kernel-ready form of an open-system generator.

    ``harmonic`` terms are ``(op, frequency, phase)`` with envelope
    ``cos(frequency*t + phase)``.  ``envelope_fn`` (optional) overrides the
    harmonic envelopes with an arbitrary callable returning one coefficient
    per term; only the numpy kernel supports it.
    """

    static: np.ndarray
    harmonic: list[tuple[np.ndarray, float, float]]
    jumps: list[np.ndarray]
    rates: np.ndarray
    envelope_fn: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        d = self.static.shape[0]
        self.dim = d
        self.rates = np.asarray(self.rates, dtype=float)
        jumps = np.array(self.jumps, dtype=complex).reshape(len(self.jumps), d, d)
        self._jumps = jumps
        decay = np.zeros((d, d), complex)
        for r, L in zip(self.rates, jumps):
            decay += r * (L.conj().T @ L)
        self.k0 = np.asarray(self.static, complex) - 0.5j * decay
        self._terms = np.array([op for op, _, _ in self.harmonic], dtype=complex).reshape(len(self.harmonic), d, d)
        self._freq = np.array([w for _, w, _ in self.harmonic], dtype=float)
        self._phase = np.array([p for _, _, p in self.harmonic], dtype=float)

        parts = [(*_coo(self.k0), np.full(np.count_nonzero(np.abs(self.k0) > 0), -1, np.int64))]
        for m, op in enumerate(self._terms):
            i, k, v = _coo(op)
            parts.append((i, k, v, np.full(len(i), m, np.int64)))
        self._hi = np.concatenate([p[0] for p in parts]).astype(np.int64)
        self._hk = np.concatenate([p[1] for p in parts]).astype(np.int64)
        self._hv = np.concatenate([p[2] for p in parts]).astype(complex)
        self._ht = np.concatenate([p[3] for p in parts]).astype(np.int64)

        ji, ja, jv, joff = [], [], [], [0]
        for L in jumps:
            i, a, v = _coo(L)
            ji.append(i)
            ja.append(a)
            jv.append(v)
            joff.append(joff[-1] + len(i))
        self._ji = np.concatenate(ji).astype(np.int64) if ji else np.zeros(0, np.int64)
        self._ja = np.concatenate(ja).astype(np.int64) if ja else np.zeros(0, np.int64)
        self._jv = np.concatenate(jv).astype(complex) if jv else np.zeros(0, complex)
        self._joff = np.array(joff, dtype=np.int64)

    def coefficients(self, t: float) -> np.ndarray:
        if self.envelope_fn is not None:
            return np.asarray(self.envelope_fn(t), dtype=float)
        return np.cos(self._freq * t + self._phase)

    def run(self, rho: np.ndarray, t0: float, dt: float, nsteps: int, stride: int, backend: str | None = None):
        """Advance ``nsteps`` RK4 steps; sample (and renormalise) every ``stride`` steps.

        Returns ``(final_state, samples, traces_before_renormalisation)``.
        """
        backend = backend or _backend.get_backend()
        rho = np.ascontiguousarray(rho, dtype=complex)
        if backend == "numba" and self.envelope_fn is None:
            return _rk4_chunk_numba(
                rho, float(t0), float(dt), int(nsteps), int(stride),
                self._hi, self._hk, self._hv, self._ht, self._freq, self._phase,
                self._ji, self._ja, self._jv, self._joff, self.rates,
            )
        return _rk4_chunk_numpy(
            rho, float(t0), float(dt), int(nsteps), int(stride),
            self.k0, self._terms, self.coefficients, self._jumps, self.rates,
        )
