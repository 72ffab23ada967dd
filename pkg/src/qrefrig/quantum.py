"""Dense multi-qubit linear algebra: Paulis, embeddings, partial traces, states.

Conventions
-----------
Qubit 1 is the leftmost tensor factor, so ``embed(sx, layout, 0)`` is
``sx (x) I (x) ...``.  ``sigma_z = diag(1, -1)``; the ``+1`` eigenvector
``KET0`` is the *excited* state of ``(w/2) sigma_z`` and ``KET1`` the ground
state.  ``SIGMA_MINUS = |1><0|`` lowers the energy.

All functions accepting a density matrix also accept a stack of them with
leading batch dimensions (shape ``(..., d, d)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
# projector onto the excited (sigma_z = +1) state
P_EXCITED = (IDENTITY2 + SIGMA_Z) / 2

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS_Y = (KET0 + 1j * KET1) / np.sqrt(2)
KET_MINUS_Y = (KET0 - 1j * KET1) / np.sqrt(2)
KET_PLUS_X = (KET0 + KET1) / np.sqrt(2)
KET_MINUS_X = (KET0 - KET1) / np.sqrt(2)

TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = -1e-8


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered list of qubit sites; site 0 is the leftmost tensor factor."""

    qubit_count: int
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.qubit_count < 1:
            raise ValueError("qubit_count must be positive")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"q{i + 1}" for i in range(self.qubit_count)))
        elif len(self.labels) != self.qubit_count:
            raise ValueError("one label per qubit required")

    @property
    def dim(self) -> int:
        return 2**self.qubit_count

    def index(self, site: int | str) -> int:
        if isinstance(site, str):
            return self.labels.index(site)
        if not 0 <= site < self.qubit_count:
            raise IndexError(f"site {site} out of range for {self.qubit_count} qubits")
        return int(site)


def ket_to_dm(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of matrices, left to right."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def embed(op: np.ndarray, layout: SubsystemLayout, site: int | str) -> np.ndarray:
    """Place a single-qubit operator at ``site`` with identities elsewhere."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"embed expects a 2x2 operator, got {op.shape}")
    site = layout.index(site)
    factors = [IDENTITY2] * layout.qubit_count
    factors[site] = op
    return kron(*factors)


def pauli(axis: str, layout: SubsystemLayout, site: int | str) -> np.ndarray:
    """``sigma_{axis}`` on ``site``; axis is one of x, y, z, +, -."""
    table = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z, "+": SIGMA_PLUS, "-": SIGMA_MINUS}
    return embed(table[axis], layout, site)


def _check_square(rho: np.ndarray, dim: int | None = None) -> None:
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {rho.shape}")
    if dim is not None and rho.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {rho.shape[-1]}")


def partial_trace(rho: np.ndarray, layout: SubsystemLayout, keep: Iterable[int | str]) -> np.ndarray:
    """Reduced state on the ``keep`` sites (layout order preserved)."""
    rho = np.asarray(rho)
    _check_square(rho, layout.dim)
    keep_idx = sorted({layout.index(s) for s in keep})
    if not keep_idx:
        raise ValueError("keep set must be nonempty")
    n = layout.qubit_count
    batch = rho.shape[:-2]
    nb = len(batch)
    tensor = rho.reshape(batch + (2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyz"
    batch_letters = "ABCDEFGH"[:nb]
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for q in range(n):
        if q not in keep_idx:
            col[q] = row[q]
    out = "".join(row[q] for q in keep_idx) + "".join(col[q] for q in keep_idx)
    spec = batch_letters + "".join(row) + "".join(col) + "->" + batch_letters + out
    d_keep = 2 ** len(keep_idx)
    return np.einsum(spec, tensor).reshape(batch + (d_keep, d_keep))


def permute_qubits(op: np.ndarray, layout: SubsystemLayout, order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of ``op`` so that new factor k is old ``order[k]``."""
    order = [layout.index(s) for s in order]
    if sorted(order) != list(range(layout.qubit_count)):
        raise ValueError("order must be a permutation of all sites")
    op = np.asarray(op)
    n = layout.qubit_count
    batch = op.shape[:-2]
    nb = len(batch)
    t = op.reshape(batch + (2,) * (2 * n))
    axes = list(range(nb)) + [nb + q for q in order] + [nb + n + q for q in order]
    return t.transpose(axes).reshape(op.shape)


def insert_qubit_state(rest: np.ndarray, state: np.ndarray, layout: SubsystemLayout, site: int) -> np.ndarray:
    """Inverse of tracing out ``site``: returns ``rest (x) state`` with ``state`` at ``site``."""
    site = layout.index(site)
    full = kron(rest, state) if rest.ndim == 2 else np.einsum("nij,ab->niajb", rest, state).reshape(
        rest.shape[0], rest.shape[1] * 2, rest.shape[2] * 2
    )
    # full currently has the new qubit last; move it to ``site``
    n = layout.qubit_count
    order = list(range(n - 1))
    order.insert(site, n - 1)
    return permute_qubits(full, layout, order)


def expectation(rho: np.ndarray, obs: np.ndarray):
    """``Tr(rho @ obs)``; returns a complex scalar or an array over the batch."""
    rho = np.asarray(rho)
    obs = np.asarray(obs)
    _check_square(rho)
    if obs.shape != rho.shape[-2:]:
        raise ValueError(f"dimension mismatch: rho {rho.shape[-2:]}, observable {obs.shape}")
    return np.einsum("...ij,ji->...", rho, obs)


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - np.swapaxes(m, -1, -2).conj()), initial=0.0) <= tol)


def min_eigenvalue(rho: np.ndarray):
    """Smallest eigenvalue of the Hermitian part (per batch element)."""
    rho = np.asarray(rho)
    herm = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
    return np.linalg.eigvalsh(herm)[..., 0]


def check_density_matrix(
    rho: np.ndarray,
    trace_tol: float = TRACE_TOL,
    hermitian_tol: float = HERMITIAN_TOL,
    positivity_tol: float = POSITIVITY_TOL,
) -> None:
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix."""
    rho = np.asarray(rho)
    _check_square(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0)) > trace_tol:
        raise ValueError(f"trace deviates from 1 by {np.max(np.abs(tr - 1.0)):.3e}")
    if not is_hermitian(rho, hermitian_tol):
        raise ValueError("density matrix is not Hermitian")
    lam = np.min(min_eigenvalue(rho))
    if lam < positivity_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.3e}")


def thermal_occupation(omega: float, temperature: float) -> float:
    """Bose-Einstein occupation ``1 / (exp(omega/T) - 1)``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    x = omega / temperature
    if x > 700.0:
        return 0.0
    return float(1.0 / np.expm1(x))


def gibbs_state(h: np.ndarray, temperature: float) -> np.ndarray:
    """``exp(-H/T) / Tr exp(-H/T)``; ``temperature=np.inf`` gives I/d."""
    h = np.asarray(h, dtype=complex)
    _check_square(h)
    if not is_hermitian(h, 1e-12):
        raise ValueError("Hamiltonian must be Hermitian")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    d = h.shape[0]
    if np.isinf(temperature):
        return np.eye(d, dtype=complex) / d
    e, v = np.linalg.eigh(h)
    w = np.exp(-(e - e.min()) / temperature)
    w /= w.sum()
    return (v * w) @ v.conj().T


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or given-rank) density matrix from a Ginibre draw."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = 0.5 * (g + g.conj().T)
    return scale * h / np.linalg.norm(h, 2)
