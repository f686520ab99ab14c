"""Truncated operator algebra on the qubit1 (x) qubit2 (x) phonon space.

Subsystem order is fixed as (qubit1, qubit2, phonon); protocol code refers to
subsystems by label, never by raw axis index.  Operators hold either a scipy
CSR matrix or a dense ndarray; density matrices are always dense since they
fill in under dissipation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SpaceDescriptor", "Operator", "DensityState", "SpaceError",
    "default_space", "destroy", "number", "identity", "parity",
    "embed", "thermal_state", "pure_state", "ket", "projector",
    "expectation",
]


class SpaceError(ValueError):
    """Mismatched or invalid Hilbert-space descriptors."""


@dataclass(frozen=True)
class SpaceDescriptor:
    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.dims) != len(self.labels):
            raise SpaceError("dims and labels length mismatch")
        if any(d < 2 for d in self.dims):
            raise SpaceError("every subsystem dimension must be >= 2")
        if len(set(self.labels)) != len(self.labels):
            raise SpaceError("duplicate subsystem labels")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpaceError(f"unknown subsystem label {label!r}") from None

    def index(self, occupations: tuple[int, ...]) -> int:
        """Flat basis index of a product state given per-subsystem levels."""
        if len(occupations) != len(self.dims):
            raise SpaceError("occupation tuple length mismatch")
        for n, d in zip(occupations, self.dims):
            if not 0 <= n < d:
                raise SpaceError(f"occupation {n} outside dimension {d}")
        return int(np.ravel_multi_index(occupations, self.dims))

    def basis_labels(self):
        """All product-basis occupation tuples in flat-index order."""
        return [tuple(t) for t in np.ndindex(*self.dims)]


def default_space(n_m: int = 40, n_q: int = 3) -> SpaceDescriptor:
    """Two n_q-level transmons and an n_m-level phonon mode."""
    return SpaceDescriptor(dims=(n_q, n_q, n_m), labels=("q1", "q2", "m"))


def _single_mode_space(dim: int) -> SpaceDescriptor:
    return SpaceDescriptor(dims=(dim,), labels=("m",))


@dataclass
class Operator:
    """Matrix on a SpaceDescriptor, sparse (CSR) or dense."""

    space: SpaceDescriptor
    data: object  # csr_matrix | np.ndarray
    hermitian_hint: bool = False

    def __post_init__(self):
        n = self.space.dim
        if self.data.shape != (n, n):
            raise SpaceError(f"operator shape {self.data.shape} != space dim {n}")

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def dense(self) -> np.ndarray:
        return self.data.toarray() if self.is_sparse else np.asarray(self.data)

    def sparse(self) -> sp.csr_matrix:
        return self.data.tocsr() if self.is_sparse else sp.csr_matrix(self.data)

    def dag(self) -> "Operator":
        return Operator(self.space, self.data.conj().T.tocsr() if self.is_sparse
                        else self.data.conj().T, self.hermitian_hint)

    def _coerce(self, other):
        if isinstance(other, Operator):
            if other.space != self.space:
                raise SpaceError("operator spaces differ")
            return other.data
        return other

    def __matmul__(self, other):
        rhs = self._coerce(other)
        return Operator(self.space, self.data @ rhs)

    def __add__(self, other):
        rhs = self._coerce(other)
        return Operator(self.space, self.data + rhs)

    def __sub__(self, other):
        rhs = self._coerce(other)
        return Operator(self.space, self.data - rhs)

    def __mul__(self, scalar):
        return Operator(self.space, self.data * scalar, self.hermitian_hint
                        and float(np.imag(scalar)) == 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def hermiticity_defect(self) -> float:
        d = self.dense()
        return float(np.max(np.abs(d - d.conj().T))) if d.size else 0.0


@dataclass
class DensityState:
    """Density matrix plus its space descriptor (dense storage)."""

    space: SpaceDescriptor
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        n = self.space.dim
        if self.rho.shape != (n, n):
            raise SpaceError(f"rho shape {self.rho.shape} != space dim {n}")

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def check(self, trace_tol: float = 1e-9, herm_tol: float = 1e-10,
              eig_tol: float = 1e-8) -> None:
        """Raise SpaceError if trace, Hermiticity or positivity are violated."""
        if abs(self.trace() - 1.0) > trace_tol:
            raise SpaceError(f"trace deviates by {abs(self.trace() - 1.0):.2e}")
        defect = float(np.max(np.abs(self.rho - self.rho.conj().T)))
        if defect > herm_tol:
            raise SpaceError(f"hermiticity defect {defect:.2e}")
        lo = self.min_eigenvalue()
        if lo < -eig_tol:
            raise SpaceError(f"negative eigenvalue {lo:.2e}")

    def copy(self) -> "DensityState":
        return DensityState(self.space, self.rho.copy())


def destroy(dim: int) -> Operator:
    """Single-mode lowering operator, <n-1|a|n> = sqrt(n)."""
    if dim < 2:
        raise SpaceError("destroy requires dim >= 2")
    data = sp.diags(np.sqrt(np.arange(1, dim)), offsets=1, format="csr", dtype=complex)
    return Operator(_single_mode_space(dim), data)


def number(dim: int) -> Operator:
    data = sp.diags(np.arange(dim, dtype=float), offsets=0, format="csr", dtype=complex)
    return Operator(_single_mode_space(dim), data, hermitian_hint=True)


def parity(dim: int) -> Operator:
    """Photon-number parity (-1)^n on a single mode."""
    data = sp.diags((-1.0) ** np.arange(dim), offsets=0, format="csr", dtype=complex)
    return Operator(_single_mode_space(dim), data, hermitian_hint=True)


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, sp.identity(space.dim, dtype=complex, format="csr"),
                    hermitian_hint=True)


def embed(op: Operator, slot, space: SpaceDescriptor) -> Operator:
    """Extend a single-mode operator to the full space by Kronecker products.

    ``slot`` is a label or an axis index; the operator dimension must match
    that subsystem.  Kronecker ordering follows the space's subsystem order.
    """
    axis = space.axis(slot) if isinstance(slot, str) else int(slot)
    if not 0 <= axis < len(space.dims):
        raise SpaceError(f"slot {slot!r} out of range")
    if op.space.dim != space.dims[axis]:
        raise SpaceError(f"operator dim {op.space.dim} != subsystem dim {space.dims[axis]}")
    mat = op.sparse()
    out = None
    for k, d in enumerate(space.dims):
        factor = mat if k == axis else sp.identity(d, dtype=complex, format="csr")
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return Operator(space, out.tocsr(), op.hermitian_hint)


def thermal_state(dim: int, n_bar: float) -> DensityState:
    """Truncated single-mode thermal state, renormalised to unit trace."""
    if n_bar < 0:
        raise SpaceError("n_bar must be >= 0")
    if n_bar == 0:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return DensityState(_single_mode_space(dim), rho)
    r = n_bar / (n_bar + 1.0)
    p = r ** np.arange(dim)
    p /= p.sum()
    return DensityState(_single_mode_space(dim), np.diag(p).astype(complex))


def ket(space: SpaceDescriptor, amplitudes: dict) -> np.ndarray:
    """Normalised state vector from {occupation tuple: amplitude}."""
    v = np.zeros(space.dim, dtype=complex)
    for occ, amp in amplitudes.items():
        v[space.index(tuple(occ))] += amp
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise SpaceError("zero state vector")
    return v / norm


def pure_state(space: SpaceDescriptor, amplitudes: dict) -> DensityState:
    """Normalised rank-one projector from {occupation tuple: amplitude}."""
    v = ket(space, amplitudes)
    return DensityState(space, np.outer(v, v.conj()))


def projector(space: SpaceDescriptor, **levels) -> Operator:
    """Projector onto fixed levels of some subsystems, identity on the rest.

    Example: projector(space, q1=0, q2=1) post-selects the (0_1, 1_2) qubit
    branch over all phonon numbers.
    """
    diag = np.ones(space.dims, dtype=complex)
    for label, n in levels.items():
        axis = space.axis(label)
        if not 0 <= n < space.dims[axis]:
            raise SpaceError(f"level {n} outside subsystem {label!r}")
        sel = np.zeros(space.dims[axis])
        sel[n] = 1.0
        shape = [1] * len(space.dims)
        shape[axis] = space.dims[axis]
        diag = diag * sel.reshape(shape)
    return Operator(space, sp.diags(diag.ravel(), offsets=0, format="csr"),
                    hermitian_hint=True)


def expectation(state: DensityState, op: Operator) -> complex:
    """Tr(rho * op); raises on space mismatch."""
    if state.space != op.space:
        raise SpaceError("state and operator spaces differ")
    if op.is_sparse:
        m = op.data.tocoo()
        # Tr(rho O) = sum_{ji} O_{ji} rho_{ij}
        val = complex(np.sum(m.data * state.rho[m.col, m.row]))
    else:
        val = complex(np.sum(np.asarray(op.data).T * state.rho))
    return val
