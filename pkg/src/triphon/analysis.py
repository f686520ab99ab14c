"""State analysis: partial trace, fidelity, Wigner functions, matrix export.

Wigner convention: phase-space coordinates are the real and imaginary parts
of the coherent amplitude alpha, W(alpha) = (2/pi) Tr[rho D(alpha) P D(-alpha)]
with P the photon-number parity.  The vacuum then has W(0,0) = 2/pi and the
integral of W over dx dp equals one.  The convention tag travels with every
grid so downstream plots cannot silently mix conventions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from .fock import DensityState, Operator, SpaceDescriptor, SpaceError

__all__ = [
    "WignerGrid", "partial_trace", "fidelity", "state_fidelity",
    "displacement_operator", "wigner", "wigner_laguerre",
    "density_matrix_export", "WIGNER_CONVENTION",
]

WIGNER_CONVENTION = "x=Re(alpha), p=Im(alpha); W(0,0)=2/pi for vacuum; integral dx dp = 1"


@dataclass
class WignerGrid:
    xs: np.ndarray
    ps: np.ndarray
    W: np.ndarray               # shape (len(ps), len(xs))
    convention: str = WIGNER_CONVENTION

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.W, self.xs, axis=1), self.ps))


def partial_trace(state: DensityState, keep) -> DensityState:
    """Reduced density matrix over the subsystems named in ``keep``.

    ``keep`` preserves the order the subsystems have in the original space.
    """
    keep = [keep] if isinstance(keep, str) else list(keep)
    axes_keep = sorted(state.space.axis(lbl) for lbl in keep)
    if len(set(axes_keep)) != len(keep):
        raise SpaceError("duplicate labels in keep")
    dims = state.space.dims
    nax = len(dims)
    r = state.rho.reshape(dims + dims)
    for ax in sorted(set(range(nax)) - set(axes_keep), reverse=True):
        r = np.trace(r, axis1=ax, axis2=r.ndim // 2 + ax)
    kept_dims = tuple(dims[a] for a in axes_keep)
    kept_labels = tuple(state.space.labels[a] for a in axes_keep)
    d = int(np.prod(kept_dims))
    return DensityState(SpaceDescriptor(kept_dims, kept_labels), r.reshape(d, d))


def fidelity(state: DensityState, target) -> float:
    """Pure-target overlap <psi|rho|psi> in [0, 1].

    ``target`` is a ket vector or a (rank-one) DensityState on the same
    space.  This is the squared-amplitude convention; see state_fidelity for
    the square-root convention used when quoting protocol fidelities.
    """
    if isinstance(target, DensityState):
        if target.space != state.space:
            raise SpaceError("state and target spaces differ")
        val = float(np.real(np.vdot(target.rho.ravel(), state.rho.ravel())))
        return min(max(val, 0.0), 1.0)
    psi = np.asarray(target, dtype=complex).ravel()
    if psi.shape[0] != state.space.dim:
        raise SpaceError("target dimension mismatch")
    n = np.linalg.norm(psi)
    if n == 0:
        raise SpaceError("zero target vector")
    psi = psi / n
    val = float(np.real(np.vdot(psi, state.rho @ psi)))
    return min(max(val, 0.0), 1.0)


def state_fidelity(state: DensityState, target) -> float:
    """sqrt(<psi|rho|psi>): the Uhlmann fidelity for a pure target."""
    return math.sqrt(fidelity(state, target))


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    """Truncated D(alpha) = expm(alpha b+ - alpha* b) on ``dim`` levels."""
    n = np.sqrt(np.arange(1, dim))
    bd = np.diag(n, -1).astype(complex)
    return expm(alpha * bd - np.conj(alpha) * bd.conj().T)


def _single_mode(state: DensityState) -> np.ndarray:
    if len(state.space.dims) != 1:
        raise SpaceError("wigner expects a single-mode reduced state")
    return state.rho


def _pad_for(dim: int, amax: float, guard: int) -> int:
    """Levels needed so truncated displacements stay faithful on the grid.

    A displaced n <= dim Fock component reaches mean occupation
    n + |alpha|^2 + 2 |alpha| sqrt(n); the guard keeps at least ``guard``
    levels above that reach plus a Poissonian spread allowance.
    """
    reach = dim + amax**2 + 2.0 * amax * math.sqrt(dim) + 5.0 * math.sqrt(dim + amax**2 + 1.0)
    return int(math.ceil(reach)) + guard


def wigner(state: DensityState, xs, ps, guard: int = 10,
           stability_probe: int = 3, stability_tol: float = 1e-4) -> WignerGrid:
    """Displaced-parity Wigner function of a single-mode state.

    Displacements are truncated matrix exponentials on a padded space; the
    pad adapts to the grid's displacement reach with at least ``guard``
    levels of headroom (a fixed pad cannot stay faithful once
    |alpha|^2 exceeds it).  A few points are re-evaluated with 10 additional
    levels; if they move by more than ``stability_tol`` a warning reports
    the maximum delta.
    """
    rho = _single_mode(state)
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    W = _wigner_displaced(rho, xs, ps, guard)
    if stability_probe > 0:
        idx = np.linspace(0, xs.size - 1, min(stability_probe, xs.size)).astype(int)
        jdx = np.linspace(0, ps.size - 1, min(stability_probe, ps.size)).astype(int)
        W2 = _wigner_displaced(rho, xs[idx], ps[jdx], guard + 10)
        delta = float(np.max(np.abs(W2 - W[np.ix_(jdx, idx)])))
        if delta > stability_tol:
            warnings.warn(f"wigner dimension instability: max delta {delta:.2e} "
                          f"under guard extension", stacklevel=2)
    return WignerGrid(xs=xs, ps=ps, W=W)


def _wigner_displaced(rho: np.ndarray, xs, ps, guard: int) -> np.ndarray:
    """Parity expectation after inverse displacement, via rho's eigenmodes.

    D(x+ip) factorises (up to a global phase that cancels in the parity
    expectation) into expm(ip(b+b+)) expm(x(b+-b)), so only one exponential
    per grid axis value is required; each grid point then costs two
    matrix-vector products per occupied eigenvector of rho.
    """
    dim = rho.shape[0]
    amax = float(max(np.max(np.abs(xs)), np.max(np.abs(ps)))) * math.sqrt(2.0)
    big = _pad_for(dim, amax, guard)
    evals, evecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = np.abs(evals) > 1e-14
    lam = evals[keep]
    V = np.zeros((big, int(keep.sum())), dtype=complex)
    V[:dim, :] = evecs[:, keep]

    n = np.sqrt(np.arange(1, big))
    bd = np.diag(n, -1).astype(complex)
    gen_x = bd - bd.conj().T          # b+ - b
    gen_p = 1j * (bd + bd.conj().T)   # i (b+ + b)
    Dx = {x: expm(x * gen_x) for x in dict.fromkeys(xs.tolist())}
    Dp = {p: expm(p * gen_p) for p in dict.fromkeys(ps.tolist())}

    par = ((-1.0) ** np.arange(big)).reshape(-1, 1)
    W = np.empty((len(ps), len(xs)))
    for j, p in enumerate(ps):
        U = Dp[p].conj().T @ V
        for i, x in enumerate(xs):
            T = Dx[x].conj().T @ U
            W[j, i] = (2.0 / math.pi) * float(np.real(np.sum(lam * np.sum(par * np.abs(T) ** 2, axis=0))))
    return W


def wigner_laguerre(state: DensityState, xs, ps) -> WignerGrid:
    """Closed-form Laguerre-series Wigner function (independent oracle).

    Uses W(alpha) = (2/pi) Tr[rho D(2 alpha) P] with the analytic matrix
    elements of the displacement operator; no matrix exponentials involved.
    """
    rho = _single_mode(state)
    dim = rho.shape[0]
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    W = np.empty((len(ps), len(xs)))
    lg = gammaln(np.arange(1, dim + 1))  # log(n!) for n = 0..dim-1
    for j, p in enumerate(ps):
        for i, x in enumerate(xs):
            beta = 2.0 * (x + 1j * p)
            b2 = abs(beta) ** 2
            total = 0.0 + 0.0j
            for mm in range(dim):
                for nn in range(dim):
                    r = rho[nn, mm]
                    if r == 0:
                        continue
                    if mm >= nn:
                        k, dkl = nn, mm - nn
                        amp = beta ** dkl
                    else:
                        k, dkl = mm, nn - mm
                        amp = (-np.conj(beta)) ** dkl
                    # <m|D(beta)|n> (m>=n) = sqrt(n!/m!) beta^(m-n) e^{-|b|^2/2} L_n^{m-n}(|b|^2)
                    mag = math.exp(0.5 * (lg[k] - lg[k + dkl]) - 0.5 * b2)
                    dmn = amp * mag * eval_genlaguerre(k, dkl, b2)
                    total += r * dmn * (-1.0) ** nn
            W[j, i] = (2.0 / math.pi) * float(np.real(total))
    return WignerGrid(xs=xs, ps=ps, W=W)


def density_matrix_export(state: DensityState, floor: float = 0.005):
    """Rows (bra, ket, re, im, abs) for elements with magnitude above floor.

    Labels follow the (n_q1, n_m, n_q2) display order used in the level
    diagrams, regardless of the internal storage order.
    """
    space = state.space
    labels = space.basis_labels()
    has_all = all(l in space.labels for l in ("q1", "q2", "m"))

    def fmt(occ) -> str:
        if has_all:
            d = dict(zip(space.labels, occ))
            return f"|{d['q1']},{d['m']},{d['q2']}>"
        return "|" + ",".join(str(n) for n in occ) + ">"

    rows = []
    for ib, bocc in enumerate(labels):
        for ik, kocc in enumerate(labels):
            z = state.rho[ib, ik]
            if abs(z) > floor:
                rows.append((fmt(bocc), fmt(kocc), float(z.real), float(z.imag), float(abs(z))))
    return rows
