"""Lindblad master-equation integrator over piecewise pulse schedules.

The right-hand side is evaluated in direct form on the dense density matrix:

    drho/dt = A rho + (A rho)+  +  sum_k gamma_k o_k rho o_k+
    A = -i H - (1/2) sum_k gamma_k o_k+ o_k

never building a D^2 x D^2 superoperator.  The six physical collapse
channels (phonon decay/excitation, qubit decay, qubit dephasing) are all
single-subsystem ladder or number operators, so their sandwich terms reduce
to strided slice arithmetic on the 6-axis view of rho.

Stepping uses an embedded adaptive Dormand-Prince 5(4) pair with FSAL and a
plain I-controller; rho is re-symmetrised after every accepted step and its
trace drift is monitored, not corrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fock import DensityState, Operator, SpaceDescriptor, SpaceError, expectation
from .hamiltonian import (Excite, Gate, Measure, PulseSchedule, Reset,
                          TimeDependentHamiltonian, ideal_gate)

__all__ = [
    "DissipationChannel", "DissipationSet", "Trajectory", "IntegratorStats",
    "IntegrationError", "MeasurementError", "make_dissipators", "evolve",
    "apply_reset", "apply_excite", "apply_measurement", "apply_gate",
]


class IntegrationError(RuntimeError):
    pass


class MeasurementError(RuntimeError):
    pass


@dataclass(frozen=True)
class DissipationChannel:
    op: Operator
    rate: float                 # 1/s
    kind: str | None = None     # "lower" | "raise" | "number" | None (generic)
    axis: int | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise SpaceError("dissipation rate must be >= 0")


@dataclass(frozen=True)
class DissipationSet:
    space: SpaceDescriptor
    channels: tuple

    def __iter__(self):
        return iter(self.channels)


def make_dissipators(params, derived, space: SpaceDescriptor) -> DissipationSet:
    """The six collapse channels of the thermal-bath + qubit-coherence model.

    b at (n_th+1)*gamma_m, b+ at n_th*gamma_m, c_i at 1/T1 and n_i at 1/T2.
    """
    from .fock import destroy, embed, number

    ax_m, ax_1, ax_2 = space.axis("m"), space.axis("q1"), space.axis("q2")
    b = embed(destroy(space.dims[ax_m]), "m", space)
    c1 = embed(destroy(space.dims[ax_1]), "q1", space)
    c2 = embed(destroy(space.dims[ax_2]), "q2", space)
    n1 = embed(number(space.dims[ax_1]), "q1", space)
    n2 = embed(number(space.dims[ax_2]), "q2", space)

    gm = derived.gamma_m
    nth = derived.n_th
    channels = (
        DissipationChannel(b, (nth + 1.0) * gm, "lower", ax_m),
        DissipationChannel(b.dag(), nth * gm, "raise", ax_m),
        DissipationChannel(c1, 1.0 / params.T1, "lower", ax_1),
        DissipationChannel(c2, 1.0 / params.T1, "lower", ax_2),
        DissipationChannel(n1, 1.0 / params.T2, "number", ax_1),
        DissipationChannel(n2, 1.0 / params.T2, "number", ax_2),
    )
    return DissipationSet(space, channels)


# ---------------------------------------------------------------------------
# structured collapse-sandwich kernels


class _Sandwich:
    """Precomputed slice/weight data for gamma * o rho o+ of one channel.

    Ladder channels carry their weight arrays broadcast to the full sliced
    shape so the hot loop is a single fused multiply-add; "number" channels
    are merged by the caller into one dense mask.
    """

    def __init__(self, channel: DissipationChannel, dims):
        self.rate = channel.rate
        self.kind = channel.kind
        nax = len(dims)
        if channel.kind in ("lower", "raise") and channel.axis is not None:
            ax, d = channel.axis, dims[channel.axis]
            w = np.sqrt(np.arange(1, d))
            shape_ket = [1] * (2 * nax)
            shape_ket[ax] = d - 1
            shape_bra = [1] * (2 * nax)
            shape_bra[nax + ax] = d - 1
            w2 = channel.rate * w.reshape(shape_ket) * w.reshape(shape_bra)
            sliced_shape = tuple(dims) + tuple(dims)
            sliced_shape = tuple(n - 1 if k in (ax, nax + ax) else n
                                 for k, n in enumerate(sliced_shape))
            self.w2 = np.broadcast_to(w2, sliced_shape).copy()
            low = [slice(None)] * (2 * nax)
            high = [slice(None)] * (2 * nax)
            low[ax] = low[nax + ax] = slice(0, d - 1)
            high[ax] = high[nax + ax] = slice(1, d)
            lo, hi = tuple(low), tuple(high)
            self.src, self.dst = (hi, lo) if channel.kind == "lower" else (lo, hi)
        else:
            self.kind = None
            self.o = channel.op.sparse()

    def apply(self, rho6, out6, rho_flat, out_flat):
        if self.kind in ("lower", "raise"):
            out6[self.dst] += self.w2 * rho6[self.src]
        else:
            # generic: gamma * o rho o+; stage matrices are Hermitian
            orho = self.o @ rho_flat
            out_flat += self.rate * (self.o @ orho.conj().T)


def _number_mask(channels, dims) -> np.ndarray | None:
    """Combined dense weight mask for all number-type (dephasing) channels."""
    nax = len(dims)
    total = None
    for ch in channels:
        if ch.kind != "number" or ch.axis is None or ch.rate == 0.0:
            continue
        w = np.arange(dims[ch.axis], dtype=float)
        shape_ket = [1] * (2 * nax)
        shape_ket[ch.axis] = dims[ch.axis]
        shape_bra = [1] * (2 * nax)
        shape_bra[nax + ch.axis] = dims[ch.axis]
        term = ch.rate * w.reshape(shape_ket) * w.reshape(shape_bra)
        term = np.broadcast_to(term, tuple(dims) + tuple(dims))
        total = term.copy() if total is None else total + term
    return total


def _channel_diag(channel: DissipationChannel, dims) -> np.ndarray:
    """gamma * diag(o+ o) on the full space."""
    nax = len(dims)
    if channel.kind in ("lower", "raise", "number") and channel.axis is not None:
        d = dims[channel.axis]
        n = np.arange(d, dtype=float)
        if channel.kind == "lower":
            local = n
        elif channel.kind == "raise":
            # truncated o = b+: o+o = diag(1..d-1, 0) -- the top level is
            # annihilated by the truncated raising operator, so it must not
            # acquire a spurious no-jump decay
            local = n + 1.0
            local[-1] = 0.0
        else:
            local = n * n
        shape = [1] * nax
        shape[channel.axis] = d
        full = np.ones(dims) * local.reshape(shape)
        return channel.rate * full.ravel()
    o = channel.op.sparse()
    oo = (o.conj().T @ o).tocsr()
    offdiag = oo - sp.diags(oo.diagonal())
    if offdiag.nnz and abs(offdiag).max() > 1e-12:
        raise SpaceError("generic collapse operator with non-diagonal o+o is unsupported")
    return channel.rate * oo.diagonal().real


class _SegmentGenerator:
    """RHS evaluator for one schedule segment."""

    def __init__(self, H_static: Operator, diss: DissipationSet, drive_info,
                 t_seg_start: float):
        space = H_static.space
        self.dims = space.dims
        self.shape6 = space.dims + space.dims
        diag = np.zeros(space.dim)
        self.sandwiches = []
        for ch in diss:
            if ch.rate == 0.0:
                continue
            diag += _channel_diag(ch, self.dims)
            if ch.kind != "number":
                self.sandwiches.append(_Sandwich(ch, self.dims))
        self.number_mask = _number_mask(diss, self.dims)
        self.A = (-1j * H_static.sparse() - 0.5 * sp.diags(diag)).tocsr()
        self.drive = drive_info  # (lowering csr, DrivePulse, delta) or None
        self.t0 = t_seg_start
        if drive_info is not None:
            low = drive_info[0]
            self.low = low
            self.lowd = low.conj().T.tocsr()

    def rhs(self, t: float, rho: np.ndarray, out: np.ndarray) -> None:
        M = self.A @ rho
        np.add(M, M.conj().T, out=out)
        rho6 = rho.reshape(self.shape6)
        out6 = out.reshape(self.shape6)
        if self.number_mask is not None:
            out6 += self.number_mask * rho6
        for s in self.sandwiches:
            s.apply(rho6, out6, rho, out)
        if self.drive is not None:
            _, pulse, delta = self.drive
            tr = t - self.t0
            if 0.0 <= tr <= pulse.duration:
                env = pulse.envelope(tr)
                if env != 0.0:
                    coeff = 0.5 * env * np.exp(1j * (pulse.phase + delta * tr))
                    # -i H_d rho with H_d = coeff*low + conj(coeff)*low+
                    T = (-1j * coeff) * (self.low @ rho) + (-1j * np.conj(coeff)) * (self.lowd @ rho)
                    out += T + T.conj().T


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_A_C = [a.astype(complex) for a in _A]
_E_C = _E.astype(complex)


@dataclass
class IntegratorStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    min_eigenvalues: list = field(default_factory=list)  # (t, lambda_min)


@dataclass
class Trajectory:
    """Time series of derived observables plus optional state snapshots."""

    t: np.ndarray
    n_m: np.ndarray
    n_q1: np.ndarray
    n_q2: np.ndarray
    purity: np.ndarray
    trace_err: np.ndarray
    snapshots: dict
    stats: IntegratorStats
    events: list                    # (t, description, probability or None)
    frame_phases: tuple             # accumulated (int d1 dt, int d2 dt, w_m * T)
    final_state: DensityState

    def max_trace_drift(self) -> float:
        return float(np.max(self.trace_err)) if len(self.trace_err) else 0.0


def _observable_dibs(space: SpaceDescriptor):
    """Diagonal weight vectors for <n_q1>, <n_q2>, <n_m>."""
    dims = space.dims
    out = []
    for label in ("m", "q1", "q2"):
        ax = space.axis(label)
        shape = [1] * len(dims)
        shape[ax] = dims[ax]
        out.append((np.ones(dims) * np.arange(dims[ax]).reshape(shape)).ravel())
    return out  # order: n_m, n_q1, n_q2


def apply_reset(state: DensityState, qubits=("q1", "q2")) -> DensityState:
    """Complete amplitude damping on the target qubits (Kraus K_k = |0><k|)."""
    rho = state.rho.copy()
    nax = len(state.space.dims)
    for label in qubits if isinstance(qubits, (tuple, list)) else (qubits,):
        ax = state.space.axis(label)
        d = state.space.dims[ax]
        r6 = rho.reshape(state.space.dims + state.space.dims)
        traced = np.trace(r6, axis1=ax, axis2=nax + ax)
        out = np.zeros_like(r6)
        idx = [slice(None)] * (2 * nax)
        idx[ax] = 0
        idx[nax + ax] = 0
        out[tuple(idx)] = traced
        rho = out.reshape(state.space.dim, state.space.dim)
    return DensityState(state.space, rho)


def apply_excite(state: DensityState, qubit: str) -> DensityState:
    """Ideal instantaneous pi rotation on the 0-1 subspace of one qubit."""
    ax = state.space.axis(qubit)
    d = state.space.dims[ax]
    perm = list(range(d))
    perm[0], perm[1] = perm[1], perm[0]
    nax = len(state.space.dims)
    r6 = state.rho.reshape(state.space.dims + state.space.dims)
    r6 = np.take(np.take(r6, perm, axis=ax), perm, axis=nax + ax)
    return DensityState(state.space, r6.reshape(state.space.dim, state.space.dim))


def apply_measurement(state: DensityState, proj: Operator):
    """(P rho P / p, p) with p = Tr(P rho); p < 1e-12 raises MeasurementError."""
    if proj.space != state.space:
        raise SpaceError("projector space mismatch")
    P = proj.sparse()
    defect = abs(P - P.conj().T).max()
    idem = abs((P @ P) - P).max()
    if defect > 1e-10 or idem > 1e-10:
        raise SpaceError("measurement operator must be an orthogonal projector")
    p = float(np.real(expectation(state, proj)))
    if p < 1e-12:
        raise MeasurementError(f"post-selection impossible: probability {p:.3e}")
    prp = P @ (P @ state.rho).conj().T
    prp = 0.5 * (prp + prp.conj().T)
    return DensityState(state.space, np.asarray(prp) / p), p


def apply_gate(state: DensityState, gate: Operator) -> DensityState:
    """U rho U+ for an instantaneous unitary event (rho Hermitian)."""
    U = gate.sparse()
    out = np.asarray(U @ (U @ state.rho).conj().T)
    return DensityState(state.space, 0.5 * (out + out.conj().T))


def _apply_events(state: DensityState, events, space, t, log):
    for ev in events:
        if isinstance(ev, Reset):
            state = apply_reset(state, ev.qubits)
            log.append((t, f"reset {','.join(ev.qubits)}", None))
        elif isinstance(ev, Excite):
            state = apply_excite(state, ev.qubit)
            log.append((t, f"excite {ev.qubit}", None))
        elif isinstance(ev, Measure):
            from .fock import projector

            proj = projector(space, **dict(ev.levels))
            state, p = apply_measurement(state, proj)
            log.append((t, f"measure {dict(ev.levels)}", p))
        elif isinstance(ev, Gate):
            U = ideal_gate(ev.kind, ev.angle, ev.phase, space)
            state = apply_gate(state, U)
            log.append((t, f"gate {ev.kind}", None))
        else:
            raise SpaceError(f"unknown event {ev!r}")
    return state


def evolve(rho0: DensityState, handle: TimeDependentHamiltonian,
           diss: DissipationSet | None, *, rtol: float = 1e-8,
           atol: float = 1e-10, record_points: int = 400,
           snapshot_times=(), positivity_checks: int = 10,
           max_steps: int = 2_000_000) -> Trajectory:
    """Integrate the master equation over the handle's full schedule.

    Records <b+b>, <c_i+c_i>, purity and trace drift on a grid of about
    ``record_points`` times (always including segment boundaries), takes
    density-matrix snapshots at ``snapshot_times`` (clipped to the grid of
    integration stop points), and applies instantaneous events at segment
    boundaries.  Raises IntegrationError on step-size underflow.
    """
    space = rho0.space
    if diss is None:
        diss = DissipationSet(space, ())
    sched = handle.schedule
    total = sched.total_duration
    if total <= 0 and not sched.segments:
        raise IntegrationError("empty schedule")

    w_m, w_q1, w_q2 = _observable_dibs(space)
    rho = rho0.rho.astype(complex).copy()
    rho = 0.5 * (rho + rho.conj().T)

    rec_t, rec_nm, rec_n1, rec_n2, rec_pur, rec_terr = [], [], [], [], [], []
    snapshots = {}
    stats = IntegratorStats()
    events_log = []
    snap_left = sorted(float(ts) for ts in snapshot_times)

    def record(t, rho):
        diag = np.real(np.diagonal(rho))
        rec_t.append(t)
        rec_nm.append(float(diag @ w_m))
        rec_n1.append(float(diag @ w_q1))
        rec_n2.append(float(diag @ w_q2))
        rec_pur.append(float(np.real(np.vdot(rho, rho))))
        rec_terr.append(abs(float(diag.sum()) - 1.0))

    # positivity checkpoints, evenly spread over the run
    pos_times = set()
    if positivity_checks > 0 and total > 0:
        pos_times = {total * (k + 1) / positivity_checks for k in range(positivity_checks)}

    th1 = th2 = 0.0
    t_global = 0.0
    record(0.0, rho)
    while snap_left and snap_left[0] <= 0.0:
        snapshots[snap_left.pop(0)] = DensityState(space, rho.copy())
    state = DensityState(space, rho)

    bounds = sched.boundaries()
    n_segs = len(sched.segments)
    for i_seg, seg in enumerate(sched.segments):
        state = _apply_events(state, seg.events, space, t_global, events_log)
        rho = state.rho
        if seg.duration == 0.0:
            continue
        H_static = handle.static_for(seg)
        gen = _SegmentGenerator(H_static, diss, handle.drive_info(seg), t_global)
        t_end = bounds[i_seg + 1]

        # record times inside this segment (proportional share of the budget)
        n_rec = max(2, int(round(record_points * seg.duration / max(total, seg.duration))))
        seg_rec = list(np.linspace(t_global, t_end, n_rec + 1)[1:])
        stops = sorted(set(seg_rec)
                       | {ts for ts in snap_left if t_global < ts <= t_end}
                       | {pt for pt in pos_times if t_global < pt <= t_end})

        rho, t_global = _integrate_segment(
            gen, rho, t_global, t_end, stops, rtol, atol, stats, record,
            snapshots, snap_left, pos_times, space, max_steps)
        state = DensityState(space, rho)
        th1 += (seg.omega1 - handle.omega_ref) * seg.duration
        th2 += (seg.omega2 - handle.omega_ref) * seg.duration

    state = _apply_events(state, sched.final_events, space, t_global, events_log)

    return Trajectory(
        t=np.array(rec_t), n_m=np.array(rec_nm), n_q1=np.array(rec_n1),
        n_q2=np.array(rec_n2), purity=np.array(rec_pur),
        trace_err=np.array(rec_terr), snapshots=snapshots, stats=stats,
        events=events_log,
        frame_phases=(th1, th2, handle.derived.omega_m * total),
        final_state=state,
    )


def _integrate_segment(gen, rho, t0, t_end, stops, rtol, atol, stats, record,
                       snapshots, snap_left, pos_times, space, max_steps):
    n = rho.shape[0]
    K = np.empty((7, n * n), dtype=complex)
    rho_flat = rho.reshape(-1)
    work = np.empty_like(rho)
    work_flat = work.reshape(-1)
    t = t0
    t_tiny = 1e-14 * max(t_end - t0, 1e-12)

    gen.rhs(t, rho, K[0].reshape(n, n))
    stats.rhs_evals += 1
    need_k0 = False
    h = min(t_end - t0,
            0.01 * (np.max(np.abs(rho)) + atol) / max(np.max(np.abs(K[0])), 1e-300))
    h = max(h, 1e-15)

    stop_iter = iter(stops)
    next_stop = next(stop_iter, t_end)

    while t < t_end - t_tiny:
        if stats.accepted + stats.rejected > max_steps:
            raise IntegrationError(f"step budget exhausted at t = {t:.3e} s")
        if need_k0:
            gen.rhs(t, rho, K[0].reshape(n, n))
            stats.rhs_evals += 1
            need_k0 = False
        h_try = min(h, t_end - t)
        if next_stop - t > t_tiny:
            h_try = min(h_try, next_stop - t)
        if h_try <= 1e-16 * max(abs(t), abs(t_end), 1e-12):
            raise IntegrationError(f"step size underflow at t = {t:.3e} s")

        for s in range(1, 7):
            # y_stage = rho + h * sum_j a_sj K_j, one fused pass over K[:s]
            np.matmul((h_try * _A_C[s])[None, :], K[:s], out=work_flat[None, :])
            work_flat += rho_flat
            gen.rhs(t + _C[s] * h_try, work, K[s].reshape(n, n))
        stats.rhs_evals += 6

        # after the s=6 stage, work holds the 5th-order solution (b row = a7 row)
        y5 = work
        err_flat = np.matmul((h_try * _E_C)[None, :], K)[0]
        sc = atol + rtol * np.maximum(np.abs(rho_flat), np.abs(work_flat))
        err = float(np.sqrt(np.mean((np.abs(err_flat) / sc) ** 2)))

        if err <= 1.0:
            t += h_try
            np.copyto(rho, y5)
            rho += rho.conj().T
            rho *= 0.5
            stats.accepted += 1
            need_k0 = True
            if t >= next_stop - t_tiny:
                record(t, rho)
                if snap_left and abs(t - snap_left[0]) <= t_tiny:
                    snapshots[snap_left.pop(0)] = DensityState(space, rho.copy())
                if any(abs(t - pt) <= t_tiny for pt in pos_times):
                    lam = float(np.linalg.eigvalsh(rho)[0])
                    stats.min_eigenvalues.append((t, lam))
                next_stop = next(stop_iter, t_end)
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h = h_try * min(5.0, max(0.2, fac))
        else:
            stats.rejected += 1
            h = h_try * min(1.0, max(0.2, 0.9 * err ** -0.2))
    return rho, t_end
