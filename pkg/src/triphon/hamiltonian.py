"""Rotating-frame Hamiltonian assembly and pulse schedules.

Everything is expressed in a frame co-rotating at a fixed reference frequency
omega_ref for both qubits, so only the detunings delta_i = omega_i - omega_ref
(tens of MHz) and the mechanical frequency appear.  All interaction terms are
kept in their excitation-conserving RWA form: the total qubit excitation
number commutes with every drive-free term.

Drive-free term (flags all on):

    H/hbar = d1 n1 + d2 n2 - sum_i (Ec_i/2) ci+ci+cici + w_m b+b
           + g (c1+c2 + c2+c1)(b + b+)            tripartite
           - g1 n1 (b + b+) - g2 n2 (b + b+)      radiation pressure
           + J_eff (c1+c2 + h.c.)                 residual exchange
           + V n1 n2 [+ (V/4)(c1+c1+c2c2 + h.c.)] cross-Kerr / pair hopping
           + [c1+ (Jn1 n1 + Jn2 n2) c2 + h.c.]    correlated hopping
           + fourth-order-in-phase corrections with one or two phonon quanta
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .circuit import CouplingSet, DerivedQuantities
from .fock import Operator, SpaceDescriptor, destroy, embed, identity, number

__all__ = [
    "TermFlags", "DrivePulse", "Reset", "Excite", "Measure", "Gate",
    "Segment", "PulseSchedule", "build_static", "TimeDependentHamiltonian",
    "ideal_gate", "swap_matrix_element", "ScheduleError",
]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class TermFlags:
    """Per-term toggles for the interaction Hamiltonian.

    ``sideband_resolved`` replaces the full tripartite term
    g(c1+c2+h.c.)(b+b+) by the resonance-selected half (a second RWA valid at
    the two operating points delta2 - delta1 = +-w_m); it exists for analytic
    cross-checks and oracle tests, not for production runs.
    """

    tripartite: bool = True
    radiation_pressure: bool = True
    exchange: bool = True
    cross_kerr: bool = True
    correlated_hopping: bool = True
    pair_hopping: bool = False
    higher_order_phi4x: bool = True
    phi2x2: bool = False
    sideband_resolved: bool = False

    def any_interaction(self) -> bool:
        return any((self.tripartite, self.radiation_pressure, self.exchange,
                    self.cross_kerr, self.correlated_hopping, self.pair_hopping,
                    self.higher_order_phi4x, self.phi2x2))

    @classmethod
    def from_names(cls, names) -> "TermFlags":
        valid = {f for f in cls.__dataclass_fields__}
        chosen = set(names)
        unknown = chosen - valid
        if unknown:
            raise ScheduleError(f"unknown term flags: {sorted(unknown)}")
        return cls(**{f: (f in chosen) for f in valid})


@dataclass(frozen=True)
class DrivePulse:
    """Resonant charge drive on one qubit.

    The envelope area fixes the rotation angle; a gaussian envelope is
    truncated at +-2 sigma (duration = 4 sigma) and rescaled so the truncated
    area is exact.
    """

    qubit: str
    shape: str = "gaussian"          # "gaussian" | "square"
    duration: float = 200e-9
    area: float = math.pi
    phase: float = 0.0
    sigma: float | None = None       # gaussian only; default duration/4

    def __post_init__(self):
        if self.shape not in ("gaussian", "square"):
            raise ScheduleError(f"unknown pulse shape {self.shape!r}")
        if not 0.0 <= self.area <= 2.0 * math.pi:
            raise ScheduleError("pulse area must lie in [0, 2pi]")
        if self.duration <= 0:
            raise ScheduleError("pulse duration must be positive")

    def envelope(self, t: float) -> float:
        """Instantaneous Rabi rate Omega(t) for t in [0, duration]."""
        if self.shape == "square":
            return self.area / self.duration
        sig = self.sigma if self.sigma is not None else self.duration / 4.0
        tc = self.duration / 2.0
        # area of the truncated gaussian: sigma*sqrt(2 pi)*erf(duration/(2 sqrt2 sigma))
        norm = sig * math.sqrt(2.0 * math.pi) * math.erf(self.duration / (2.0 * math.sqrt(2.0) * sig))
        return self.area / norm * math.exp(-((t - tc) ** 2) / (2.0 * sig**2))


@dataclass(frozen=True)
class Reset:
    qubits: tuple[str, ...] = ("q1", "q2")


@dataclass(frozen=True)
class Excite:
    """Ideal instantaneous pi rotation on the 0-1 subspace of one qubit."""

    qubit: str


@dataclass(frozen=True)
class Measure:
    """Projective measurement with post-selection on fixed subsystem levels."""

    levels: tuple          # e.g. (("q1", 0), ("q2", 1))


@dataclass(frozen=True)
class Gate:
    """Instantaneous unitary event (ideal two-qubit gate)."""

    kind: str              # "swap_angle" | "c_phase"
    angle: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class Segment:
    duration: float
    omega1: float
    omega2: float
    drive: DrivePulse | None = None
    events: tuple = ()      # applied at segment start, in order

    def __post_init__(self):
        if self.duration < 0:
            raise ScheduleError("segment duration must be >= 0")


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple
    final_events: tuple = ()

    def __post_init__(self):
        if not all(isinstance(s, Segment) for s in self.segments):
            raise ScheduleError("schedule entries must be Segments")

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self):
        """Cumulative start times of each segment plus the end time."""
        t = [0.0]
        for s in self.segments:
            t.append(t[-1] + s.duration)
        return t


def _mode_ops(space: SpaceDescriptor):
    """Embedded lowering ops and numbers for (q1, q2, m)."""
    d1, d2, dm = (space.dims[space.axis(k)] for k in ("q1", "q2", "m"))
    c1 = embed(destroy(d1), "q1", space).sparse()
    c2 = embed(destroy(d2), "q2", space).sparse()
    b = embed(destroy(dm), "m", space).sparse()
    return c1, c2, b


def build_static(cpl: CouplingSet, derived: DerivedQuantities, omega1: float,
                 omega2: float, omega_ref: float, flags: TermFlags,
                 space: SpaceDescriptor, J_offset: float = 0.0) -> Operator:
    """Assemble the drive-free rotating-frame Hamiltonian (rad/s units).

    ``omega1``/``omega2`` are the qubit frequencies of this schedule segment;
    ``J_offset`` injects a stray exchange coupling on top of cpl.J_eff (used
    by robustness sweeps).  The result is Hermitian by construction.
    """
    for name, val in (("omega1", omega1), ("omega2", omega2), ("omega_ref", omega_ref)):
        if not math.isfinite(val):
            raise ScheduleError(f"{name} is not finite")
    for f in ("g_lead", "g1", "g2", "V", "Jn1", "Jn2", "g22x", "g31x", "g13x"):
        if not math.isfinite(getattr(cpl, f)):
            raise ScheduleError(f"coupling {f} is not finite")

    c1, c2, b = _mode_ops(space)
    c1d, c2d, bd = c1.conj().T.tocsr(), c2.conj().T.tocsr(), b.conj().T.tocsr()
    n1, n2 = (c1d @ c1).tocsr(), (c2d @ c2).tocsr()
    nm = (bd @ b).tocsr()
    eye = sp.identity(space.dim, dtype=complex, format="csr")
    bph = (b + bd).tocsr()

    d1 = omega1 - omega_ref
    d2 = omega2 - omega_ref
    H = d1 * n1 + d2 * n2 + derived.omega_m * nm
    H = H - math.pi * derived.EC1 * (c1d @ c1d @ c1 @ c1)   # -(2pi EC/2) c+c+cc
    H = H - math.pi * derived.EC2 * (c2d @ c2d @ c2 @ c2)

    if flags.tripartite:
        hop = c1d @ c2
        if flags.sideband_resolved:
            gap = (d2 - d1)
            if abs(gap - derived.omega_m) < 1e-3 * derived.omega_m:
                tri = hop @ bd      # c1+ c2 b+ resonant at omega2 = omega1 + w_m
            elif abs(gap + derived.omega_m) < 1e-3 * derived.omega_m:
                tri = hop @ b       # c1+ c2 b  resonant at omega2 = omega1 - w_m
            else:
                raise ScheduleError("sideband_resolved requires delta2 - delta1 = +-omega_m")
            H = H + cpl.g_lead * (tri + tri.conj().T)
        else:
            H = H + cpl.g_lead * ((hop + hop.conj().T) @ bph)

    if flags.radiation_pressure:
        H = H - (cpl.g1 * n1 + cpl.g2 * n2) @ bph

    if flags.exchange:
        J = cpl.J_eff + J_offset
        if J != 0.0:
            H = H + J * ((c1d @ c2) + (c2d @ c1))
    elif J_offset != 0.0:
        H = H + J_offset * ((c1d @ c2) + (c2d @ c1))

    if flags.cross_kerr:
        H = H + cpl.V * (n1 @ n2)

    if flags.pair_hopping:
        ph = c1d @ c1d @ c2 @ c2
        H = H + (cpl.V / 4.0) * (ph + ph.conj().T)

    if flags.correlated_hopping:
        ch = cpl.Jn1 * (c1d @ n1 @ c2) + cpl.Jn2 * (c1d @ n2 @ c2)
        H = H + ch + ch.conj().T

    if flags.higher_order_phi4x:
        diag22 = (2.0 * n1 + eye) @ (2.0 * n2 + eye)
        pair22 = c1d @ c1d @ c2 @ c2
        h22 = cpl.g22x * ((diag22 + pair22 + pair22.conj().T) @ bph)
        m31 = c1d @ (n1 + eye) @ c2
        m13 = c1d @ (n2 + eye) @ c2
        h31 = 3.0 * cpl.g31x * ((m31 + m31.conj().T) @ bph)
        h13 = 3.0 * cpl.g13x * ((m13 + m13.conj().T) @ bph)
        H = H + h22 + h31 + h13

    if flags.phi2x2:
        bph2 = (bph @ bph).tocsr()
        hop = (c1d @ c2) + (c2d @ c1)
        H = H + (cpl.gx2_11 * n1 + cpl.gx2_22 * n2 + cpl.gx2_12 * hop) @ bph2

    H = H.tocsr()
    defect = abs(H - H.conj().T).max()
    scale = max(abs(H).max(), 1.0)
    if defect > 1e-12 * scale:
        raise ScheduleError(f"assembled Hamiltonian not Hermitian: defect {defect:.2e}")
    return Operator(space, H, hermitian_hint=True)


def swap_matrix_element(H: Operator) -> float:
    """|<1_1 1_m 0_2| H |0_1 0_m 1_2>|: the effective tripartite swap rate."""
    space = H.space
    a = space.index((0, 1, 0))
    bidx = space.index((1, 0, 1))
    return float(abs(H.sparse()[bidx, a]))


@dataclass
class TimeDependentHamiltonian:
    """Piecewise Hamiltonian over a PulseSchedule.

    Within a segment, H(t) is the segment's static part plus, if a drive is
    present, (Omega(t)/2)(c_i e^{i(phase + delta_i (t - t_seg))} + h.c.).
    Static parts are cached per distinct (omega1, omega2).
    """

    schedule: PulseSchedule
    couplings: CouplingSet
    derived: DerivedQuantities
    flags: TermFlags
    space: SpaceDescriptor
    omega_ref: float
    J_offset: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def static_for(self, segment: Segment) -> Operator:
        key = (segment.omega1, segment.omega2)
        if key not in self._cache:
            self._cache[key] = build_static(
                self.couplings, self.derived, segment.omega1, segment.omega2,
                self.omega_ref, self.flags, self.space, self.J_offset)
        return self._cache[key]

    def drive_info(self, segment: Segment):
        """(lowering op csr, pulse, delta) for the segment drive, or None."""
        if segment.drive is None:
            return None
        c1, c2, _ = _mode_ops(self.space)
        low = c1 if segment.drive.qubit == "q1" else c2
        omega = segment.omega1 if segment.drive.qubit == "q1" else segment.omega2
        return low, segment.drive, omega - self.omega_ref

    def __call__(self, t: float) -> Operator:
        """Full H(t) as an Operator; t must lie within the schedule."""
        if t < 0 or t > self.schedule.total_duration + 1e-18:
            raise ScheduleError(f"t = {t} outside schedule duration")
        bounds = self.schedule.boundaries()
        if not self.schedule.segments:
            raise ScheduleError("empty schedule has no Hamiltonian")
        for seg, t0, t1 in zip(self.schedule.segments, bounds[:-1], bounds[1:]):
            if t <= t1 or seg is self.schedule.segments[-1]:
                H = self.static_for(seg).sparse().copy()
                info = self.drive_info(seg)
                if info is not None:
                    low, pulse, delta = info
                    tr = min(max(t - t0, 0.0), pulse.duration)
                    if tr <= pulse.duration:
                        amp = 0.5 * pulse.envelope(tr) * np.exp(1j * (pulse.phase + delta * tr))
                        term = amp * low
                        H = H + term + term.conj().T
                return Operator(self.space, H.tocsr(), hermitian_hint=True)
        raise ScheduleError("time lookup failed")  # pragma: no cover


def static_hamiltonian(cpl, derived, flags, space, omega1=None, omega2=None,
                       omega_ref=None, duration=0.0, J_offset=0.0) -> TimeDependentHamiltonian:
    """Convenience handle for a single static segment (empty-schedule case)."""
    w1 = derived.omega1 if omega1 is None else omega1
    w2 = derived.omega2 if omega2 is None else omega2
    ref = w1 if omega_ref is None else omega_ref
    sched = PulseSchedule(segments=(Segment(duration=duration, omega1=w1, omega2=w2),))
    return TimeDependentHamiltonian(sched, cpl, derived, flags, space, ref, J_offset)


def ideal_gate(kind: str, angle: float, phase: float, space: SpaceDescriptor) -> Operator:
    """Instantaneous two-qubit unitary on the single-excitation subspace.

    "swap_angle": on every phonon level n,
        |0_1 1_2, n>  ->  cos(angle)|0_1 1_2, n> - i e^{+i phase} sin(angle)|1_1 0_2, n>
        |1_1 0_2, n>  ->  cos(angle)|1_1 0_2, n> - i e^{-i phase} sin(angle)|0_1 1_2, n>
    "c_phase": |1_1 0_2, n> -> e^{i phase}|1_1 0_2, n>.
    All other basis states (including double occupations) are untouched.
    """
    if not math.isfinite(angle) or not math.isfinite(phase):
        raise ScheduleError("gate parameters must be finite")
    dm = space.dims[space.axis("m")]
    U = sp.identity(space.dim, dtype=complex, format="lil")
    for n in range(dm):
        a = space.index((0, 1, n))   # qubit2 excited
        b = space.index((1, 0, n))   # qubit1 excited
        if kind == "swap_angle":
            U[a, a] = math.cos(angle)
            U[b, b] = math.cos(angle)
            U[b, a] = -1j * np.exp(1j * phase) * math.sin(angle)
            U[a, b] = -1j * np.exp(-1j * phase) * math.sin(angle)
        elif kind == "c_phase":
            U[b, b] = np.exp(1j * phase)
        else:
            raise ScheduleError(f"unknown gate kind {kind!r}")
    return Operator(space, U.tocsr())
