"""Circuit parameters and flux-mediated coupling strengths.

Two transmons are joined by a capacitor in parallel with an asymmetric SQUID
whose loop contains a suspended beam.  An in-plane field B converts beam
displacement X into loop flux (alpha*X, alpha = pi*beta0*B*l/Phi0), so the
coupler Josephson energy, and with it every qubit-qubit interaction, is
modulated by the motion.  This module turns raw circuit values into the
derived transmon quantities and the full set of interaction strengths, and
solves for the coupling capacitance that cancels the stray qubit-qubit
exchange coupling.

Unit conventions: Josephson and charging energies are stored as E/h in Hz;
every coupling strength and mode frequency is an angular frequency in rad/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from scipy.optimize import brentq

from .constants import Phi0, cospi, e, h, hbar, phi0, sinpi, thermal_occupation

_PHI0_SQ = phi0**2

__all__ = [
    "CircuitParams",
    "DerivedQuantities",
    "CouplingSet",
    "JosephsonEnergy",
    "ParameterError",
    "TransmonRegimeWarning",
    "derive_static",
    "josephson_energy",
    "couplings",
    "cancellation_capacitance",
    "coupling_sweep",
    "ej_from_frequency",
    "mass_from_xzpf",
]


class ParameterError(ValueError):
    """Raised for physically invalid circuit parameters."""


class TransmonRegimeWarning(UserWarning):
    """Effective EJ/EC ratio below the transmon-regime guard."""


@dataclass(frozen=True)
class CircuitParams:
    """Raw physical inputs.

    Energies are E/h in Hz, capacitances in F, mass in kg, omega_m in rad/s,
    length in m, B in T, phi_b in units of Phi0, temperatures in K, qubit
    coherence times in s.
    """

    EJ1: float
    EJ2: float
    EJsum_c: float
    aJ: float
    C1: float
    C2: float
    Cc: float
    m: float
    omega_m: float
    l: float
    beta0: float
    B: float
    phi_b: float
    T: float
    T1: float
    T2: float
    Qm: float

    def __post_init__(self):
        positive = {
            "EJ1": self.EJ1, "EJ2": self.EJ2, "C1": self.C1, "C2": self.C2,
            "m": self.m, "omega_m": self.omega_m, "l": self.l,
            "T1": self.T1, "T2": self.T2, "Qm": self.Qm, "beta0": self.beta0,
        }
        for name, value in positive.items():
            if not (value > 0.0) or not math.isfinite(value):
                raise ParameterError(f"{name} must be strictly positive, got {value!r}")
        for name, value in (("EJsum_c", self.EJsum_c), ("Cc", self.Cc),
                            ("T", self.T), ("B", self.B)):
            if value < 0.0 or not math.isfinite(value):
                raise ParameterError(f"{name} must be non-negative, got {value!r}")
        if not 0.0 <= self.aJ < 1.0:
            raise ParameterError(f"aJ must lie in [0, 1), got {self.aJ!r}")
        if not 0.0 <= self.phi_b < 1.0:
            raise ParameterError(f"phi_b must lie in [0, 1), got {self.phi_b!r}")


@dataclass(frozen=True)
class DerivedQuantities:
    """Static quantities derived from a CircuitParams at one flux bias."""

    EC1: float          # charging energies, Hz
    EC2: float
    EJt1: float         # effective (coupler-loaded) Josephson energies, Hz
    EJt2: float
    omega1: float       # qubit angular frequencies, rad/s
    omega2: float
    Z1: float           # transmon impedances, ohm
    Z2: float
    X_zpf: float        # mechanical zero-point motion, m
    alpha: float        # flux responsivity, 1/m
    n_th: float         # bath thermal phonon number
    gamma_m: float      # mechanical decay rate, rad/s
    cJ: float           # asymmetry factors
    sJ: float
    X0: float           # displaced rest position, m
    omega_m: float      # mechanical angular frequency, rad/s (copied from inputs)
    # stable combined factors, usable through phi_b = 0.5
    cj_cos: float       # cJ*cos(pi phi_b), signed
    sj_sin: float       # sJ*sin(pi phi_b)


@dataclass(frozen=True)
class CouplingSet:
    """Interaction strengths at one flux bias, all in rad/s.

    ``g`` is the reported tripartite strength including the next-order
    correction 3*(g31x + g13x); ``g_lead`` is the leading-order value that
    satisfies g1*g2 = g_lead**2 exactly.
    """

    phi_b: float
    g: float
    g_lead: float
    g1: float
    g2: float
    JL: float
    JC: float
    V: float
    Jn1: float
    Jn2: float
    g22x: float
    g31x: float
    g13x: float
    gx2_11: float
    gx2_12: float
    gx2_22: float

    @property
    def J_eff(self) -> float:
        """Net linear qubit-qubit exchange strength JC - JL + Jn1 + Jn2."""
        return self.JC - self.JL + self.Jn1 + self.Jn2


def mass_from_xzpf(x_zpf: float, omega_m: float) -> float:
    """Invert X_zpf = sqrt(hbar / (2 m omega_m)) for the mode mass."""
    if x_zpf <= 0 or omega_m <= 0:
        raise ParameterError("x_zpf and omega_m must be positive")
    return hbar / (2.0 * omega_m * x_zpf**2)


def _asymmetry_factors(phi_b: float, aJ: float):
    """Return (cJ, sJ, cj_cos, sj_sin, mag) evaluated in overflow-free form.

    mag = sqrt(cos^2 + aJ^2 sin^2) is the exact flux-dependence of the
    coupler Josephson energy; cj_cos carries the sign of cos while sj_sin
    vanishes exactly at half-integer flux.
    """
    s = sinpi(phi_b)
    c = cospi(phi_b)
    mag = math.hypot(c, aJ * s)
    cj_cos = mag if c >= 0.0 else -mag
    sj_sin = (1.0 - aJ**2) * s * abs(c) / mag if mag > 0.0 else 0.0
    if c != 0.0:
        cJ = mag / abs(c)
        sJ = (1.0 - aJ**2) / cJ
    else:
        cJ = math.inf
        sJ = 0.0
    return cJ, sJ, cj_cos, sj_sin, mag


def _loaded_capacitances(p: CircuitParams):
    ct1 = p.C1 + p.C2 * p.Cc / (p.C2 + p.Cc) if p.Cc > 0 else p.C1
    ct2 = p.C2 + p.C1 * p.Cc / (p.C1 + p.Cc) if p.Cc > 0 else p.C2
    return ct1, ct2


def derive_static(params: CircuitParams, transmon_ratio_min: float = 20.0) -> DerivedQuantities:
    """Compute all static derived quantities at params.phi_b.

    Emits TransmonRegimeWarning when EJt_i/EC_i falls below
    ``transmon_ratio_min``; raises ParameterError if the loaded Josephson
    energy is non-positive (no transmon mode exists there).
    """
    p = params
    cJ, sJ, cj_cos, sj_sin, _ = _asymmetry_factors(p.phi_b, p.aJ)

    ct1, ct2 = _loaded_capacitances(p)
    EC1 = e**2 / (2.0 * ct1) / h
    EC2 = e**2 / (2.0 * ct2) / h
    EJt1 = p.EJ1 + p.EJsum_c * cj_cos
    EJt2 = p.EJ2 + p.EJsum_c * cj_cos
    for i, (ejt, ec) in enumerate(((EJt1, EC1), (EJt2, EC2)), start=1):
        if ejt <= 0.0:
            raise ParameterError(f"effective Josephson energy of qubit {i} is non-positive")
        if ejt / ec < transmon_ratio_min:
            warnings.warn(
                f"qubit {i}: EJt/EC = {ejt / ec:.1f} below transmon guard "
                f"{transmon_ratio_min}", TransmonRegimeWarning, stacklevel=2)

    omega1 = 2.0 * math.pi * (math.sqrt(8.0 * EJt1 * EC1) - EC1)
    omega2 = 2.0 * math.pi * (math.sqrt(8.0 * EJt2 * EC2) - EC2)
    Z1 = (hbar / e**2) * math.sqrt(EC1 / (2.0 * EJt1))
    Z2 = (hbar / e**2) * math.sqrt(EC2 / (2.0 * EJt2))

    X_zpf = math.sqrt(hbar / (2.0 * p.m * p.omega_m))
    alpha = math.pi * p.beta0 * p.B * p.l / Phi0
    X0 = alpha * (p.EJsum_c * h) * sj_sin / (p.m * p.omega_m**2)

    return DerivedQuantities(
        EC1=EC1, EC2=EC2, EJt1=EJt1, EJt2=EJt2,
        omega1=omega1, omega2=omega2, Z1=Z1, Z2=Z2,
        X_zpf=X_zpf, alpha=alpha,
        n_th=thermal_occupation(p.omega_m, p.T),
        gamma_m=p.omega_m / p.Qm, omega_m=p.omega_m,
        cJ=cJ, sJ=sJ, X0=X0, cj_cos=cj_cos, sj_sin=sj_sin,
    )


@dataclass(frozen=True)
class JosephsonEnergy:
    """Exact and linearised coupler Josephson energy (E/h, Hz)."""

    exact: float
    linearised: float

    @property
    def discrepancy(self) -> float:
        return self.linearised - self.exact


def josephson_energy(params: CircuitParams, phi_b: float, X: float) -> JosephsonEnergy:
    """Coupler Josephson energy at flux bias phi_b and beam displacement X.

    Returns the exact form EJsum * sqrt(cos^2(u) + aJ^2 sin^2(u)) with
    u = pi*phi_b + alpha*X, together with the expansion to first order in
    alpha*X used for the coupling derivation.  |alpha*X| > 1e-2 is outside
    the expansion's validity and rejected.
    """
    d = derive_static(params)
    ax = d.alpha * X
    if abs(ax) > 1e-2:
        raise ParameterError(f"|alpha*X| = {abs(ax):.3e} exceeds the 1e-2 linearisation guard")
    u = math.pi * phi_b + ax
    exact = params.EJsum_c * math.hypot(math.cos(u), params.aJ * math.sin(u))
    _, _, cj_cos, sj_sin, _ = _asymmetry_factors(phi_b, params.aJ)
    linearised = params.EJsum_c * (cj_cos - sj_sin * ax)
    return JosephsonEnergy(exact=exact, linearised=linearised)


def couplings(params: CircuitParams, phi_b: float | None = None) -> CouplingSet:
    """All flux-mediated interaction strengths at the given flux bias.

    The tripartite rate g and the radiation-pressure rates g_i scale with
    sJ*sin(pi phi_b); the inductive exchange JL, cross-Kerr V and correlated
    hopping Jn_i scale with cJ*cos(pi phi_b).  Both products are evaluated in
    their combined overflow-free forms so that every motion-mediated coupling
    vanishes exactly at half-integer flux.
    """
    p = params if phi_b is None else replace(params, phi_b=float(phi_b))
    d = derive_static(p)

    E = 2.0 * math.pi * p.EJsum_c            # coupler energy, rad/s
    u1 = hbar * d.Z1 / (2.0 * _PHI0_SQ)      # phase zero-point^2 / phi0^2
    u2 = hbar * d.Z2 / (2.0 * _PHI0_SQ)
    u12 = math.sqrt(u1 * u2)
    ax = d.alpha * d.X_zpf

    g_lead = ax * E * d.sj_sin * u12
    g1 = ax * E * d.sj_sin * u1
    g2 = ax * E * d.sj_sin * u2

    JL = E * d.cj_cos * u12
    JC = p.Cc / (2.0 * p.C1 * p.C2 * math.sqrt(d.Z1 * d.Z2))
    V = -E * d.cj_cos * u1 * u2
    Jn1 = -E * d.cj_cos * u1 * u12 / 6.0
    Jn2 = -E * d.cj_cos * u2 * u12 / 6.0

    g22x = ax * E * d.sj_sin * u1 * u2 / 4.0
    g31x = ax * E * d.sj_sin * u1 * u12 / 6.0
    g13x = ax * E * d.sj_sin * u2 * u12 / 6.0

    # sJ sin^2/(2 cJ cos) in stable form: (1-aJ^2) sin^2 cos / (2 mag^2)
    s = sinpi(p.phi_b)
    c = cospi(p.phi_b)
    mag2 = c * c + (p.aJ * s) ** 2
    s2 = (1.0 - p.aJ**2) * s * s * c / (2.0 * mag2) if mag2 > 0 else 0.0
    gx2_11 = ax * ax * E * s2 * u1
    gx2_12 = ax * ax * E * s2 * u12
    gx2_22 = ax * ax * E * s2 * u2

    return CouplingSet(
        phi_b=p.phi_b,
        g=g_lead + 3.0 * (g31x + g13x), g_lead=g_lead, g1=g1, g2=g2,
        JL=JL, JC=JC, V=V, Jn1=Jn1, Jn2=Jn2,
        g22x=g22x, g31x=g31x, g13x=g13x,
        gx2_11=gx2_11, gx2_12=gx2_12, gx2_22=gx2_22,
    )


def cancellation_capacitance(params: CircuitParams, phi_b: float | None = None,
                             residual_tol: float = 2.0 * math.pi * 1e3,
                             f_targets: tuple[float, float] | None = None) -> float:
    """Coupling capacitance that nulls the linear qubit-qubit exchange.

    Solves J_eff(Cc) = JC - JL + Jn1 + Jn2 = 0 by bracketed root finding;
    the capacitance feeds back into the charging energies and impedances, so
    every trial re-derives the static quantities.  With ``f_targets`` the
    bare EJ of each qubit is re-inferred at every trial so the qubit
    frequencies stay pinned at (f1, f2) Hz while Cc moves.  Raises
    ParameterError if no sign change exists in the bracket or the residual
    exceeds ``residual_tol`` (rad/s).
    """
    phi = params.phi_b if phi_b is None else float(phi_b)
    if params.EJsum_c == 0.0:
        return 0.0

    def trial_params(cc: float) -> CircuitParams:
        trial = replace(params, Cc=cc, phi_b=phi)
        if f_targets is not None:
            ct1, ct2 = _loaded_capacitances(trial)
            ec1 = e**2 / (2.0 * ct1) / h
            ec2 = e**2 / (2.0 * ct2) / h
            trial = replace(
                trial,
                EJ1=ej_from_frequency(f_targets[0], ec1, params.EJsum_c, params.aJ, phi),
                EJ2=ej_from_frequency(f_targets[1], ec2, params.EJsum_c, params.aJ, phi),
            )
        return trial

    def j_eff(cc: float) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TransmonRegimeWarning)
            return couplings(trial_params(cc)).J_eff

    lo = 1e-18
    hi = 10.0 * max(params.C1, params.C2)
    flo, fhi = j_eff(lo), j_eff(hi)
    tries = 0
    while flo * fhi > 0.0 and tries < 6:
        hi *= 10.0
        fhi = j_eff(hi)
        tries += 1
    if flo * fhi > 0.0:
        raise ParameterError("no cancellation point: J_eff does not change sign in bracket")
    cc = brentq(j_eff, lo, hi, xtol=1e-22, rtol=1e-14)
    res = abs(j_eff(cc))
    if res > residual_tol:
        raise ParameterError(f"cancellation residual |J_eff|/2pi = {res / (2 * math.pi):.1f} Hz "
                             f"exceeds tolerance")
    return cc


def coupling_sweep(params: CircuitParams, phi_range) -> list[tuple[float, CouplingSet]]:
    """Evaluate couplings() at each flux point of phi_range (units of Phi0)."""
    rows = []
    for phi in phi_range:
        if not 0.0 <= phi < 1.0:
            raise ParameterError(f"flux point {phi!r} outside [0, 1)")
        rows.append((float(phi), couplings(params, phi)))
    return rows


def ej_from_frequency(f01: float, EC: float, EJsum_c: float, aJ: float,
                      phi_b: float) -> float:
    """Bare transmon EJ (Hz) that yields qubit frequency f01 (Hz) at phi_b.

    Inverts omega = 2*pi*(sqrt(8*EJt*EC) - EC) for the loaded EJt and removes
    the coupler contribution EJsum_c*cJ*cos(pi phi_b).
    """
    if f01 <= 0 or EC <= 0:
        raise ParameterError("f01 and EC must be positive")
    ejt = (f01 + EC) ** 2 / (8.0 * EC)
    _, _, cj_cos, _, _ = _asymmetry_factors(phi_b, aJ)
    return ejt - EJsum_c * cj_cos
