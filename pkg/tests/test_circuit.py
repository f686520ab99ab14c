"""Coupling derivation: values, identities, symmetries and an independent
numerical-derivative oracle for the leading interaction strengths."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from triphon import constants as const
from triphon.circuit import (CircuitParams, ParameterError,
                             TransmonRegimeWarning, cancellation_capacitance,
                             coupling_sweep, couplings, derive_static,
                             ej_from_frequency, josephson_energy,
                             mass_from_xzpf)

TWO_PI = 2.0 * math.pi


def test_thermal_occupation_table(table1):
    d = derive_static(table1)
    assert d.n_th == pytest.approx(20.34, abs=0.05)


def test_mass_from_zero_point_motion():
    m = mass_from_xzpf(33e-15, TWO_PI * 10e6)
    assert m == pytest.approx(7.706e-16, rel=1e-3)
    d = math.sqrt(const.hbar / (2.0 * m * TWO_PI * 10e6))
    assert d == pytest.approx(33e-15, rel=1e-12)


def test_flux_responsivity(table1):
    d = derive_static(table1)
    assert d.alpha * d.X_zpf == pytest.approx(7.37e-6, rel=1e-2)


def test_symmetric_squid_factors(table1):
    p = replace(table1, aJ=0.0)
    for phi in (0.0, 0.21, 0.4):
        d = derive_static(replace(p, phi_b=phi))
        assert d.cJ == pytest.approx(1.0) and d.sJ == pytest.approx(1.0)


def test_asymmetry_product_identity(table1):
    for phi in (0.05, 0.3, 0.495, 0.499999):
        d = derive_static(replace(table1, phi_b=phi))
        assert d.sJ * d.cJ == pytest.approx(1.0 - table1.aJ**2, rel=1e-14)
        assert d.cJ >= 1.0


def test_qubit_frequency_inference(table1):
    d = derive_static(table1)
    assert d.omega1 / TWO_PI == pytest.approx(7e9, rel=1e-10)
    assert d.EJt1 / d.EC1 > 20.0  # transmon regime


def test_transmon_guard_warns(table1):
    weak = replace(table1, EJ1=2e9, EJ2=2e9)
    with pytest.warns(TransmonRegimeWarning):
        derive_static(weak)


def test_invalid_parameters_rejected(table1):
    with pytest.raises(ParameterError):
        replace(table1, aJ=1.0)
    with pytest.raises(ParameterError):
        replace(table1, phi_b=1.0)
    with pytest.raises(ParameterError):
        replace(table1, C1=-1e-15)


class TestJosephsonEnergy:
    def test_full_quantum_symmetric(self, table1):
        p = replace(table1, aJ=0.0, phi_b=0.0)
        je = josephson_energy(p, 0.0, 0.0)
        assert je.exact == pytest.approx(p.EJsum_c, rel=1e-14)

    def test_half_quantum_asymmetry_floor(self, table1):
        je = josephson_energy(table1, 0.5, 0.0)
        assert je.exact == pytest.approx(0.01 * table1.EJsum_c, rel=1e-9)

    def test_linearised_matches_exact(self, table1):
        d = derive_static(table1)
        je = josephson_energy(table1, 0.495, d.X_zpf)
        assert abs(je.discrepancy) / je.exact < 1e-6

    def test_error_scales_quadratically(self, table1):
        # relative discrepancy of the linearised form is O((alpha X)^2)
        d = derive_static(table1)
        xs = d.X_zpf * np.array([1.0, 4.0, 16.0])
        errs = [abs(josephson_energy(table1, 0.47, x).discrepancy) for x in xs]
        slopes = np.diff(np.log(errs)) / np.diff(np.log(xs * d.alpha))
        assert np.all(np.abs(slopes - 2.0) < 0.05)

    def test_displacement_guard(self, table1):
        with pytest.raises(ParameterError):
            josephson_energy(table1, 0.4, 1.0)  # alpha*X far beyond validity


class TestCouplings:
    def test_reported_g_in_expected_band(self, table1_nominal):
        c = couplings(table1_nominal)
        assert 0.2e6 <= c.g / TWO_PI <= 0.45e6

    def test_higher_order_correction_applied(self, table1):
        c = couplings(table1)
        assert c.g == pytest.approx(c.g_lead + 3.0 * (c.g31x + c.g13x), rel=1e-14)

    def test_g_vanishes_exactly_at_half_flux(self, table1):
        c = couplings(table1, 0.5)
        assert c.g == 0.0 and c.g1 == 0.0 and c.g2 == 0.0

    def test_half_flux_exchange_is_asymmetry_limited(self, table1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TransmonRegimeWarning)
            c = couplings(table1, 0.5)
            d = derive_static(replace(table1, phi_b=0.5))
        u12 = const.hbar * math.sqrt(d.Z1 * d.Z2) / (2.0 * const.phi0**2)
        expected = TWO_PI * table1.EJsum_c * table1.aJ * u12
        assert c.JL == pytest.approx(expected, rel=1e-12)

    def test_radiation_pressure_product_identity(self, table1):
        rng = np.random.default_rng(42)
        for _ in range(25):
            p = replace(
                table1,
                aJ=rng.uniform(0.0, 0.2), phi_b=rng.uniform(0.05, 0.49),
                B=rng.uniform(1e-3, 5e-2), EJsum_c=rng.uniform(1e9, 4e11),
                C1=rng.uniform(3e-14, 1e-13), C2=rng.uniform(3e-14, 1e-13),
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TransmonRegimeWarning)
                c = couplings(p)
            assert c.g1 * c.g2 == pytest.approx(c.g_lead**2, rel=1e-12)

    def test_stable_factor_flux_symmetry(self, table1):
        from triphon.circuit import _asymmetry_factors

        for phi in (0.46, 0.48, 0.4999):
            _, _, cjc_a, sjs_a, _ = _asymmetry_factors(phi, table1.aJ)
            _, _, cjc_b, sjs_b, _ = _asymmetry_factors(1.0 - phi, table1.aJ)
            assert sjs_a == pytest.approx(sjs_b, rel=1e-12)
            assert cjc_a == pytest.approx(-cjc_b, rel=1e-12)

    def test_full_coupling_flux_symmetry_small_coupler(self, table1):
        # with a weak coupler the impedance feedback is negligible and the
        # sweep symmetry of the couplings themselves becomes visible
        p = replace(table1, EJsum_c=1e7)
        ca, cb = couplings(p, 0.46), couplings(p, 0.54)
        assert ca.g == pytest.approx(cb.g, rel=1e-3)
        assert ca.JL == pytest.approx(-cb.JL, rel=1e-3)


class TestNumericalOracle:
    """Mixed partial derivatives of the exact circuit potential.

    U(phi1, phi2, X) = -EJc(Phi_b, X) cos((phi1 - phi2)/phi0) with the exact
    root-sum-square flux dependence; the interaction strengths follow from
    Taylor coefficients times the zero-point amplitudes.  This checks the
    asymmetry-factor placement independently of the closed-form expressions.
    """

    @staticmethod
    def _potential(p, d):
        a = p.aJ

        def U(f1, f2, x):
            u = math.pi * p.phi_b + d.alpha * x
            ej = p.EJsum_c * const.h * math.hypot(math.cos(u), a * math.sin(u))
            return -ej * math.cos((f1 - f2) / const.phi0)

        return U

    def test_leading_couplings(self, table1):
        p = table1
        d = derive_static(p)
        c = couplings(p)
        U = self._potential(p, d)
        fz1 = math.sqrt(const.hbar * d.Z1 / 2.0)
        fz2 = math.sqrt(const.hbar * d.Z2 / 2.0)
        hf = 1e-3 * const.phi0
        hx = 1e-4 / d.alpha

        def d2_f1f2(x):
            return (U(hf, hf, x) - U(hf, -hf, x) - U(-hf, hf, x)
                    + U(-hf, -hf, x)) / (4.0 * hf * hf)

        # tripartite: d^3 U / dphi1 dphi2 dX * fz1 fz2 Xzpf / hbar
        g_num = (d2_f1f2(hx) - d2_f1f2(-hx)) / (2.0 * hx) * fz1 * fz2 * d.X_zpf / const.hbar
        assert g_num == pytest.approx(c.g_lead, rel=1e-4)

        # inductive exchange: -d^2 U / dphi1 dphi2 * fz1 fz2 / hbar
        JL_num = -d2_f1f2(0.0) * fz1 * fz2 / const.hbar
        assert JL_num == pytest.approx(c.JL, rel=1e-6)

        # radiation pressure on qubit 1: the Taylor 1/2 on phi1^2 cancels the
        # factor 2 from (c + c+)^2 -> 2n + 1, so g1 = -d^3U/dphi1^2 dX fz1^2 Xzpf
        def d2_f1f1(x):
            return (U(hf, 0, x) - 2.0 * U(0, 0, x) + U(-hf, 0, x)) / (hf * hf)

        g1_num = -(d2_f1f1(hx) - d2_f1f1(-hx)) / (2.0 * hx) * fz1**2 * d.X_zpf / const.hbar
        assert g1_num == pytest.approx(c.g1, rel=1e-4)

    def test_cross_kerr(self, table1):
        p = table1
        d = derive_static(p)
        c = couplings(p)
        U = self._potential(p, d)
        fz1 = math.sqrt(const.hbar * d.Z1 / 2.0)
        fz2 = math.sqrt(const.hbar * d.Z2 / 2.0)
        h = 2e-2 * const.phi0

        # d^4 U / dphi1^2 dphi2^2 via a 9-point stencil
        pts = {}
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                pts[(i, j)] = U(i * h, j * h, 0.0)
        d4 = (pts[(1, 1)] + pts[(1, -1)] + pts[(-1, 1)] + pts[(-1, -1)]
              - 2.0 * (pts[(1, 0)] + pts[(-1, 0)] + pts[(0, 1)] + pts[(0, -1)])
              + 4.0 * pts[(0, 0)]) / h**4
        # H contains (d4/4) phi1^2 phi2^2 -> V = d4 fz1^2 fz2^2 / hbar
        V_num = d4 * fz1**2 * fz2**2 / const.hbar
        assert V_num == pytest.approx(c.V, rel=1e-4)


class TestCancellation:
    def test_reference_value(self, table1_nominal):
        cc = cancellation_capacitance(table1_nominal, f_targets=(7e9, 7e9))
        assert cc == pytest.approx(9.7e-15, rel=0.30)

    def test_reinsertion_residual(self, table1):
        # table1 fixture already carries the solved Cc
        c = couplings(table1)
        assert abs(c.J_eff) / TWO_PI < 1e3

    def test_zero_coupler_root(self, table1):
        p = replace(table1, EJsum_c=0.0, EJ1=17e9, EJ2=17e9)
        assert cancellation_capacitance(p) == 0.0


class TestSweep:
    def test_monotone_rise_toward_half_flux(self, table1_nominal):
        # |g| grows all the way until the asymmetry suppression (sJ) takes
        # over very close to half flux; the peak sits near 0.492 for aJ=0.01
        rows = coupling_sweep(table1_nominal, np.linspace(0.40, 0.49, 25))
        gs = [abs(c.g) for _, c in rows]
        assert all(b > a for a, b in zip(gs, gs[1:]))

    def test_peak_interior_and_zero_at_half(self, table1_nominal):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TransmonRegimeWarning)
            rows = coupling_sweep(table1_nominal, np.linspace(0.4, 0.5, 101))
        gs = np.array([abs(c.g) for _, c in rows])
        assert gs[-1] == 0.0
        assert 0 < int(np.argmax(gs)) < len(gs) - 1

    def test_single_point_matches_couplings(self, table1):
        (phi, c), = coupling_sweep(table1, [0.47])
        ref = couplings(table1, 0.47)
        assert c.g == ref.g and c.JL == ref.JL

    def test_ratio_g1_over_g_constant(self, table1):
        p = replace(table1, C1=5.0e-14, C2=6.0e-14)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TransmonRegimeWarning)
            rows = coupling_sweep(p, np.linspace(0.41, 0.49, 9))
            ratios = [c.g1 / c.g_lead for _, c in rows]
            ds = [derive_static(replace(p, phi_b=phi)) for phi, _ in rows]
        for r, d in zip(ratios, ds):
            assert r == pytest.approx(math.sqrt(d.Z1 / d.Z2), rel=1e-12)

    def test_out_of_range_flux_rejected(self, table1):
        with pytest.raises(ParameterError):
            coupling_sweep(table1, [1.2])


def test_ej_inference_round_trip(table1):
    d = derive_static(table1)
    ej = ej_from_frequency(7e9, d.EC1, table1.EJsum_c, table1.aJ, table1.phi_b)
    assert ej == pytest.approx(table1.EJ1, rel=1e-12)
