"""Hamiltonian assembly: matrix elements, conserved charge, drives, gates."""


import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.integrate

from triphon.circuit import couplings, derive_static
from triphon.fock import SpaceDescriptor, default_space, ket
from triphon.hamiltonian import (DrivePulse, PulseSchedule, ScheduleError,
                                 Segment, TermFlags, TimeDependentHamiltonian,
                                 build_static, ideal_gate, swap_matrix_element)

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def setup(table1):
    derived = derive_static(table1)
    cpl = couplings(table1)
    space = default_space(n_m=6)
    return table1, derived, cpl, space


def test_tripartite_matrix_element(setup):
    params, derived, cpl, space = setup
    flags = TermFlags(radiation_pressure=False, exchange=False, cross_kerr=False,
                      correlated_hopping=False, higher_order_phi4x=False)
    H = build_static(cpl, derived, derived.omega1, derived.omega1 + params.omega_m,
                     derived.omega1, flags, space)
    a = space.index((0, 1, 0))
    b = space.index((1, 0, 1))
    assert H.sparse()[b, a] == pytest.approx(cpl.g_lead, rel=1e-14)


def test_swap_element_includes_corrections(setup):
    params, derived, cpl, space = setup
    H = build_static(cpl, derived, derived.omega1, derived.omega1 + params.omega_m,
                     derived.omega1, TermFlags(), space)
    assert swap_matrix_element(H) == pytest.approx(cpl.g, rel=1e-12)


def test_anharmonicity_only_is_diagonal(setup):
    params, derived, cpl, space = setup
    flags = TermFlags(tripartite=False, radiation_pressure=False, exchange=False,
                      cross_kerr=False, correlated_hopping=False,
                      higher_order_phi4x=False)
    H = build_static(cpl, derived, derived.omega1, derived.omega2,
                     derived.omega1, flags, space).dense()
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    # two-level detuning of each transmon carries the anharmonicity -EC
    i1 = space.index((1, 0, 0))
    i2 = space.index((2, 0, 0))
    alpha = (H[i2, i2] - H[i1, i1]) - H[i1, i1]
    assert alpha.real == pytest.approx(-TWO_PI * derived.EC1, rel=1e-12)


def test_qubit_excitation_number_conserved(setup):
    """[H, n1 + n2] = 0 for every drive-free flag combination."""
    params, derived, cpl, space = setup
    from triphon.fock import embed, number

    N = (embed(number(3), "q1", space) + embed(number(3), "q2", space)).dense()
    names = ["tripartite", "radiation_pressure", "exchange", "cross_kerr",
             "correlated_hopping", "pair_hopping", "higher_order_phi4x", "phi2x2"]
    singles = [{n} for n in names]
    rng = np.random.default_rng(0)
    picked = [set(names)] + singles + \
        [{names[i] for i in rng.integers(0, 8, 3)} for _ in range(6)]
    for combo in picked:
        flags = TermFlags(**{n: (n in combo) for n in names})
        H = build_static(cpl, derived, derived.omega1,
                         derived.omega1 + params.omega_m, derived.omega1,
                         flags, space).dense()
        comm = H @ N - N @ H
        assert np.max(np.abs(comm)) < 1e-6 * max(np.max(np.abs(H)), 1.0)


def test_hermitian_for_random_settings(setup):
    params, derived, cpl, space = setup
    rng = np.random.default_rng(3)
    for _ in range(5):
        H = build_static(cpl, derived,
                         derived.omega1 + rng.uniform(-1, 1) * 1e8,
                         derived.omega2 + rng.uniform(-1, 1) * 1e8,
                         derived.omega1, TermFlags(), space,
                         J_offset=rng.uniform(-1, 1) * 1e6)
        assert H.hermiticity_defect() < 1e-9


def test_sideband_resolved_selects_half(setup):
    params, derived, cpl, space = setup
    flags = TermFlags(sideband_resolved=True, radiation_pressure=False,
                      exchange=False, cross_kerr=False,
                      correlated_hopping=False, higher_order_phi4x=False)
    up = build_static(cpl, derived, derived.omega1, derived.omega1 + params.omega_m,
                      derived.omega1, flags, space).dense()
    # |0,1;n> couples only upward (to |1,0;n+1>), not downward
    a = space.index((0, 1, 1))
    down = space.index((1, 0, 0))
    upi = space.index((1, 0, 2))
    assert up[down, a] == 0.0
    assert abs(up[upi, a]) > 0.0
    with pytest.raises(ScheduleError):
        build_static(cpl, derived, derived.omega1, derived.omega1,
                     derived.omega1, flags, space)


def test_segment_and_schedule_validation():
    with pytest.raises(ScheduleError):
        Segment(duration=-1e-9, omega1=1.0, omega2=1.0)
    with pytest.raises(ScheduleError):
        DrivePulse(qubit="q1", area=7.0)
    with pytest.raises(ScheduleError):
        DrivePulse(qubit="q1", shape="triangle")
    with pytest.raises(ScheduleError):
        TermFlags.from_names(["tripartite", "bogus"])


def test_gaussian_pulse_area_calibration():
    pulse = DrivePulse(qubit="q1", shape="gaussian", duration=200e-9, area=math.pi)
    val, _ = scipy.integrate.quad(pulse.envelope, 0.0, pulse.duration, limit=200)
    assert val == pytest.approx(math.pi, rel=1e-9)
    square = DrivePulse(qubit="q2", shape="square", duration=100e-9, area=1.0)
    assert square.envelope(50e-9) * square.duration == pytest.approx(1.0)


def test_time_dependent_handle(setup):
    params, derived, cpl, space = setup
    w1 = derived.omega1
    segs = (Segment(100e-9, w1, w1 + params.omega_m),
            Segment(150e-9, w1, w1 - params.omega_m))
    handle = TimeDependentHamiltonian(PulseSchedule(segs), cpl, derived,
                                      TermFlags(), space, w1)
    i2 = space.index((0, 1, 0))
    H_a = handle(50e-9).dense()
    H_b = handle(200e-9).dense()
    assert H_a[i2, i2].real == pytest.approx(params.omega_m, rel=1e-12)
    assert H_b[i2, i2].real == pytest.approx(-params.omega_m, rel=1e-12)
    with pytest.raises(ScheduleError):
        handle(1.0)


def test_empty_schedule_is_static(setup):
    params, derived, cpl, space = setup
    from triphon.hamiltonian import static_hamiltonian

    handle = static_hamiltonian(cpl, derived, TermFlags(), space, duration=1e-9)
    H = handle(0.0)
    assert H.hermiticity_defect() < 1e-9


class TestIdealGates:
    space = default_space(n_m=4)

    def test_full_swap(self):
        U = ideal_gate("swap_angle", math.pi / 2, 0.0, self.space).dense()
        src = ket(self.space, {(0, 1, 2): 1.0})
        out = U @ src
        expect = ket(self.space, {(1, 0, 2): 1.0})
        assert abs(np.vdot(expect, out)) == pytest.approx(1.0)
        assert np.vdot(expect, out) == pytest.approx(-1j)

    def test_cphase_zero_is_identity(self):
        U = ideal_gate("c_phase", 0.0, 0.0, self.space).dense()
        assert np.allclose(U, np.eye(self.space.dim))

    def test_unitarity(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            kind = rng.choice(["swap_angle", "c_phase"])
            U = ideal_gate(kind, rng.uniform(0, math.pi),
                           rng.uniform(-math.pi, math.pi), self.space).dense()
            assert np.max(np.abs(U @ U.conj().T - np.eye(self.space.dim))) < 1e-12

    def test_double_occupation_untouched(self):
        U = ideal_gate("swap_angle", 1.0, 0.3, self.space).dense()
        idx = self.space.index((1, 1, 0))
        col = U[:, idx]
        assert col[idx] == pytest.approx(1.0)
        assert np.count_nonzero(np.delete(col, idx)) == 0
