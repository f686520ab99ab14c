"""Master-equation solver: dissipators, analytic limits, events, invariants."""

import math
from dataclasses import replace

import numpy as np
import pytest

from triphon.circuit import derive_static
from triphon.fock import (default_space, ket, projector, pure_state,
                          thermal_state)
from triphon.hamiltonian import (DrivePulse, Excite, Gate, Measure,
                                 PulseSchedule, Reset, Segment, TermFlags)
from triphon.lindblad import (IntegrationError, MeasurementError, apply_excite,
                              apply_gate, apply_measurement, apply_reset,
                              evolve, make_dissipators)
from triphon.protocols import make_context, product_state

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def ctx_free(table1):
    return make_context(table1, phonon_dim=5, dissipation=False)


@pytest.fixture(scope="module")
def ctx_diss(table1):
    return make_context(table1, phonon_dim=5, dissipation=True)


class TestDissipators:
    def test_six_channels_with_stated_rates(self, table1):
        derived = derive_static(table1)
        space = default_space(n_m=5)
        diss = make_dissipators(table1, derived, space)
        assert len(diss.channels) == 6
        rates = [ch.rate for ch in diss]
        gm = derived.gamma_m
        assert rates[0] == pytest.approx((derived.n_th + 1) * gm)
        assert rates[1] == pytest.approx(derived.n_th * gm)
        assert rates[2] == rates[3] == pytest.approx(1.0 / table1.T1)
        assert rates[4] == rates[5] == pytest.approx(1.0 / table1.T2)

    def test_mechanical_linewidth(self, table1):
        derived = derive_static(table1)
        assert derived.gamma_m / TWO_PI == pytest.approx(10.0, rel=1e-12)

    def test_zero_temperature_kills_heating(self, table1):
        derived = derive_static(replace(table1, T=0.0))
        diss = make_dissipators(table1, derived, default_space(n_m=4))
        assert diss.channels[1].rate == 0.0

    def test_detailed_balance(self, table1):
        derived = derive_static(table1)
        diss = make_dissipators(table1, derived, default_space(n_m=4))
        ratio = diss.channels[1].rate / diss.channels[0].rate
        assert ratio == pytest.approx(derived.n_th / (derived.n_th + 1), rel=1e-12)


class TestAnalyticDynamics:
    def test_rabi_pi_pulse(self, ctx_free):
        pulse = DrivePulse(qubit="q1", shape="gaussian", duration=200e-9,
                           area=math.pi)
        seg = ctx_free.resonant_segment(200e-9, +1, drive=pulse)
        rho0 = product_state(ctx_free.space, 0, 0, thermal_state(5, 0.0))
        flags_off = TermFlags(tripartite=False, radiation_pressure=False,
                              exchange=False, cross_kerr=False,
                              correlated_hopping=False, higher_order_phi4x=False)
        ctx = replace(ctx_free, flags=flags_off)
        traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))), None,
                      rtol=1e-8, atol=1e-10, record_points=10)
        assert traj.n_q1[-1] > 0.999

    def test_resonant_swap_follows_sin_squared(self, table1):
        # sideband-resolved tripartite term: population exchange is an exact
        # two-level Rabi flop at the swap matrix element
        flags = TermFlags(sideband_resolved=True, radiation_pressure=False,
                          exchange=False, cross_kerr=False,
                          correlated_hopping=False, higher_order_phi4x=False)
        ctx = make_context(table1, phonon_dim=5, dissipation=False, flags=flags)
        g = ctx.swap_rate(+1)
        seg = ctx.resonant_segment(math.pi / (2 * g), +1)
        rho0 = product_state(ctx.space, 0, 1, thermal_state(5, 0.0))
        traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))), None,
                      rtol=1e-9, atol=1e-11, record_points=40)
        model = np.sin(g * traj.t) ** 2
        assert np.max(np.abs(traj.n_m - model)) < 1e-4

    def test_t1_decay(self, table1):
        ctx = make_context(replace(table1, T=0.0, T2=1e6), phonon_dim=4)
        seg = ctx.resonant_segment(3 * table1.T1 / 10, +3)  # parked off resonance
        rho0 = product_state(ctx.space, 1, 0, thermal_state(4, 0.0))
        traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))), ctx.dissipation,
                      rtol=1e-9, atol=1e-11, record_points=30)
        model = np.exp(-traj.t / table1.T1)
        assert np.max(np.abs(traj.n_q1 - model)) < 1e-4

    def test_thermalisation_to_bath_occupation(self, table1):
        # artificially small Qm so gamma_m t >> 1 is quick
        dim = 14
        n_target = 1.0
        p = replace(table1, Qm=50.0, T1=1.0, T2=1.0,
                    T=_temperature_for(n_target, table1.omega_m))
        ctx = make_context(p, phonon_dim=dim)
        seg = ctx.resonant_segment(8.0 / ctx.derived.gamma_m, +3)
        rho0 = product_state(ctx.space, 0, 0, thermal_state(dim, 0.0))
        traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))), ctx.dissipation,
                      rtol=1e-7, atol=1e-9, record_points=20)
        assert traj.n_m[-1] == pytest.approx(n_target, rel=0.01)
        # sharper: the truncated birth-death ladder equilibrium is the
        # renormalised geometric distribution
        r = n_target / (n_target + 1.0)
        pn = (1 - r) * r ** np.arange(dim)
        mean_trunc = float((pn / pn.sum()) @ np.arange(dim))
        assert traj.n_m[-1] == pytest.approx(mean_trunc, rel=2e-3)

    def test_purity_preserved_without_dissipation(self, ctx_free):
        g = ctx_free.swap_rate(+1)
        seg = ctx_free.resonant_segment(math.pi / (2 * g), +1)
        rho0 = product_state(ctx_free.space, 0, 1, thermal_state(5, 0.0))
        traj = evolve(rho0, ctx_free.handle(PulseSchedule((seg,))), None,
                      rtol=1e-8, atol=1e-10)
        assert np.max(np.abs(traj.purity - 1.0)) < 1e-6

    def test_trace_drift_bound(self, ctx_diss):
        g = ctx_diss.swap_rate(+1)
        seg = ctx_diss.resonant_segment(math.pi / g, +1)
        rho0 = product_state(ctx_diss.space, 0, 1, thermal_state(5, 0.05))
        traj = evolve(rho0, ctx_diss.handle(PulseSchedule((seg,))),
                      ctx_diss.dissipation, rtol=1e-8, atol=1e-10)
        assert traj.max_trace_drift() < 1e-7
        assert min(ev for _, ev in traj.stats.min_eigenvalues) > -1e-6

    def test_excitation_sum_decreasing_under_t1(self, table1):
        p = replace(table1, T=0.0, T2=1e6)
        ctx = make_context(p, phonon_dim=4)
        seg = ctx.resonant_segment(2e-6, +1)
        rho0 = product_state(ctx.space, 1, 1, thermal_state(4, 0.0))
        traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))), ctx.dissipation,
                      rtol=1e-8, atol=1e-10, record_points=50)
        total = traj.n_q1 + traj.n_q2   # qubit excitation only: the swap
        assert np.all(np.diff(total) < 1e-9)  # moves it around, T1 removes it

    def test_frame_invariance_of_populations(self, table1):
        flags = TermFlags()
        base = make_context(table1, phonon_dim=4, dissipation=False)
        g = base.swap_rate(+1)
        seg = base.resonant_segment(math.pi / (2 * g), +1)
        rho0 = product_state(base.space, 0, 1, thermal_state(4, 0.0))
        tra = evolve(rho0, base.handle(PulseSchedule((seg,))), None,
                     rtol=1e-9, atol=1e-11, record_points=25)
        shifted = replace(base, omega_ref=base.omega_ref + TWO_PI * 50e6)
        trb = evolve(rho0, shifted.handle(PulseSchedule((seg,))), None,
                     rtol=1e-9, atol=1e-11, record_points=25)
        for a, b in ((tra.n_m, trb.n_m), (tra.n_q1, trb.n_q1), (tra.n_q2, trb.n_q2)):
            assert np.max(np.abs(a - b)) < 1e-6

    def test_tolerance_halving_convergence(self, table1):
        ctx = make_context(table1, phonon_dim=5)
        g = ctx.swap_rate(+1)
        seg = ctx.resonant_segment(math.pi / (2 * g), +1)
        rho0 = product_state(ctx.space, 0, 1, thermal_state(5, 0.05))
        vals = []
        for scale in (1.0, 0.5):
            traj = evolve(rho0, ctx.handle(PulseSchedule((seg,))),
                          ctx.dissipation, rtol=1e-7 * scale, atol=1e-9 * scale,
                          record_points=10)
            vals.append(traj.n_m[-1])
        assert abs(vals[0] - vals[1]) < 1e-4


def _temperature_for(n_bar, omega_m):
    from triphon import constants as const

    return const.hbar * omega_m / (const.kB * math.log(1.0 / n_bar + 1.0))


class TestEvents:
    space = default_space(n_m=4)

    def test_reset_keeps_phonon(self):
        st = pure_state(self.space, {(1, 0, 1): 1.0})
        out = apply_reset(st, ("q1", "q2"))
        assert out.trace() == pytest.approx(1.0)
        idx = self.space.index((0, 0, 1))
        assert out.rho[idx, idx].real == pytest.approx(1.0)

    def test_reset_idempotent(self):
        st = pure_state(self.space, {(0, 1, 2): 0.6, (1, 0, 1): 0.8})
        once = apply_reset(st, ("q1",))
        twice = apply_reset(once, ("q1",))
        assert np.max(np.abs(once.rho - twice.rho)) < 1e-15

    def test_reset_of_entangled_pair_mixes_phonon(self):
        # qubit1-phonon Bell pair: resetting q1 leaves the phonon maximally mixed
        st = pure_state(self.space, {(0, 0, 0): 1.0, (1, 0, 1): 1.0})
        out = apply_reset(st, ("q1",))
        from triphon.analysis import partial_trace

        red = partial_trace(out, "m")
        assert red.rho[0, 0].real == pytest.approx(0.5)
        assert red.rho[1, 1].real == pytest.approx(0.5)
        assert abs(red.rho[0, 1]) < 1e-15

    def test_excite_swaps_levels(self):
        st = pure_state(self.space, {(0, 0, 2): 1.0})
        out = apply_excite(st, "q1")
        idx = self.space.index((1, 0, 2))
        assert out.rho[idx, idx].real == pytest.approx(1.0)

    def test_measurement_identity(self):
        st = pure_state(self.space, {(0, 1, 1): 1.0})
        from triphon.fock import identity

        out, p = apply_measurement(st, identity(self.space))
        assert p == pytest.approx(1.0)
        assert np.max(np.abs(out.rho - st.rho)) < 1e-14

    def test_ghz_post_selection(self):
        ghz = pure_state(self.space, {(0, 1, 0): 1.0, (1, 0, 1): -1j})
        P = projector(self.space, q1=0, q2=1)
        out, p = apply_measurement(ghz, P)
        assert p == pytest.approx(0.5)
        from triphon.analysis import partial_trace

        red = partial_trace(out, "m")
        assert red.rho[0, 0].real == pytest.approx(1.0)

    def test_impossible_post_selection(self):
        st = pure_state(self.space, {(1, 0, 0): 1.0})
        with pytest.raises(MeasurementError):
            apply_measurement(st, projector(self.space, q1=0, q2=1))

    def test_non_projector_rejected(self):
        st = pure_state(self.space, {(0, 0, 0): 1.0})
        from triphon.fock import destroy, embed

        with pytest.raises(Exception):
            apply_measurement(st, embed(destroy(4), "m", self.space))

    def test_events_inside_schedule(self, table1):
        ctx = make_context(table1, phonon_dim=4, dissipation=False)
        segs = (Segment(0.0, ctx.derived.omega1, ctx.derived.omega1,
                        events=(Excite("q2"),)),)
        sched = PulseSchedule(segs, final_events=(Measure((("q1", 0), ("q2", 1))),))
        rho0 = product_state(ctx.space, 0, 0, thermal_state(4, 0.0))
        traj = evolve(rho0, ctx.handle(sched), None, rtol=1e-8, atol=1e-10)
        assert traj.events[0][1] == "excite q2"
        assert traj.events[-1][2] == pytest.approx(1.0, abs=1e-9)

    def test_boundary_population_continuity(self, table1):
        # an instantaneous frequency switch changes the generator, not the state
        ctx = make_context(table1, phonon_dim=4, dissipation=False)
        g = ctx.swap_rate(+1)
        segs = (ctx.resonant_segment(0.2 / g, +1), ctx.resonant_segment(0.2 / g, -1))
        rho0 = product_state(ctx.space, 0, 1, thermal_state(4, 0.0))
        traj = evolve(rho0, ctx.handle(PulseSchedule(segs)), None,
                      rtol=1e-9, atol=1e-11, record_points=400)
        jumps = np.abs(np.diff(traj.n_m))
        assert np.max(jumps) < 5e-3  # no discontinuity beyond smooth evolution


def test_structured_rhs_matches_dense_algebra(table1):
    """The strided collapse kernels must equal the literal Lindblad RHS."""
    from triphon.lindblad import _SegmentGenerator

    ctx = make_context(table1, phonon_dim=6)
    seg = ctx.resonant_segment(1e-6, +1)
    H = ctx.handle(PulseSchedule((seg,))).static_for(seg)
    gen = _SegmentGenerator(H, ctx.dissipation, None, 0.0)
    D = ctx.space.dim
    rng = np.random.default_rng(0)
    rho = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    rho = rho + rho.conj().T
    out = np.empty_like(rho)
    gen.rhs(0.0, rho, out)
    Hd = H.dense()
    ref = -1j * (Hd @ rho - rho @ Hd)
    for ch in ctx.dissipation:
        o = ch.op.dense()
        od = o.conj().T
        ref += ch.rate * (o @ rho @ od - 0.5 * (od @ o @ rho + rho @ od @ o))
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(out - ref)) < 1e-12 * scale
    assert abs(np.trace(out)) < 1e-10 * scale  # trace-preserving generator


def test_step_underflow_raises(table1):
    ctx = make_context(table1, phonon_dim=4, dissipation=False)
    seg = ctx.resonant_segment(1e-6, +1)
    rho0 = product_state(ctx.space, 0, 1, thermal_state(4, 0.0))
    with pytest.raises(IntegrationError):
        evolve(rho0, ctx.handle(PulseSchedule((seg,))), None,
               rtol=1e-8, atol=1e-10, max_steps=5)
