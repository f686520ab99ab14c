"""Operator algebra and state constructors on the truncated product space."""

import math

import numpy as np
import pytest

from triphon.fock import (DensityState, SpaceDescriptor, SpaceError,
                          default_space, destroy, embed, expectation, identity,
                          ket, number, parity, projector, pure_state,
                          thermal_state)


def test_destroy_two_levels():
    a = destroy(2).dense()
    assert np.allclose(a, [[0, 1], [0, 0]])


def test_number_from_destroy():
    a = destroy(3)
    n = (a.dag() @ a).dense()
    assert np.allclose(np.diag(n), [0, 1, 2])


def test_commutator_below_truncation():
    dim = 8
    a = destroy(dim).dense()
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert np.diag(comm)[-1] == pytest.approx(1 - dim)  # truncation artefact


def test_destroy_requires_two_levels():
    with pytest.raises(SpaceError):
        destroy(1)


class TestEmbed:
    space = default_space(n_m=5)

    def test_embedded_numbers_commute(self):
        n1 = embed(number(3), "q1", self.space).dense()
        nm = embed(number(5), "m", self.space).dense()
        assert np.allclose(n1 @ nm, nm @ n1)

    def test_traceless(self):
        b = embed(destroy(5), "m", self.space)
        assert abs(np.trace(b.dense())) == 0.0

    def test_matrix_element(self):
        # <1_1 1_m 0_2| b |1_1 2_m 0_2> = sqrt(2)
        b = embed(destroy(5), "m", self.space).dense()
        bra = self.space.index((1, 0, 1))
        ket_i = self.space.index((1, 0, 2))
        assert b[bra, ket_i] == pytest.approx(math.sqrt(2.0))

    def test_spectrum_preserved_with_multiplicity(self):
        op = number(4)
        space = SpaceDescriptor((3, 4), ("q1", "m"))
        full = embed(op, "m", space).dense()
        eig = np.sort(np.linalg.eigvalsh(full.real))
        expected = np.sort(np.tile(np.arange(4.0), 3))
        assert np.allclose(eig, expected)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(SpaceError):
            embed(destroy(4), "q1", self.space)

    def test_kron_associativity(self):
        # embedding into (A x B) x C matches A x (B x C) flat ordering
        import scipy.sparse as sp

        mats = [np.diag(np.arange(d, dtype=complex)) for d in self.space.dims]
        left = sp.kron(sp.kron(mats[0], np.eye(3)), np.eye(5)).toarray()
        direct = embed(number(3), "q1", self.space).dense()
        assert np.allclose(left, direct)

    def test_sparse_dense_paths_agree(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        from triphon.fock import Operator

        op = Operator(SpaceDescriptor((3,), ("m",)), m)
        via_dense = embed(op, "q2", self.space).dense()
        op_sp = Operator(op.space, op.sparse())
        via_sparse = embed(op_sp, "q2", self.space).dense()
        assert np.max(np.abs(via_dense - via_sparse)) < 1e-12


class TestThermalState:
    def test_vacuum_limit(self):
        th = thermal_state(6, 0.0)
        assert th.rho[0, 0] == 1.0 and th.trace() == pytest.approx(1.0)

    def test_truncated_ground_population(self):
        # closed-form renormalised geometric distribution
        th = thermal_state(40, 20.0)
        r = 20.0 / 21.0
        p0 = (1.0 / 21.0) / (1.0 - r**40)
        assert th.rho[0, 0].real == pytest.approx(p0, rel=1e-12)
        assert p0 == pytest.approx(0.0555, abs=2e-4)

    def test_trace_exactly_one(self):
        th = thermal_state(25, 7.3)
        assert np.trace(th.rho).real == pytest.approx(1.0, abs=1e-15)
        assert np.all(np.diag(th.rho).real >= 0)
        assert np.count_nonzero(th.rho - np.diag(np.diag(th.rho))) == 0

    def test_truncation_lowers_mean(self):
        th = thermal_state(40, 20.0)
        mean = float(np.real(np.diag(th.rho) @ np.arange(40)))
        # independent evaluation of the truncated geometric mean
        r = 20.0 / 21.0
        p = (1 - r) * r ** np.arange(40)
        expected = float((p / p.sum()) @ np.arange(40))
        assert mean == pytest.approx(expected, rel=1e-12)
        assert mean < 20.0


class TestPureStateAndExpectation:
    space = default_space(n_m=4)

    def test_single_component(self):
        st = pure_state(self.space, {(0, 1, 0): 1.0})
        assert st.trace() == pytest.approx(1.0)
        assert np.linalg.matrix_rank(st.rho) == 1

    def test_bell_purity(self):
        st = pure_state(self.space, {(0, 0, 0): 1.0, (1, 0, 1): 1.0})
        assert st.purity() == pytest.approx(1.0)

    def test_ghz_off_diagonal(self):
        st = pure_state(self.space, {(0, 1, 0): 1.0, (1, 0, 1): -1j})
        a = self.space.index((0, 1, 0))
        b = self.space.index((1, 0, 1))
        assert abs(st.rho[a, b]) == pytest.approx(0.5)

    def test_zero_vector_rejected(self):
        with pytest.raises(SpaceError):
            ket(self.space, {(0, 0, 0): 0.0})

    def test_vacuum_number_expectation(self):
        st = pure_state(self.space, {(0, 0, 0): 1.0})
        nm = embed(number(4), "m", self.space)
        assert expectation(st, nm) == pytest.approx(0.0)

    def test_identity_expectation(self):
        st = pure_state(self.space, {(1, 0, 2): 1.0})
        assert expectation(st, identity(self.space)) == pytest.approx(1.0)

    def test_thermal_truncated_mean(self):
        th = thermal_state(40, 20.0)
        n_op = number(40)
        val = expectation(th, n_op).real
        r = 20.0 / 21.0
        p = (1 - r) * r ** np.arange(40)
        assert val == pytest.approx(float((p / p.sum()) @ np.arange(40)), rel=1e-12)

    def test_space_mismatch(self):
        st = thermal_state(5, 1.0)
        with pytest.raises(SpaceError):
            expectation(st, number(6))

    def test_sparse_dense_expectation_agree(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        from triphon.fock import Operator

        st = thermal_state(5, 2.0)
        dense_op = Operator(st.space, m)
        sparse_op = Operator(st.space, dense_op.sparse())
        assert abs(expectation(st, sparse_op) - expectation(st, dense_op)) < 1e-12


def test_projector_selects_branch():
    space = default_space(n_m=3)
    P = projector(space, q1=0, q2=1)
    st = pure_state(space, {(0, 1, 2): 1.0})
    assert expectation(st, P).real == pytest.approx(1.0)
    st2 = pure_state(space, {(1, 0, 2): 1.0})
    assert expectation(st2, P).real == pytest.approx(0.0)


def test_parity_diagonal():
    P = parity(5).dense()
    assert np.allclose(np.diag(P), [1, -1, 1, -1, 1])


def test_space_descriptor_validation():
    with pytest.raises(SpaceError):
        SpaceDescriptor((3, 1), ("a", "b"))
    with pytest.raises(SpaceError):
        SpaceDescriptor((3, 3), ("a", "a"))
    sp = SpaceDescriptor((2, 3), ("a", "b"))
    assert sp.dim == 6 and sp.index((1, 2)) == 5
