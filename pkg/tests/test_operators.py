import numpy as np
import pytest

from spinsqueeze.analysis import wineland_xi2
from spinsqueeze.operators import (
    LayoutError,
    QuantumState,
    SpaceLayout,
    ancilla_lowering,
    ancilla_lowering_matrix,
    coherent_spin_ket,
    collective_op,
    local_pauli,
    partial_trace_ancilla,
    rotation_operator,
    spin_coherent_state,
    symmetric_isometry,
)


def _random_rho(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestLayout:
    def test_dimensions(self):
        assert SpaceLayout.dicke(5).dim == 6
        assert SpaceLayout.product(5).dim == 32
        assert SpaceLayout.dicke(3, "qubit").dim == 8
        assert SpaceLayout.product(2, "boson", 5).dim == 20

    def test_boson_truncation_lower_bound(self):
        with pytest.raises((LayoutError, ValueError)):
            SpaceLayout.dicke(2, "boson", 1)


class TestCollective:
    def test_dicke_jz(self):
        jz = collective_op(SpaceLayout.dicke(2), "z").matrix
        assert np.allclose(jz, np.diag([-1, 0, 1]))

    def test_product_jz_spectrum(self):
        jz = collective_op(SpaceLayout.product(2), "z").matrix
        assert np.allclose(np.sort(np.linalg.eigvalsh(jz)), [-1, 0, 0, 1])

    def test_ladder_identity(self):
        lay = SpaceLayout.dicke(4)
        jp, jm = (collective_op(lay, a).matrix for a in ("plus", "minus"))
        jx, jy, jz = (collective_op(lay, a).matrix for a in "xyz")
        jj = jx @ jx + jy @ jy + jz @ jz
        assert np.allclose(jp @ jm, jj - jz @ jz + jz, atol=1e-12)

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            collective_op(SpaceLayout.dicke(2), "w")

    @pytest.mark.parametrize("make", [SpaceLayout.dicke, SpaceLayout.product])
    def test_commutators(self, make):
        lay = make(3)
        jx, jy, jz = (collective_op(lay, a).matrix for a in "xyz")
        assert np.max(np.abs(jx @ jy - jy @ jx - 1j * jz)) < 1e-12
        assert np.max(np.abs(jy @ jz - jz @ jy - 1j * jx)) < 1e-12
        assert np.max(np.abs(jz @ jx - jx @ jz - 1j * jy)) < 1e-12
        jp = collective_op(lay, "plus").matrix
        assert np.allclose(jp, jx + 1j * jy, atol=1e-12)

    def test_ancilla_identity(self):
        lay = SpaceLayout.dicke(2, "qubit")
        jz = collective_op(lay, "z").matrix
        assert np.allclose(jz, np.kron(np.diag([-1, 0, 1]), np.eye(2)))


class TestLocalPauli:
    def test_single_site(self):
        sx = local_pauli(SpaceLayout.product(1), 1, "x").matrix
        assert np.allclose(sx, [[0, 1], [1, 0]])

    def test_sum_is_collective(self):
        lay = SpaceLayout.product(2)
        total = sum(local_pauli(lay, i, "x").matrix for i in (1, 2)) / 2
        assert np.allclose(total, collective_op(lay, "x").matrix)

    def test_up_is_plus_one(self):
        lay = SpaceLayout.product(3)
        ket = np.zeros(8)
        ket[0b010] = 1.0  # down, up, down with site 1 most significant
        sz = local_pauli(lay, 2, "z").matrix
        assert np.allclose(sz @ ket, ket)

    def test_errors(self):
        with pytest.raises(LayoutError):
            local_pauli(SpaceLayout.dicke(2), 1, "x")
        with pytest.raises((LayoutError, ValueError)):
            local_pauli(SpaceLayout.product(2), 3, "x")


class TestAncilla:
    def test_qubit(self):
        lay = SpaceLayout.dicke(1, "qubit")
        assert np.allclose(ancilla_lowering_matrix(lay), [[0, 1], [0, 0]])
        a = ancilla_lowering(lay).matrix
        assert np.allclose(a, np.kron(np.eye(2), [[0, 1], [0, 0]]))

    def test_boson(self):
        lay = SpaceLayout.dicke(1, "boson", 3)
        expected = np.zeros((3, 3))
        expected[0, 1], expected[1, 2] = 1.0, np.sqrt(2)
        assert np.allclose(ancilla_lowering_matrix(lay), expected)

    def test_truncated_commutator(self):
        a = ancilla_lowering_matrix(SpaceLayout.dicke(1, "boson", 4))
        comm = a @ a.T - a.T @ a
        assert np.allclose(comm, np.diag([1, 1, 1, -3]))

    def test_requires_ancilla(self):
        with pytest.raises(LayoutError):
            ancilla_lowering(SpaceLayout.dicke(2))


class TestCoherentState:
    def test_equator_single_spin(self):
        st = spin_coherent_state(SpaceLayout.product(1), np.pi / 2, 0.0)
        psi = np.array([1, 1]) / np.sqrt(2)
        assert np.allclose(st.rho, np.outer(psi, psi))

    @pytest.mark.parametrize("phi", [0.0, 1.3, -2.0])
    def test_all_down(self, phi):
        st = spin_coherent_state(SpaceLayout.product(3), 0.0, phi)
        assert abs(st.rho[0, 0] - 1) < 1e-14

    def test_dicke_matches_product(self):
        n, th, ph = 3, np.pi / 2, np.pi / 3
        dk = coherent_spin_ket(SpaceLayout.dicke(n), th, ph)
        pr = coherent_spin_ket(SpaceLayout.product(n), th, ph)
        iso = symmetric_isometry(n)
        assert np.max(np.abs(iso.conj().T @ pr - dk)) < 1e-12

    def test_ancilla_ground(self):
        lay = SpaceLayout.dicke(2, "qubit")
        st = spin_coherent_state(lay, 1.0, 0.5)
        rs = partial_trace_ancilla(st)
        assert abs(rs.purity - 1) < 1e-12
        assert np.allclose(st.rho.reshape(3, 2, 3, 2)[:, 1, :, 1], 0)

    def test_xi2_is_one(self):
        rng = np.random.default_rng(3)
        for make in (SpaceLayout.dicke, SpaceLayout.product):
            th, ph = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
            assert abs(wineland_xi2(spin_coherent_state(make(4), th, ph)).xi2 - 1) < 1e-9


class TestPartialTrace:
    def test_product(self):
        rng = np.random.default_rng(1)
        rs = _random_rho(3, rng)
        lay = SpaceLayout.dicke(2, "qubit")
        rho = np.kron(rs, np.diag([1.0, 0.0]))
        out = partial_trace_ancilla(QuantumState(rho, lay))
        assert np.allclose(out.rho, rs, atol=1e-15)
        assert out.layout == SpaceLayout.dicke(2)

    def test_entangled(self):
        lay = SpaceLayout.product(1, "qubit")
        psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
        out = partial_trace_ancilla(QuantumState.from_ket(psi, lay))
        assert np.allclose(out.rho, np.eye(2) / 2)

    def test_trace_preserved(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            out = partial_trace_ancilla(QuantumState(_random_rho(6, rng), SpaceLayout.dicke(2, "qubit")))
            assert abs(out.trace - 1) < 1e-14

    def test_requires_ancilla(self):
        with pytest.raises(LayoutError):
            partial_trace_ancilla(spin_coherent_state(SpaceLayout.dicke(2), 0, 0))


class TestRotation:
    def test_zero_angle(self):
        lay = SpaceLayout.dicke(3, "qubit")
        assert np.allclose(rotation_operator(lay, 0.0, 0.7).matrix, np.eye(lay.dim))

    def test_prepares_equator(self):
        lay = SpaceLayout.product(3)
        down = spin_coherent_state(lay, 0.0, 0.0)
        r = rotation_operator(lay, np.pi / 2, 0.0).matrix
        out = r @ down.rho @ r.conj().T
        target = spin_coherent_state(lay, np.pi / 2, 0.0).rho
        assert np.allclose(out, target, atol=1e-12)

    def test_pi_x_single_spin(self):
        r = rotation_operator(SpaceLayout.product(1), np.pi, np.pi / 2).matrix
        assert np.allclose(r @ np.array([1, 0]), [0, -1j])

    def test_unitary_with_ancilla(self):
        lay = SpaceLayout.product(2, "boson", 3)
        r = rotation_operator(lay, 1.1, 0.4).matrix
        assert np.max(np.abs(r.conj().T @ r - np.eye(lay.dim))) < 1e-10
        # identity on the ancilla factor
        blocks = r.reshape(4, 3, 4, 3)
        assert np.allclose(blocks[:, 0, :, 1], 0)


def test_state_check_flags():
    lay = SpaceLayout.dicke(1)
    bad = QuantumState(np.diag([1.2, -0.2]), lay)
    assert bad.check()
    good = spin_coherent_state(lay, 0.3, 0.2)
    assert good.check() == []
