import numpy as np
import pytest
from scipy.linalg import expm

from aqvec.linalg import (
    I2,
    SIGMA_X,
    SIGMA_Z,
    NotHermitianError,
    basis_state,
    density_matrix,
    expm_minus_i,
    herm_eig,
    hs_distance,
    kron,
    kron_all,
    pauli_chain_op,
)

KET0 = basis_state(0, 2)
KET1 = basis_state(1, 2)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(kron(I2, I2), np.eye(4))

    def test_z_on_left(self):
        np.testing.assert_array_equal(kron(SIGMA_Z, I2), np.diag([1, 1, -1, -1]))

    def test_xx_flips_both(self):
        ket00 = basis_state(0, 4)
        np.testing.assert_array_equal(kron(SIGMA_X, SIGMA_X) @ ket00, basis_state(3, 4))

    def test_index_rule(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
        k = kron(a, b)
        for i, j, p, q in np.ndindex(2, 2, 3, 3):
            assert k[i * 3 + p, j * 3 + q] == a[i, j] * b[p, q]

    def test_kron_all_matches_numpy(self):
        np.testing.assert_array_equal(kron_all([SIGMA_X, I2, SIGMA_Z]),
                                      np.kron(np.kron(SIGMA_X, I2), SIGMA_Z))


class TestPauliChain:
    def test_single_qubit_z(self):
        np.testing.assert_array_equal(pauli_chain_op("Z", 0, 1), np.diag([1, -1]))

    def test_x_on_second_site(self):
        np.testing.assert_array_equal(pauli_chain_op("X", 1, 2), np.kron(I2, SIGMA_X))

    def test_zz_pair(self):
        np.testing.assert_array_equal(pauli_chain_op("ZZ", (0, 1), 2), np.diag([1, -1, -1, 1]))

    @pytest.mark.parametrize("kind,site", [("X", 0), ("Z", 2), ("ZZ", (1, 2))])
    def test_squares_to_identity(self, kind, site):
        p = pauli_chain_op(kind, site, 3)
        np.testing.assert_array_equal(p @ p, np.eye(8))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            pauli_chain_op("X", 3, 3)

    def test_non_adjacent_pair(self):
        with pytest.raises(ValueError):
            pauli_chain_op("ZZ", (0, 2), 3)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            pauli_chain_op("Y", 0, 1)

    def test_cached_operator_is_read_only(self):
        p = pauli_chain_op("Z", 0, 2)
        with pytest.raises(ValueError):
            p[0, 0] = 5


class TestHermEig:
    def test_sigma_x(self):
        e = herm_eig(SIGMA_X)
        np.testing.assert_allclose(e.eigenvalues, [-1, 1])
        minus = np.array([1, -1]) / np.sqrt(2)
        assert abs(abs(np.vdot(minus, e.eigenvectors[:, 0])) - 1) < 1e-12
        assert abs(abs(np.vdot(PLUS, e.eigenvectors[:, 1])) - 1) < 1e-12

    def test_diagonal(self):
        e = herm_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(e.eigenvalues, [1, 2, 3])
        np.testing.assert_allclose(np.abs(e.eigenvectors), np.eye(3)[:, [1, 2, 0]])

    def test_random_reconstruction(self):
        h = random_hermitian(8, np.random.default_rng(3))
        e = herm_eig(h)
        assert np.max(np.abs(e.reconstruct() - h)) < 1e-10
        v = e.eigenvectors
        assert np.max(np.abs(v.conj().T @ v - np.eye(8))) < 1e-10
        assert np.all(np.diff(e.eigenvalues) >= 0)

    def test_phase_convention(self):
        e = herm_eig(random_hermitian(6, np.random.default_rng(4)))
        for col in e.eigenvectors.T:
            first = col[np.argmax(np.abs(col) > 1e-12)]
            assert first.imag == 0 and first.real > 0

    def test_deterministic(self):
        h = random_hermitian(8, np.random.default_rng(5))
        a, b = herm_eig(h), herm_eig(h.copy())
        np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            herm_eig(np.array([[0, 1], [0, 0]]))


class TestExpm:
    def test_zero_hamiltonian(self):
        np.testing.assert_allclose(expm_minus_i(np.zeros((4, 4)), 0.7), np.eye(4), atol=1e-15)

    def test_x_rotation_closed_form(self):
        u = expm_minus_i(SIGMA_X, np.pi / 2)
        np.testing.assert_allclose(u, -1j * SIGMA_X, atol=1e-14)
        np.testing.assert_allclose(u @ KET0, -1j * KET1, atol=1e-14)

    def test_diagonal(self):
        np.testing.assert_allclose(expm_minus_i(np.diag([1.0, 2.0]), 1.0),
                                   np.diag([np.exp(-1j), np.exp(-2j)]), atol=1e-15)

    def test_matches_scipy(self):
        h = random_hermitian(8, np.random.default_rng(6))
        np.testing.assert_allclose(expm_minus_i(h, 0.37), expm(-0.37j * h), atol=1e-12)


class TestHsDistance:
    def test_identical(self):
        m = density_matrix(PLUS)
        assert hs_distance(m, m) == 0.0

    def test_orthogonal(self):
        assert hs_distance(density_matrix(KET0), density_matrix(KET1)) == pytest.approx(2.0, abs=1e-15)

    def test_zero_vs_plus(self):
        assert hs_distance(density_matrix(KET0), density_matrix(PLUS)) == pytest.approx(1.0, abs=1e-15)

    def test_matches_trace_definition(self):
        rng = np.random.default_rng(7)
        a, b = random_hermitian(4, rng), random_hermitian(4, rng)
        assert hs_distance(a, b) == pytest.approx(np.trace((a - b) @ (a - b)).real, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hs_distance(np.eye(2), np.eye(4))
