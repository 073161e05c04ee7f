import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindkit import qops

from conftest import random_complex, random_density, random_hermitian


def test_as_square_array_rejects_nonsquare():
    with pytest.raises(qops.MatrixValidationError):
        qops.as_square_array(np.zeros((2, 3)))
    with pytest.raises(qops.MatrixValidationError):
        qops.as_square_array([1.0, 2.0])


def test_hermitian_operator_accepts_and_rejects():
    good = np.array([[1.0, 2.0 - 1j], [2.0 + 1j, -0.5]])
    out = qops.hermitian_operator(good)
    assert np.array_equal(out, good)
    with pytest.raises(qops.MatrixValidationError):
        qops.hermitian_operator([[0.0, 1.0], [0.0, 0.0]])


def test_density_matrix_validation():
    rho = np.array([[0.75, 0.1], [0.1, 0.25]])
    assert np.allclose(qops.density_matrix(rho), rho)
    with pytest.raises(qops.MatrixValidationError):
        qops.density_matrix(np.diag([0.9, 0.3]))  # trace 1.2
    with pytest.raises(qops.MatrixValidationError):
        qops.density_matrix(np.diag([1.5, -0.5]))  # negative weight


def test_eig_hermitian_ascending_and_reconstructs():
    rng = np.random.default_rng(7)
    h = random_hermitian(rng, 5)
    spec = qops.eig_hermitian(h)
    assert np.all(np.diff(spec.energies) >= 0)
    v = spec.vectors
    assert np.allclose(v.conj().T @ v, np.eye(5), atol=1e-13)
    assert np.allclose(v @ np.diag(spec.energies) @ v.conj().T, h, atol=1e-12)


def test_eig_hermitian_rejects_nonhermitian():
    with pytest.raises(qops.MatrixValidationError):
        qops.eig_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=8))
def test_eigenbasis_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    op = random_complex(rng, d)
    spec = qops.eig_hermitian(h)
    back = qops.from_eigenbasis(qops.to_eigenbasis(op, spec), spec)
    assert qops.max_norm(back - op) < 1e-12 * max(1.0, qops.max_norm(op))


def test_to_eigenbasis_diagonalizes_the_hamiltonian():
    rng = np.random.default_rng(11)
    h = random_hermitian(rng, 4)
    spec = qops.eig_hermitian(h)
    hd = qops.to_eigenbasis(h, spec)
    assert qops.max_norm(hd - np.diag(spec.energies)) < 1e-12


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_commutator_algebra(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_complex(rng, 3) for _ in range(3))
    assert np.allclose(qops.commutator(a, b), -qops.commutator(b, a))
    assert np.allclose(qops.anticommutator(a, b), qops.anticommutator(b, a))
    # Leibniz rule [a, bc] = [a, b] c + b [a, c]
    lhs = qops.commutator(a, b @ c)
    rhs = qops.commutator(a, b) @ c + b @ qops.commutator(a, c)
    assert qops.max_norm(lhs - rhs) < 1e-12


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_hermitian_part_and_defect(seed):
    rng = np.random.default_rng(seed)
    m = random_complex(rng, 4)
    hp = qops.hermitian_part(m)
    assert qops.hermiticity_defect(hp) < 1e-14
    assert np.allclose(qops.dag(m), m.conj().T)
    # defect is relative: ||M - M^dag|| / ||M||
    assert qops.hermiticity_defect(m) == pytest.approx(
        qops.max_norm(m - qops.dag(m)) / qops.max_norm(m)
    )


def test_max_norm_and_min_eigenvalue():
    m = np.array([[0.0, -3.0], [1.0, 2.0]])
    assert qops.max_norm(m) == 3.0
    assert qops.min_eigenvalue(np.diag([0.4, -0.2, 1.0])) == pytest.approx(-0.2)


def test_min_eigenvalue_of_positive_matrix():
    rho = random_density(np.random.default_rng(3), 4)
    assert qops.min_eigenvalue(rho) >= 0.0
