import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindkit import eigenops, qops

from conftest import random_hermitian, two_level


def test_two_level_bohr_frequencies():
    _, _, spec, bohr, _ = two_level(0.7)
    assert np.allclose(bohr.frequencies, [-0.7, 0.0, 0.7])
    assert bohr.index_of(0.7) == 2
    assert bohr.index_of(-0.7) == 0


def test_two_level_sigma_x_splits_into_ladder_parts():
    _, a, spec, bohr, sets = two_level(0.7)
    s = sets[0]
    lower = s.operator(0.7)
    raise_ = s.operator(-0.7)
    assert qops.max_norm(s.operator(0.0)) == 0.0
    assert np.array_equal(lower, np.array([[0, 1], [0, 0]], dtype=complex))
    assert qops.max_norm(lower + raise_ - qops.to_eigenbasis(a, spec)) < 1e-14
    assert qops.max_norm(raise_ - qops.dag(lower)) < 1e-14


def test_frequencies_closed_under_negation():
    rng = np.random.default_rng(5)
    spec = qops.eig_hermitian(random_hermitian(rng, 6))
    bohr = eigenops.bohr_frequencies(spec)
    assert np.allclose(bohr.frequencies, -bohr.frequencies[::-1])
    mid = len(bohr.frequencies) // 2
    assert bohr.frequencies[mid] == 0.0


def test_degenerate_levels_merge():
    h = np.diag([0.0, 1.0, 1.0 + 1e-13]).astype(complex)
    spec = qops.eig_hermitian(h)
    bohr = eigenops.bohr_frequencies(spec, degeneracy_tol=1e-9)
    assert len(bohr.frequencies) == 3  # -1, 0, 1


def test_ambiguous_tolerance_raises():
    h = np.diag([0.0, 1.0, 1.5]).astype(complex)
    spec = qops.eig_hermitian(h)
    with pytest.raises(eigenops.BohrAmbiguityError):
        eigenops.bohr_frequencies(spec, degeneracy_tol=0.4)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=8))
def test_decomposition_is_complete(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    a = random_hermitian(rng, d)
    a = a / max(qops.max_norm(a), 1e-12)
    spec = qops.eig_hermitian(h)
    bohr = eigenops.bohr_frequencies(spec)
    s = eigenops.decompose(a, spec, bohr)
    assert qops.max_norm(s.total() - qops.to_eigenbasis(a, spec)) < 1e-12


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=8))
def test_interaction_picture_rotation(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    a = random_hermitian(rng, d)
    a = a / max(qops.max_norm(a), 1e-12)
    spec = qops.eig_hermitian(h)
    s = eigenops.decompose(a, spec, eigenops.bohr_frequencies(spec))
    t = float(rng.uniform(0.1, 5.0))
    phases = np.exp(1j * spec.energies * t)
    exact = np.diag(phases) @ qops.to_eigenbasis(a, spec) @ np.diag(phases.conj())
    assert qops.max_norm(s.heisenberg(t) - exact) < 1e-9


def test_eigenoperators_ladder_between_levels():
    # each nonzero-frequency block only connects level pairs with that gap
    h = np.diag([0.0, 0.3, 1.0]).astype(complex)
    spec = qops.eig_hermitian(h)
    bohr = eigenops.bohr_frequencies(spec)
    a = np.ones((3, 3), dtype=complex)
    s = eigenops.decompose(a, spec, bohr)
    block = s.operator(0.3)
    assert block[0, 1] != 0.0
    mask = np.ones((3, 3), dtype=bool)
    mask[0, 1] = False
    assert np.all(block[mask] == 0.0)


def test_nonzero_omegas_drops_empty_blocks():
    _, _, _, _, sets = two_level(1.0)
    s = sets[0]
    assert np.allclose(sorted(s.nonzero_omegas()), [-1.0, 1.0])


def test_coupling_index_is_recorded():
    _, a, spec, bohr, _ = two_level(1.0)
    s = eigenops.decompose(a, spec, bohr, coupling_index=3)
    assert s.coupling_index == 3
