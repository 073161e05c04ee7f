import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from lindkit import bath, eigenops, master, qops

from conftest import (
    J_AT_OMEGA0,
    OHMIC_REFERENCE,
    TOY_OMEGA0,
    random_complex,
    random_density,
    random_hermitian,
    two_level,
)


@pytest.fixture
def ohmic():
    return bath.OhmicCutoff(**OHMIC_REFERENCE)


def damped_qubit(ohmic, include_lamb_shift=True):
    # the master layer works in the eigenbasis, so pass diag(energies)
    h, _, spec, bohr, sets = two_level(TOY_OMEGA0)
    h_eig = np.diag(spec.energies).astype(complex)
    gm = bath.gamma_matrix(ohmic, bohr.frequencies)
    model = master.assemble_lindblad(h_eig, sets, gm, include_lamb_shift=include_lamb_shift)
    return h_eig, model, master.lindblad_generator(model)


# ---------------------------------------------------------------------------
# vectorization helpers


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=5))
def test_vectorization_identities(seed, d):
    rng = np.random.default_rng(seed)
    a, b, x = (random_complex(rng, d) for _ in range(3))
    assert np.allclose(master.unvec(master.vec(x)), x)
    assert np.allclose(master.unvec(master.left_mult(a) @ master.vec(x)), a @ x)
    assert np.allclose(master.unvec(master.right_mult(b) @ master.vec(x)), x @ b)
    assert np.allclose(master.unvec(master.sandwich(a, b) @ master.vec(x)), a @ x @ b)


def test_dissipator_is_trace_annihilating():
    rng = np.random.default_rng(1)
    l_op = random_complex(rng, 3)
    dd = master.dissipator(l_op)
    id_vec = master.vec(np.eye(3, dtype=complex))
    assert np.max(np.abs(id_vec.conj() @ dd)) < 1e-12 * np.max(np.abs(dd))


def test_hamiltonian_generator_is_unitary_conjugation():
    rng = np.random.default_rng(2)
    h = random_hermitian(rng, 3)
    rho = random_density(rng, 3)
    gen = master.Generator(dim=3, kind="test", matrix=master.hamiltonian_generator(h))
    t = 0.9
    out = master.propagate(gen, rho, [0.0, t]).states[-1]
    u = sla.expm(-1j * h * t)
    assert qops.max_norm(out - u @ rho @ u.conj().T) < 1e-10


# ---------------------------------------------------------------------------
# assembly of the damped qubit


def test_damped_qubit_jump_rates(ohmic):
    _, model, _ = damped_qubit(ohmic)
    nonzero = [jm for jm in model.jumps if jm.rate > 0]
    assert len(nonzero) == 1
    (jm,) = nonzero
    assert jm.omega == pytest.approx(TOY_OMEGA0)
    assert jm.rate == pytest.approx(J_AT_OMEGA0, rel=1e-14)


def test_lamb_shift_is_hermitian_and_commutes(ohmic):
    h_eig, model, _ = damped_qubit(ohmic)
    assert qops.hermiticity_defect(model.h_ls) < 1e-14
    assert qops.max_norm(qops.commutator(model.h_ls, h_eig)) < 1e-14


def test_generator_preserves_trace_and_hermiticity(ohmic):
    _, _, gen = damped_qubit(ohmic)
    id_vec = master.vec(np.eye(gen.dim, dtype=complex))
    assert np.max(np.abs(id_vec.conj() @ gen.matrix)) < 1e-12
    rng = np.random.default_rng(3)
    rho = random_density(rng, gen.dim)
    out = master.unvec(gen.matrix @ master.vec(rho))
    assert qops.hermiticity_defect(out) < 1e-12
    assert abs(np.trace(out)) < 1e-12


def test_propagate_matches_dense_exponential(ohmic):
    _, _, gen = damped_qubit(ohmic)
    rng = np.random.default_rng(4)
    rho0 = random_density(rng, 2)
    times = np.array([0.0, 0.7, 3.0, 11.0])
    traj = master.propagate(gen, rho0, times)
    for t, state in zip(times, traj.states):
        exact = master.unvec(sla.expm(gen.matrix * t) @ master.vec(rho0))
        assert qops.max_norm(state - exact) < 1e-10
    assert traj.positivity_min.min() > -1e-12


def test_zero_temperature_steady_state_is_ground(ohmic):
    _, _, gen = damped_qubit(ohmic)
    ss = master.steady_state(gen)
    assert not ss.degenerate
    # in the ascending eigenbasis the ground projector is diag(1, 0)
    assert qops.max_norm(ss.rho - np.diag([1.0, 0.0]).astype(complex)) < 1e-10


def test_spectral_and_stepper_propagation_agree(ohmic):
    _, _, gen = damped_qubit(ohmic)
    rng = np.random.default_rng(5)
    rho0 = random_density(rng, 2)
    times = np.linspace(0.0, 8.0, 9)
    a = master.propagate(gen, rho0, times, method="spectral").states
    b = master.propagate(gen, rho0, times, method="stepper").states
    assert max(qops.max_norm(x - y) for x, y in zip(a, b)) < 1e-8


def test_spectrum_has_zero_mode_and_stable_half_plane(ohmic):
    _, _, gen = damped_qubit(ohmic)
    sp = master.spectrum(gen)
    assert sp.eigenvalues.real.max() <= 1e-10
    assert np.min(np.abs(sp.eigenvalues)) <= 1e-10
    assert sp.residual < 1e-10


def test_steady_state_flags_degeneracy():
    gen = master.Generator(dim=2, kind="test", matrix=np.zeros((4, 4), dtype=complex))
    ss = master.steady_state(gen)
    assert ss.degenerate
    assert len(ss.basis) > 1


# ---------------------------------------------------------------------------
# thermal stationarity


def thermal_qubit(beta: float):
    _, _, spec, bohr, sets = two_level(1.0)
    h_eig = np.diag(spec.energies).astype(complex)
    jt = bath.BosonicThermal(bath.OhmicCutoff(**OHMIC_REFERENCE), beta=beta)
    gm = bath.gamma_matrix(jt, bohr.frequencies)
    return h_eig, master.lindblad_generator(master.assemble_lindblad(h_eig, sets, gm))


def test_gibbs_state_is_stationary_for_thermal_bath():
    beta = 1.3
    h_eig, gen = thermal_qubit(beta)
    rho_g = master.gibbs_state(h_eig, beta)
    assert np.trace(rho_g) == pytest.approx(1.0, abs=1e-14)
    drift = master.unvec(gen.matrix @ master.vec(rho_g))
    assert qops.max_norm(drift) < 1e-10


def test_detailed_balance_fixes_population_ratio():
    beta = 0.8
    _, gen = thermal_qubit(beta)
    ss = master.steady_state(gen)
    pops = np.real(np.diag(ss.rho))  # ascending eigenbasis: ground first
    assert pops[1] / pops[0] == pytest.approx(math.exp(-beta), abs=1e-8)


# ---------------------------------------------------------------------------
# Redfield and complete positivity


def v_system(splitting=1.1, eta=0.1):
    h = np.diag([0.0, 1.0, splitting]).astype(complex)
    a = np.zeros((3, 3), dtype=complex)
    a[0, 1] = a[1, 0] = a[0, 2] = a[2, 0] = 1.0
    spec = qops.eig_hermitian(h)
    bohr = eigenops.bohr_frequencies(spec)
    sets = [eigenops.decompose(a, spec, bohr)]
    j = bath.OhmicCutoff(eta=eta, alpha=1.0, cutoff=3.0)
    gm = bath.gamma_matrix(j, bohr.frequencies)
    psi = np.zeros(3, dtype=complex)
    psi[1] = psi[2] = 1.0 / math.sqrt(2.0)
    rho0 = np.outer(psi, psi.conj())
    return h, sets, gm, rho0


def test_redfield_can_leave_the_state_cone():
    h, sets, gm, rho0 = v_system()
    red = master.assemble_redfield(h, sets, gm)
    traj = master.propagate(red, rho0, np.linspace(0.0, 40.0, 21))
    assert traj.positivity_min.min() < -1e-6


def test_lindblad_stays_positive_where_redfield_does_not():
    h, sets, gm, rho0 = v_system()
    gen = master.lindblad_generator(master.assemble_lindblad(h, sets, gm))
    traj = master.propagate(gen, rho0, np.linspace(0.0, 40.0, 21))
    assert traj.positivity_min.min() >= -1e-10


def test_choi_psd_separates_the_two_generators():
    h, sets, gm, _ = v_system()
    gen = master.lindblad_generator(master.assemble_lindblad(h, sets, gm))
    red = master.assemble_redfield(h, sets, gm)
    assert master.choi_psd_check(gen, 5.0) >= -1e-9
    assert min(master.choi_psd_check(red, t) for t in (1.0, 3.0, 5.0)) < -1e-6


def test_choi_matrix_of_identity_channel():
    gen = master.Generator(dim=2, kind="test", matrix=np.zeros((4, 4), dtype=complex))
    c = master.choi_matrix(gen, 1.0)
    assert np.trace(c) == pytest.approx(2.0, abs=1e-12)
    assert qops.min_eigenvalue(c) >= -1e-14


def test_time_dependent_redfield_settles_onto_stationary_redfield(ohmic):
    h, _, _, bohr, sets = two_level(TOY_OMEGA0)
    jw = bath.OhmicCutoff(eta=0.01, alpha=1.0, cutoff=1.0)
    gm = bath.gamma_matrix(jw, bohr.frequencies)
    red = master.assemble_redfield(h, sets, gm)
    rho0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    times = np.linspace(0.0, 40.0, 81)
    a = master.propagate(red, rho0, times)
    b = master.propagate_redfield_time_dependent(h, sets[0], jw, rho0, times)
    dev = max(qops.max_norm(x - y) for x, y in zip(a.states, b.states))
    assert dev < 2e-2
    assert max(abs(np.trace(s) - 1.0) for s in b.states) < 1e-12


# ---------------------------------------------------------------------------
# secular drift probe


def test_rwa_probe_perturbative_shift_and_crossover():
    g = 0.03
    r11, r12 = -1.0j, -0.1j
    t_grid = np.linspace(0.0, 4000.0, 2001)
    probe = master.rwa_deviation_probe(r11, r12, g, t_grid)
    pert = abs(g) ** 2 / (r11 - r12)
    assert probe.perturbative_shift == pytest.approx(pert, rel=1e-12)
    assert abs(probe.eigenvalue_shift - pert) <= 0.01 * abs(pert)
    scale = abs(r11 - r12) / abs(g) ** 2
    assert scale / 3.0 <= probe.crossover_time <= 3.0 * scale


# ---------------------------------------------------------------------------
# trajectory serialization


def test_trajectory_csv_round_trip(tmp_path, ohmic):
    _, _, gen = damped_qubit(ohmic)
    rng = np.random.default_rng(6)
    rho0 = random_density(rng, 2)
    traj = master.propagate(gen, rho0, np.linspace(0.0, 5.0, 11))
    path = tmp_path / "traj.csv"
    master.export_trajectory_csv(traj, path)
    back = master.read_trajectory_csv(path)
    assert np.max(np.abs(back.times - traj.times)) <= 1e-12
    assert max(qops.max_norm(x - y) for x, y in zip(back.states, traj.states)) <= 1e-12


def test_trajectory_csv_header_names_all_entries():
    header = master.trajectory_csv_header(2)
    cols = [c.strip() for c in header.split(",")]
    assert cols[0] == "t"
    assert cols[-1] == "min_eig"
    assert len(cols) == 1 + 2 * 4 + 1  # t, re and im per entry, min eigenvalue
