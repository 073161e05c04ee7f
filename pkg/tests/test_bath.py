"""Spectral-density families against independent closed forms.

The Ohmic line with a unit exponential cutoff has

    J(w) = 2 pi eta w exp(-w),       G(0) = eta,
    R(w) = eta (w exp(-w) Ei(w) - 1)

and the flat band of height j0 on (-L, L) has

    G(t) = j0 sin(L t) / (pi t),     R(w) = j0 / (2 pi) ln|(w + L)/(w - L)|.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expi

from lindkit import bath

from conftest import GaussianLine, J_AT_OMEGA0, OHMIC_REFERENCE, TOY_OMEGA0


@pytest.fixture
def ohmic() -> bath.OhmicCutoff:
    return bath.OhmicCutoff(**OHMIC_REFERENCE)


def ohmic_hilbert_exact(eta: float, w: float) -> float:
    if w == 0.0:
        return -eta
    return eta * (w * math.exp(-w) * expi(w) - 1.0)


# ---------------------------------------------------------------------------
# Ohmic reference line


def test_ohmic_pointwise_value(ohmic):
    assert ohmic.evaluate(TOY_OMEGA0) == pytest.approx(J_AT_OMEGA0, rel=1e-14)
    w = 1.3
    assert ohmic.evaluate(w) == pytest.approx(2 * math.pi * 0.05 * w * math.exp(-w), rel=1e-14)
    assert ohmic.evaluate(-0.5) == 0.0


def test_ohmic_zero_frequency_integral_is_eta(ohmic):
    assert ohmic.zero_frequency_integral() == pytest.approx(0.05, abs=1e-12)
    assert ohmic.correlation_at(0.0) == pytest.approx(0.05, abs=1e-12)


def test_ohmic_correlation_closed_form(ohmic):
    # G(t) = eta / (1 + i t)^2
    for t in (0.3, 1.0, 4.0, 12.0):
        exact = 0.05 / (1.0 + 1j * t) ** 2
        assert ohmic.correlation_at(t) == pytest.approx(exact, abs=1e-12)


def test_ohmic_hilbert_transform_closed_form(ohmic):
    for w in (0.0, 0.3, TOY_OMEGA0, 2.0, 5.0):
        assert bath.hilbert_transform(ohmic, w) == pytest.approx(
            ohmic_hilbert_exact(0.05, w), abs=2e-11
        )


def test_hilbert_derivative_matches_central_difference(ohmic):
    w, h = 1.1, 1e-5
    fd = (bath.hilbert_transform(ohmic, w + h) - bath.hilbert_transform(ohmic, w - h)) / (2 * h)
    assert bath.hilbert_derivative(ohmic, w) == pytest.approx(fd, rel=1e-5)


def test_gamma_coefficient_pairs_rate_and_shift(ohmic):
    hf = bath.gamma_coefficient(ohmic, TOY_OMEGA0)
    assert hf.omega == TOY_OMEGA0
    assert hf.gamma == pytest.approx(J_AT_OMEGA0, rel=1e-14)
    assert hf.lamb == pytest.approx(ohmic_hilbert_exact(0.05, TOY_OMEGA0), abs=2e-11)
    below = bath.gamma_coefficient(ohmic, -0.4)
    assert below.gamma == 0.0


# ---------------------------------------------------------------------------
# Gaussian line: every estimate against its closed form


def test_gaussian_zero_frequency_integral(gaussian_line):
    exact = gaussian_line.amplitude * gaussian_line.width / math.sqrt(2 * math.pi)
    assert gaussian_line.zero_frequency_integral() == pytest.approx(exact, rel=1e-11)


def test_gaussian_correlation_at(gaussian_line):
    for t in (0.0, 0.2, 0.9, 2.5):
        exact = complex(gaussian_line.correlation_exact(t))
        assert gaussian_line.correlation_at(t) == pytest.approx(exact, abs=1e-12)


def test_gaussian_hilbert_transform(gaussian_line):
    for w in (-2.0, -0.4, 0.0, 0.7, 3.1):
        assert bath.hilbert_transform(gaussian_line, w) == pytest.approx(
            gaussian_line.hilbert_exact(w), abs=2e-11
        )


def test_gaussian_hilbert_derivative(gaussian_line):
    for w in (0.0, 1.2):
        assert bath.hilbert_derivative(gaussian_line, w) == pytest.approx(
            gaussian_line.hilbert_derivative_exact(w), rel=1e-7
        )


# ---------------------------------------------------------------------------
# Flat band


def test_flat_band_shape():
    fb = bath.FlatBand(j0=0.2, cutoff=4.0)
    assert fb.evaluate(0.0) == 0.2
    assert fb.evaluate(3.999) == 0.2
    assert fb.evaluate(4.5) == 0.0
    assert fb.evaluate(-4.5) == 0.0


def test_flat_band_correlation_closed_form():
    fb = bath.FlatBand(j0=0.2, cutoff=4.0)
    assert fb.zero_frequency_integral() == pytest.approx(0.2 * 4.0 / math.pi, rel=1e-12)
    for t in (0.1, 0.5, 2.0):
        exact = 0.2 * math.sin(4.0 * t) / (math.pi * t)
        assert fb.correlation_at(t) == pytest.approx(exact, abs=1e-11)


def test_flat_band_hilbert_log_form():
    fb = bath.FlatBand(j0=0.2, cutoff=4.0)
    for w in (0.0, 1.0, 3.0, 6.0):
        if w == 4.0:
            continue
        exact = 0.2 / (2 * math.pi) * math.log(abs((w + 4.0) / (w - 4.0)))
        assert bath.hilbert_transform(fb, w) == pytest.approx(exact, abs=1e-9)


# ---------------------------------------------------------------------------
# Photonic band edge


def test_photonic_band_edge_gap_and_edge_behavior():
    j = bath.PhotonicBandEdge(eta=0.1, omega_edge=1.0, cutoff=2.0)
    assert j.evaluate(0.5) == 0.0
    assert j.evaluate(0.999999) == 0.0
    assert j.evaluate(1.5) > 0.0
    edge = j.edge_behavior()
    assert edge is not None
    w_edge, alpha, c = edge
    assert w_edge == pytest.approx(1.0)
    assert alpha == pytest.approx(0.5)
    # J ~ c (w - w_edge)^alpha just above the edge
    eps = 1e-8
    assert j.evaluate(1.0 + eps) == pytest.approx(c * eps**0.5, rel=1e-3)


# ---------------------------------------------------------------------------
# Thermal weights and detailed balance


def test_bosonic_thermal_requires_one_sided_input():
    with pytest.raises(ValueError):
        bath.BosonicThermal(bath.FlatBand(j0=0.2, cutoff=4.0), beta=1.0)


@given(st.floats(min_value=0.05, max_value=3.0))
def test_bosonic_detailed_balance(omega):
    jt = bath.BosonicThermal(bath.OhmicCutoff(**OHMIC_REFERENCE), beta=1.7)
    lhs = jt.evaluate(-omega)
    rhs = math.exp(-1.7 * omega) * jt.evaluate(omega)
    assert lhs == pytest.approx(rhs, abs=1e-12, rel=1e-10)


@given(st.floats(min_value=0.05, max_value=1.5))
def test_fermionic_detailed_balance(omega):
    jf = bath.FermionicBand(rho_max=0.3, half_bandwidth=2.0, beta=2.5)
    lhs = jf.evaluate(-omega)
    rhs = math.exp(-2.5 * omega) * jf.evaluate(omega)
    assert lhs == pytest.approx(rhs, abs=1e-12, rel=1e-10)


def test_bosonic_thermal_beta_infinity_recovers_input():
    j0 = bath.OhmicCutoff(**OHMIC_REFERENCE)
    jt = bath.BosonicThermal(j0, beta=math.inf)
    for w in (0.3, 1.0, 2.5):
        assert jt.evaluate(w) == pytest.approx(j0.evaluate(w), rel=1e-12)
        assert jt.evaluate(-w) == 0.0


# ---------------------------------------------------------------------------
# Kondo particle-hole line


def test_kondo_gamma_vanishes_at_zero_temperature_zero_frequency():
    assert bath.kondo_rate(0.1, 1.0, 1.0, 0.0, 0.0) == 0.0


def test_kondo_korringa_slope_at_small_temperature():
    slope = math.pi * (0.1 * 1.0) ** 2
    t = 1e-3
    assert bath.kondo_rate(0.1, 1.0, 1.0, 0.0, t) / t == pytest.approx(slope, rel=1e-3)


def test_kondo_rate_increases_with_temperature():
    rates = [bath.kondo_rate(0.1, 1.0, 1.0, 0.0, t) for t in (0.001, 0.01, 0.1)]
    assert rates[0] < rates[1] < rates[2]


def test_kondo_spectral_density_odd_part_at_zero_temperature():
    j = bath.KondoParticleHole(j_k=0.1, rho_f=1.0, half_bandwidth=1.0)
    # at T = 0 only energy-lowering processes carry weight
    assert j.evaluate(0.0) == pytest.approx(0.0, abs=1e-15)
    assert j.evaluate(0.3) > 0.0


# ---------------------------------------------------------------------------
# Tabulated interpolation


def test_tabulated_matches_dense_samples(ohmic):
    w = np.linspace(0.0, 12.0, 4001)
    tab = bath.Tabulated(w, ohmic.evaluate(w))
    for x in (0.31, 0.7, 2.77):
        assert tab.evaluate(x) == pytest.approx(ohmic.evaluate(x), rel=1e-5)
    assert tab.correlation_at(1.0) == pytest.approx(ohmic.correlation_at(1.0), abs=1e-5)


def test_tabulated_rejects_negative_values():
    with pytest.raises(ValueError):
        bath.Tabulated(np.array([0.0, 1.0, 2.0]), np.array([0.1, -0.2, 0.1]))


# ---------------------------------------------------------------------------
# Coupling-weight assembly


def test_gamma_matrix_default_is_single_channel(ohmic):
    gm = bath.gamma_matrix(ohmic, np.array([-TOY_OMEGA0, 0.0, TOY_OMEGA0]))
    assert np.allclose(gm.omegas, [-0.7, 0.0, 0.7])
    assert gm.gamma[2].shape == (1, 1)
    assert gm.gamma[2][0, 0] == pytest.approx(J_AT_OMEGA0, rel=1e-14)
    assert gm.gamma[0][0, 0] == 0.0


def test_gamma_matrix_identity_weights_give_independent_channels(ohmic):
    gm = bath.gamma_matrix(ohmic, np.array([TOY_OMEGA0]), weights=np.eye(3))
    block = gm.gamma[0]
    assert block.shape == (3, 3)
    assert np.allclose(block, J_AT_OMEGA0 * np.eye(3), rtol=1e-14)


def test_gamma_matrix_vector_weights_give_rank_one_psd(ohmic):
    w = np.array([1.0, 0.5 - 0.5j])
    gm = bath.gamma_matrix(ohmic, np.array([TOY_OMEGA0]), weights=w)
    block = gm.gamma[0]
    expect = np.outer(w, w.conj()) * J_AT_OMEGA0
    assert np.allclose(block, expect, rtol=1e-14)
    eigs = np.linalg.eigvalsh(block)
    assert eigs.min() >= -1e-15
