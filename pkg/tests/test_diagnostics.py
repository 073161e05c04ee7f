"""Timescale extraction and the three validity verdicts.

Closed-form anchors for the Ohmic reference line (eta = 0.05, unit cutoff):
|G(t)| = eta / (1 + t^2), so the 1% memory-threshold time is sqrt(99) and
the dimensionless coupling is sqrt(eta) * tau_b. The flat band's first
correlation zero sits exactly at pi / cutoff.
"""

import math

import numpy as np
import pytest

from lindkit import bath, diagnostics, eigenops, qops

from conftest import GaussianLine, OHMIC_REFERENCE, TOY_OMEGA0, two_level


@pytest.fixture(scope="module")
def ohmic():
    return bath.OhmicCutoff(**OHMIC_REFERENCE)


def report_for(delta: float, j, thresholds=None):
    h, _, _, _, sets = two_level(delta)
    return diagnostics.timescales(h, sets, j, thresholds)


# ---------------------------------------------------------------------------
# correlation profile


def test_correlation_profile_ohmic_threshold_time(ohmic):
    g0, tau, found = diagnostics.correlation_profile(ohmic, floor=0.01)
    assert found
    assert g0 == pytest.approx(0.05, abs=1e-10)
    assert tau == pytest.approx(math.sqrt(99.0), abs=0.01)


def test_correlation_profile_gaussian_closed_form(gaussian_line):
    g0, tau, found = diagnostics.correlation_profile(gaussian_line, floor=0.01)
    assert found
    exact_g0 = gaussian_line.amplitude * gaussian_line.width / math.sqrt(2 * math.pi)
    assert g0 == pytest.approx(exact_g0, rel=1e-8)
    exact_tau = math.sqrt(2.0 * math.log(100.0)) / gaussian_line.width
    assert tau == pytest.approx(exact_tau, abs=0.01)


def test_flat_band_threshold_is_first_zero():
    fb = bath.FlatBand(j0=0.2, cutoff=4.0)
    _, tau, found = diagnostics.correlation_profile(fb, floor=0.01)
    assert found
    assert tau == pytest.approx(math.pi / 4.0, abs=1e-6)


def test_tau_b_integral_converges_for_gaussian(gaussian_line):
    s = gaussian_line.width
    tau, divergent = diagnostics.tau_b_integral(gaussian_line, tau_ref=1.0)
    assert not divergent
    # first moment of exp(-s^2 t^2 / 2): (1/s^2) / sqrt(pi / 2 s^2)
    exact = math.sqrt(2.0 / math.pi) / s
    assert tau == pytest.approx(exact, rel=1e-6)


def test_tau_b_integral_diverges_for_ohmic(ohmic):
    _, divergent = diagnostics.tau_b_integral(ohmic, tau_ref=1.0)
    assert divergent


# ---------------------------------------------------------------------------
# the assembled report


def test_ohmic_reference_report(ohmic):
    rep = report_for(TOY_OMEGA0, ohmic)
    assert rep.tau_b_divergent
    assert rep.correlation_scale == pytest.approx(0.05, abs=1e-10)
    assert rep.tau_b_threshold == pytest.approx(math.sqrt(99.0), abs=0.01)
    assert rep.coupling_parameter == pytest.approx(
        math.sqrt(0.05) * rep.tau_b_threshold, rel=1e-12
    )
    assert rep.tau_h == pytest.approx(1.0 / TOY_OMEGA0, rel=1e-12)
    assert rep.t_nm == pytest.approx(239.80259332183564, rel=1e-10)
    # one pair of transitions at +-0.7, gap 1.4, relaxation 2/J
    sec = rep.secularity
    off = sec[sec > 0]
    assert off.min() == pytest.approx(1.4 * 2.0 / 0.10920481195902233, rel=1e-10)


def test_ohmic_reference_verdicts(ohmic):
    rep = report_for(TOY_OMEGA0, ohmic)
    v = diagnostics.verdict(rep)
    assert v.statuses == ("fail", "pass", "pass")
    assert v.worst == "fail"


def test_weak_coupling_passes_everything():
    weak = bath.OhmicCutoff(eta=5e-5, alpha=1.0, cutoff=1.0)
    rep = report_for(TOY_OMEGA0, weak)
    v = diagnostics.verdict(rep)
    assert v.statuses == ("pass", "pass", "pass")
    assert rep.coupling_parameter == pytest.approx(
        math.sqrt(5e-5) * rep.tau_b_threshold, rel=1e-12
    )


def test_verdict_never_improves_with_coupling():
    order = {"pass": 0, "marginal": 1, "fail": 2}
    worst_so_far = 0
    for eta in (5e-5, 5e-3, 5e-2, 0.5):
        rep = report_for(TOY_OMEGA0, bath.OhmicCutoff(eta=eta, alpha=1.0, cutoff=1.0))
        rank = order[diagnostics.verdict(rep).worst]
        assert rank >= worst_so_far
        worst_so_far = rank


def test_zero_temperature_kondo_fails_markov():
    j = bath.KondoParticleHole(j_k=0.1, rho_f=1.0, half_bandwidth=1.0)
    rep = report_for(1e-4, j)
    v = diagnostics.verdict(rep)
    assert v.markov.status == "fail"
    assert rep.tau_b_divergent


def test_near_edge_fails_markov_through_window_variation():
    j = bath.PhotonicBandEdge(eta=0.05, omega_edge=1.0, cutoff=2.0)
    rep = report_for(1.02, j)
    v = diagnostics.verdict(rep)
    assert v.markov.status == "fail"
    # the memory-ratio criterion alone would pass; the window variation
    # (the band edge inside the probing window) trips it
    tr = next(t for t in rep.transitions if t.omega > 0)
    th = rep.thresholds
    memory_time = min(rep.tau_b_threshold, rep.tau_h)
    assert memory_time / tr.tau_r < th.markov_ratio_pass
    assert tr.variation > th.markov_variation_pass


def test_secularity_scales_inversely_with_level_spacing():
    # a flat band keeps tau_r fixed, so halving the minimum gap halves the
    # secularity margin
    fb = bath.FlatBand(j0=0.2, cutoff=7.0)

    def sec_min(n_sites):
        gaps = 2.0 * math.pi * np.arange(1, n_sites + 1) / n_sites
        h = np.diag(np.concatenate(([0.0], gaps))).astype(complex)
        a = np.zeros((n_sites + 1, n_sites + 1), dtype=complex)
        a[0, 1:] = 1.0 / math.sqrt(n_sites)
        a[1:, 0] = 1.0 / math.sqrt(n_sites)
        spec = qops.eig_hermitian(h)
        bohr = eigenops.bohr_frequencies(spec)
        sets = [eigenops.decompose(a, spec, bohr)]
        rep = diagnostics.timescales(h, sets, fb)
        sec = rep.secularity
        return float(sec[sec > 0].min())

    s16, s32 = sec_min(16), sec_min(32)
    assert s16 == pytest.approx((2 * math.pi / 16) * (2 / 0.2), rel=1e-9)
    assert s32 == pytest.approx(0.5 * s16, rel=1e-9)


# ---------------------------------------------------------------------------
# rendering


def test_report_json_shape(ohmic):
    rep = report_for(TOY_OMEGA0, ohmic)
    v = diagnostics.verdict(rep)
    import json

    doc = json.loads(diagnostics.report_json(rep, v))
    assert set(doc) == {"timescales", "thresholds", "verdicts"}
    assert doc["verdicts"]["overall"] == "fail"
    assert doc["verdicts"]["born"]["status"] == "fail"
    assert "rule" in doc["verdicts"]["markov"]


def test_render_table_mentions_all_verdicts(ohmic):
    rep = report_for(TOY_OMEGA0, ohmic)
    v = diagnostics.verdict(rep)
    table = diagnostics.render_table(rep, v)
    for word in ("born", "markov", "rwa"):
        assert word in table.lower()


def test_custom_thresholds_change_the_call(ohmic):
    lax = diagnostics.DiagnosticThresholds(born_pass=10.0, born_marginal=20.0)
    rep = report_for(TOY_OMEGA0, ohmic, lax)
    v = diagnostics.verdict(rep)
    assert v.born.status == "pass"
