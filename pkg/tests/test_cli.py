import json
import os

import numpy as np
import pytest

from lindkit import cli, master

WEAK_OHMIC = """\
schema = 1

[system]
preset = "two_level"
delta = 0.7

[coupling]
preset = "sigma_x"

[bath]
family = "ohmic"
eta = 5e-5
alpha = 1.0
cutoff = 1.0
"""

KONDO_T0 = """\
schema = 1

[system]
preset = "two_level"
delta = 1e-4

[coupling]
preset = "spin_vector"

[bath]
family = "kondo"
j_k = 0.1
rho_f = 1.0
half_bandwidth = 1.0
temperature = 0.0
"""

SOLVE_BLOCK = """
[run]
solver = "lindblad"
t_max = 20.0
dt = 0.05
initial = "excited"
"""


def write(tmp_path, text, name="model.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def assert_clean_case(run):
    assert run.code == 0
    assert run.data["headlines"], "case study should report headline numbers"
    failed = [h["name"] for h in run.data["headlines"] if not h["passed"]]
    assert not failed, f"failed headlines: {failed}"
    for base in run.data["files"]:
        assert os.path.exists(os.path.join(run.outdir, base)), base


def test_toy_benchmark_run(toy_run):
    assert_clean_case(toy_run)
    names = {h["name"] for h in toy_run.data["headlines"]}
    assert {"onset_quadratic_coefficient", "markov_window_rate", "late_time_slope"} <= names


def test_photonic_case_run(photonic_run):
    assert_clean_case(photonic_run)
    names = {h["name"] for h in photonic_run.data["headlines"]}
    assert {"plateau_ratio_0.7", "lindblad_in_gap_rate_zero",
            "markov_window_rate_ratio_2"} <= names


def test_kondo_case_run(kondo_run):
    assert_clean_case(kondo_run)
    names = {h["name"] for h in kondo_run.data["headlines"]}
    assert {"korringa_slope", "gamma_at_zero_temperature",
            "born_t0_nonexponential_residual_ratio"} <= names


def test_thermalization_case_run(therm_run):
    assert_clean_case(therm_run)
    names = {h["name"] for h in therm_run.data["headlines"]}
    assert {"stale_steady_state_formula", "rebuilt_matches_exact_ground"} <= names


# ---------------------------------------------------------------------------
# determinism: identical inputs must produce identical bytes


def test_spectral_is_deterministic(tmp_path):
    cfg = write(tmp_path, WEAK_OHMIC + "\n[spectral]\npoints = 301\ntemperatures = [0.0, 0.5]\n")
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert cli.main(["spectral", "--config", cfg, "--out", str(d)]) == 0
    for base in ("spectral.csv", "spectral.json"):
        assert (dirs[0] / base).read_bytes() == (dirs[1] / base).read_bytes()


def test_thermalization_is_deterministic(tmp_path, therm_run):
    second = tmp_path / "again"
    assert cli.main(["case", "thermalization", "--out", str(second)]) == 0
    repeat = (second / "thermalization.json").read_bytes()
    original = open(os.path.join(therm_run.outdir, "thermalization.json"), "rb").read()
    assert repeat == original


# ---------------------------------------------------------------------------
# solve: exported trajectory round-trips through the CSV reader


def test_solve_trajectory_round_trip(tmp_path):
    cfg = write(tmp_path, WEAK_OHMIC.replace("eta = 5e-5", "eta = 0.05") + SOLVE_BLOCK)
    out = tmp_path / "run"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    traj = master.read_trajectory_csv(out / "trajectory.csv")
    assert traj.states.shape[1:] == (2, 2)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(20.0)
    # excited-state initial condition, trace preserved along the way
    assert traj.states[0][0, 0] == pytest.approx(1.0, abs=1e-12)
    traces = np.einsum("tii->t", traj.states)
    assert np.max(np.abs(traces - 1.0)) < 1e-9
    meta = json.loads((out / "solve.json").read_text())
    assert meta["meta"]["solver"] == "lindblad"


def test_solve_override_changes_horizon(tmp_path):
    cfg = write(tmp_path, WEAK_OHMIC.replace("eta = 5e-5", "eta = 0.05") + SOLVE_BLOCK)
    out = tmp_path / "short"
    code = cli.main(["solve", "--config", cfg, "--out", str(out),
                     "--override", "run.t_max=5"])
    assert code == 0
    traj = master.read_trajectory_csv(out / "trajectory.csv")
    assert traj.times[-1] == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# diagnose: exit code encodes the overall verdict


def test_diagnose_weak_coupling_passes(tmp_path):
    cfg = write(tmp_path, WEAK_OHMIC)
    out = tmp_path / "diag"
    assert cli.main(["diagnose", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdicts"]["overall"] == "pass"
    assert (out / "report.txt").exists()


def test_diagnose_kondo_zero_temperature_fails(tmp_path):
    cfg = write(tmp_path, KONDO_T0)
    out = tmp_path / "diag"
    assert cli.main(["diagnose", "--config", cfg, "--out", str(out)]) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["verdicts"]["markov"]["status"] == "fail"


def test_diagnose_override_flips_verdict(tmp_path):
    cfg = write(tmp_path, WEAK_OHMIC)
    out = tmp_path / "diag"
    code = cli.main(["diagnose", "--config", cfg, "--out", str(out),
                     "--override", "bath.eta=0.5"])
    assert code == 2


# ---------------------------------------------------------------------------
# error handling


def test_config_error_reports_location_and_exits_3(tmp_path, capsys):
    path = tmp_path / "broken.toml"
    path.write_text("schema = 1\n\n[bath]\nfamly = 1.0\n", encoding="utf-8")
    assert cli.main(["diagnose", "--config", str(path), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "broken.toml:4" in err


def test_unknown_bath_family_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, WEAK_OHMIC.replace('family = "ohmic"', 'family = "mystery"'))
    assert cli.main(["diagnose", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "family" in capsys.readouterr().err


def test_solve_requires_config(tmp_path, capsys):
    assert cli.main(["solve", "--out", str(tmp_path)]) == 3
    assert "--config" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# output directory resolution


def test_outdir_env_var(tmp_path, monkeypatch):
    cfg = write(tmp_path, WEAK_OHMIC + "\n[spectral]\npoints = 51\n")
    target = tmp_path / "from_env"
    monkeypatch.setenv("LINDKIT_OUTDIR", str(target))
    assert cli.main(["spectral", "--config", cfg]) == 0
    assert (target / "spectral.csv").exists()
    assert (target / "spectral.json").exists()
