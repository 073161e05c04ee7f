"""Shared fixtures and the closed-form Gaussian line used as an oracle.

The Gaussian line J(w) = a exp(-w^2 / 2 s^2) has every quantity the
quadrature machinery estimates available in closed form:

    G(t)  = a s / sqrt(2 pi) * exp(-s^2 t^2 / 2)
    R(w)  = a / sqrt(pi) * dawsn(w / (sqrt(2) s))
    R'(w) = a / sqrt(2 pi) / s * (1 - 2 x dawsn(x)),  x = w / (sqrt(2) s)

so bath-side integrals can be checked against an independent route.
"""

import dataclasses
import json
import math
import time

import numpy as np
import pytest
from hypothesis import settings
from scipy.special import dawsn

from lindkit import bath, eigenops, qops

settings.register_profile("suite", max_examples=25, deadline=None)
settings.load_profile("suite")


class GaussianLine(bath.SpectralDensity):
    family = "gaussian-test-line"

    def __init__(self, amplitude: float = 0.3, width: float = 1.2):
        self.amplitude = float(amplitude)
        self.width = float(width)

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        out = self.amplitude * np.exp(-(w**2) / (2.0 * self.width**2))
        return out if out.ndim else float(out)

    def support(self):
        # J < 1e-12 * max J outside |w| > s sqrt(2 ln 1e12)
        half = self.width * math.sqrt(2.0 * math.log(1e12))
        return (-half, half)

    def params(self):
        return {"amplitude": self.amplitude, "width": self.width}

    # closed forms, used as oracles by the tests
    def correlation_exact(self, t):
        t = np.asarray(t, dtype=float)
        a, s = self.amplitude, self.width
        return a * s / math.sqrt(2.0 * math.pi) * np.exp(-(s * t) ** 2 / 2.0)

    def hilbert_exact(self, w: float) -> float:
        a, s = self.amplitude, self.width
        return a / math.sqrt(math.pi) * float(dawsn(w / (math.sqrt(2.0) * s)))

    def hilbert_derivative_exact(self, w: float) -> float:
        a, s = self.amplitude, self.width
        x = w / (math.sqrt(2.0) * s)
        return a / math.sqrt(2.0 * math.pi) / s * (1.0 - 2.0 * x * float(dawsn(x)))


@pytest.fixture
def gaussian_line() -> GaussianLine:
    return GaussianLine()


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (m + m.conj().T)


def random_complex(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_density(rng: np.random.Generator, d: int) -> np.ndarray:
    m = random_complex(rng, d)
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def two_level(delta: float = 0.7):
    """H = delta/2 sigma_z with a sigma_x coupling, fully decomposed."""
    h = np.diag([0.5 * delta, -0.5 * delta]).astype(complex)
    a = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    spec = qops.eig_hermitian(h)
    bohr = eigenops.bohr_frequencies(spec)
    sets = [eigenops.decompose(a, spec, bohr)]
    return h, a, spec, bohr, sets


OHMIC_REFERENCE = dict(eta=0.05, alpha=1.0, cutoff=1.0)
TOY_OMEGA0 = 0.7

# J(0.7) = 2 pi eta w exp(-w) at the reference parameters
J_AT_OMEGA0 = 0.10920481195902233


# ---------------------------------------------------------------------------
# shared command-line runs: each case study executes once per session and its
# result file is reused by both the CLI tests and the acceptance gate


@dataclasses.dataclass(frozen=True)
class CliRun:
    code: int
    outdir: str
    elapsed: float
    data: dict

    def headline(self, name: str) -> dict:
        for h in self.data["headlines"]:
            if h["name"] == name:
                return h
        raise KeyError(name)


def invoke_cli(tmp_path_factory, label: str, argv: list) -> CliRun:
    from lindkit import cli

    outdir = tmp_path_factory.mktemp(label)
    start = time.perf_counter()
    code = cli.main(argv + ["--out", str(outdir)])
    elapsed = time.perf_counter() - start
    name = argv[1] if argv[0] == "case" else argv[0]
    result_path = outdir / f"{name}.json"
    data = json.loads(result_path.read_text()) if result_path.exists() else {}
    return CliRun(code=code, outdir=str(outdir), elapsed=elapsed, data=data)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory) -> CliRun:
    return invoke_cli(tmp_path_factory, "toy", ["toy"])


@pytest.fixture(scope="session")
def photonic_run(tmp_path_factory) -> CliRun:
    return invoke_cli(tmp_path_factory, "photonic", ["case", "photonic"])


@pytest.fixture(scope="session")
def kondo_run(tmp_path_factory) -> CliRun:
    return invoke_cli(tmp_path_factory, "kondo", ["case", "kondo"])


@pytest.fixture(scope="session")
def therm_run(tmp_path_factory) -> CliRun:
    return invoke_cli(tmp_path_factory, "thermalization", ["case", "thermalization"])
