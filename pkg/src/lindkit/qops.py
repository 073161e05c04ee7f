"""Dense complex-matrix foundation: validated operators, density matrices,
Hermitian eigendecompositions and the handful of exact algebraic helpers the
rest of the package is built on.

Everything is a plain ``numpy`` array in a fixed basis; the classes here only
add validation at construction. Natural units hbar = k_B = 1 throughout, so
energies and angular frequencies are interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Default tolerances. Module constants so callers can reference the exact
# values used at validation time; every constructor also accepts an override.
HERMITICITY_RTOL = 1e-12
TRACE_ATOL = 1e-12
POSITIVITY_FLOOR = -1e-10
EIG_RESIDUAL_RTOL = 1e-10


class MatrixValidationError(ValueError):
    """Raised when a matrix fails a construction invariant."""


def as_square_array(m) -> np.ndarray:
    """Coerce to a square complex ndarray with finite entries."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise MatrixValidationError("matrix contains non-finite entries")
    return a


def dag(a: np.ndarray) -> np.ndarray:
    """Hermitian conjugate."""
    return a.conj().T


def max_norm(a: np.ndarray) -> float:
    """Max-abs entry norm; the metric used by all residual checks here."""
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermiticity_defect(a: np.ndarray) -> float:
    """Relative non-Hermiticity ||M - M^dag||_max / ||M||_max (0 for M = 0)."""
    scale = max_norm(a)
    if scale == 0.0:
        return 0.0
    return max_norm(a - dag(a)) / scale


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dag(a))


def hermitian_operator(m, rtol: float = HERMITICITY_RTOL) -> np.ndarray:
    """Validate m as a Hermitian operator and return it unchanged.

    The matrix is not symmetrized: a defect beyond `rtol` is an input error,
    not something to paper over.
    """
    a = as_square_array(m)
    defect = hermiticity_defect(a)
    if defect > rtol:
        raise MatrixValidationError(
            f"matrix is not Hermitian: relative defect {defect:.3e} > {rtol:.1e}"
        )
    return a


def density_matrix(
    m,
    rtol: float = HERMITICITY_RTOL,
    trace_atol: float = TRACE_ATOL,
    eig_floor: float = POSITIVITY_FLOOR,
) -> np.ndarray:
    """Validate m as a density matrix (Hermitian, unit trace, positive).

    The positivity floor applies at construction only; propagated states may
    dip below it and are reported by the trajectory machinery, not rejected.
    """
    a = hermitian_operator(m, rtol=rtol)
    tr = complex(np.trace(a))
    if abs(tr - 1.0) > trace_atol:
        raise MatrixValidationError(f"trace {tr} deviates from 1 beyond {trace_atol:.1e}")
    lo = min_eigenvalue(a)
    if lo < eig_floor:
        raise MatrixValidationError(f"minimum eigenvalue {lo:.3e} below {eig_floor:.1e}")
    return a


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem of a Hermitian operator: H = V diag(energies) V^dag.

    energies ascending, eigenvectors in the columns of V.
    """

    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def spectral_range(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.energies) @ dag(self.vectors)


def eig_hermitian(h, rtol: float = EIG_RESIDUAL_RTOL) -> SpectralDecomposition:
    """Eigendecompose a Hermitian operator with a residual check.

    Returns energies ascending and orthonormal eigenvector columns; raises if
    the reconstruction residual exceeds rtol * ||H||_max.
    """
    a = hermitian_operator(h, rtol=max(rtol, HERMITICITY_RTOL))
    try:
        energies, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise MatrixValidationError(
            f"Hermitian eigensolver failed on a {a.shape[0]}x{a.shape[0]} matrix "
            f"(||H||_max = {max_norm(a):.3e}): {exc}"
        ) from exc
    scale = max_norm(a)
    residual = max_norm((vectors * energies) @ dag(vectors) - a)
    if scale > 0 and residual > rtol * scale:
        raise MatrixValidationError(
            f"eigendecomposition residual {residual:.3e} exceeds {rtol:.1e} * ||H||"
        )
    return SpectralDecomposition(energies=energies, vectors=vectors)


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a Hermitian matrix.

    Near-Hermitian input (e.g. a propagated state with roundoff skew) is
    hermitized first so the result is always real.
    """
    a = as_square_array(m)
    return float(np.linalg.eigvalsh(hermitian_part(a))[0])


def commutator(a, b) -> np.ndarray:
    a = as_square_array(a)
    b = as_square_array(b)
    if a.shape != b.shape:
        raise MatrixValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a = as_square_array(a)
    b = as_square_array(b)
    if a.shape != b.shape:
        raise MatrixValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b + b @ a


def to_eigenbasis(op: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """Rotate an operator from the input basis into the eigenbasis of spec."""
    v = spec.vectors
    return dag(v) @ as_square_array(op) @ v


def from_eigenbasis(op: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """Rotate an operator from the eigenbasis of spec back to the input basis."""
    v = spec.vectors
    return v @ as_square_array(op) @ dag(v)


# Pauli matrices; used throughout the two-level examples and case studies.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|, basis (e, g)
SIGMA_PLUS = SIGMA_MINUS.conj().T
IDENTITY_2 = np.eye(2, dtype=complex)
