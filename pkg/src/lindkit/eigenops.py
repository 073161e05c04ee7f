"""Bohr frequencies and eigenoperator decomposition.

Given the eigensystem of H_S, every coupling operator A splits into
eigenoperators A(Omega) that pick out the matrix elements connecting level
pairs with energy difference Omega. They satisfy, by construction,

    [H_S, A(Omega)] = -Omega A(Omega),
    sum_Omega A(Omega) = A,
    A(Omega)^dag = A(-Omega)   (Hermitian A),

and carry the Heisenberg evolution A(t) = sum_Omega e^{-i Omega t} A(Omega).
All eigenoperators are stored in the eigenbasis of H_S; qops.from_eigenbasis
rotates them back if needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qops

# Fraction of the spectral range used as the default frequency-degeneracy
# tolerance. Exact numerical degeneracies merge; near degeneracies are the
# diagnostics module's business, not this one's.
DEFAULT_DEGENERACY_TOL_FRACTION = 1e-9


class BohrAmbiguityError(ValueError):
    """Degeneracy tolerance too coarse for the spectrum at hand."""


@dataclass(frozen=True)
class BohrFrequencySet:
    """Clustered transition frequencies of H_S.

    frequencies: strictly increasing cluster representatives (means), closed
        under negation.
    level_pairs: for each frequency, the (m, n) index pairs with
        energies[n] - energies[m] in that cluster.
    labels: dense (d, d) array mapping pair (m, n) to its cluster index.
    """

    frequencies: np.ndarray
    level_pairs: tuple
    degeneracy_tol: float
    labels: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.frequencies)

    def index_of(self, omega: float) -> int:
        i = int(np.argmin(np.abs(self.frequencies - omega)))
        if abs(self.frequencies[i] - omega) > max(self.degeneracy_tol, 1e-12):
            raise KeyError(f"{omega} is not a Bohr frequency of this set")
        return i


def bohr_frequencies(
    spec: qops.SpectralDecomposition, degeneracy_tol: float | None = None
) -> BohrFrequencySet:
    """Cluster all pairwise energy differences of a spectral decomposition.

    Differences within degeneracy_tol of each other merge transitively; the
    representative is the cluster mean, symmetrized so that the set is exactly
    closed under negation. Raises BohrAmbiguityError when the tolerance
    exceeds half the smallest inter-cluster gap, since the clustering would
    then depend on the order of merging.
    """
    energies = np.asarray(spec.energies, dtype=float)
    d = len(energies)
    if degeneracy_tol is None:
        degeneracy_tol = DEFAULT_DEGENERACY_TOL_FRACTION * spec.spectral_range
    if degeneracy_tol < 0:
        raise ValueError("degeneracy_tol must be >= 0")

    diffs = energies[None, :] - energies[:, None]  # diffs[m, n] = e_n - e_m
    flat = diffs.ravel()
    order = np.argsort(flat, kind="stable")
    svals = flat[order]

    # Transitive merge: a gap > tol between consecutive sorted values starts a
    # new cluster.
    boundaries = np.nonzero(np.diff(svals) > degeneracy_tol)[0]
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries + 1, [len(svals)]))
    n_clusters = len(starts)

    cluster_of_sorted = np.empty(len(svals), dtype=int)
    reps = np.empty(n_clusters)
    for k, (a, b) in enumerate(zip(starts, ends)):
        cluster_of_sorted[a:b] = k
        reps[k] = np.mean(svals[a:b])

    # The difference multiset is symmetric under negation, so cluster k mirrors
    # cluster n_clusters-1-k. Enforce exact closure (and an exact 0 for the
    # middle cluster) against float summation-order noise.
    mirrored = 0.5 * (reps - reps[::-1])
    reps = mirrored

    # Ambiguity guard: a tolerance above half the smallest inter-cluster gap
    # (nearest members, not representatives) means a different merge order
    # could have produced different clusters.
    if n_clusters > 1:
        gaps = svals[starts[1:]] - svals[ends[:-1] - 1]
        worst = int(np.argmin(gaps))
        if degeneracy_tol > 0.5 * float(gaps[worst]):
            raise BohrAmbiguityError(
                f"degeneracy_tol {degeneracy_tol:.3e} exceeds half the gap "
                f"{gaps[worst]:.3e} between clusters at {reps[worst]:.6g} and "
                f"{reps[worst + 1]:.6g}"
            )

    labels_flat = np.empty(len(svals), dtype=int)
    labels_flat[order] = cluster_of_sorted
    labels = labels_flat.reshape(d, d)

    pairs = [[] for _ in range(n_clusters)]
    for m in range(d):
        for n in range(d):
            pairs[labels[m, n]].append((m, n))

    return BohrFrequencySet(
        frequencies=reps,
        level_pairs=tuple(tuple(p) for p in pairs),
        degeneracy_tol=float(degeneracy_tol),
        labels=labels,
    )


@dataclass(frozen=True)
class EigenoperatorSet:
    """The eigenoperators of one coupling operator, keyed by Bohr frequency.

    Matrices live in the eigenbasis of H_S. Entries whose matrix is
    identically zero are kept: a vanishing channel is information, not an
    omission (e.g. sigma_x has A(0) = 0 for a nondegenerate qubit).
    """

    coupling_index: int
    omegas: np.ndarray
    operators: tuple

    def operator(self, omega: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        if abs(self.omegas[i] - omega) > 1e-12 * max(1.0, float(np.max(np.abs(self.omegas)))):
            raise KeyError(f"no eigenoperator at frequency {omega}")
        return self.operators[i]

    def items(self):
        return zip(self.omegas, self.operators)

    def total(self) -> np.ndarray:
        """sum_Omega A(Omega); equals the original operator (eigenbasis)."""
        return np.sum(self.operators, axis=0)

    def norms(self) -> np.ndarray:
        return np.array([qops.max_norm(op) for op in self.operators])

    def nonzero_omegas(self, rtol: float = 1e-12) -> np.ndarray:
        """Frequencies whose eigenoperator is not numerically zero."""
        norms = self.norms()
        scale = norms.max() if norms.size else 0.0
        if scale == 0.0:
            return self.omegas[:0]
        return self.omegas[norms > rtol * scale]

    def heisenberg(self, t: float) -> np.ndarray:
        """A(t) = sum_Omega e^{-i Omega t} A(Omega), in the eigenbasis."""
        phases = np.exp(-1j * self.omegas * t)
        return np.einsum("k,kij->ij", phases, np.stack(self.operators))


def decompose(
    a,
    spec: qops.SpectralDecomposition,
    bohr: BohrFrequencySet,
    coupling_index: int = 0,
) -> EigenoperatorSet:
    """Split a coupling operator into eigenoperators of H_S.

    `a` is given in the same basis as the Hamiltonian that produced `spec`;
    the result is expressed in the eigenbasis. Each matrix element lands in
    exactly one eigenoperator, so completeness holds to the bit.
    """
    a = qops.as_square_array(a)
    d = spec.dim
    if a.shape[0] != d:
        raise qops.MatrixValidationError(
            f"operator dim {a.shape[0]} does not match spectrum dim {d}"
        )
    a_eig = qops.to_eigenbasis(a, spec)
    ops = []
    for k in range(len(bohr)):
        mask = bohr.labels == k
        ops.append(np.where(mask, a_eig, 0.0))
    return EigenoperatorSet(
        coupling_index=coupling_index,
        omegas=bohr.frequencies.copy(),
        operators=tuple(ops),
    )
