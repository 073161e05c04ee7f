"""Redfield and Lindblad generators, their spectra, and propagation.

Vectorization is fixed to column stacking:

    vec(A rho B) = (B^T kron A) vec(rho),

so left multiplication is I kron A, right multiplication is B^T kron I. The
generators act on vec(rho) as dense d^2 x d^2 matrices; spectra come in the
bi-orthogonal form  rho(t) = sum_mu e^{lambda_mu t} <l_mu, rho(0)> r_mu.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import linalg as _sp_linalg

from . import bath, eigenops, qops

JUMP_PRUNE_FRACTION = 1e-12
COMMUTATION_RTOL = 1e-9
BIORTHOGONALITY_TOL = 1e-8
EIGVEC_CONDITION_LIMIT = 1e8
NULL_SPACE_TOL = 1e-8


class GeneratorError(ValueError):
    """Raised for assembly or spectral failures."""


# ---- vectorization --------------------------------------------------------


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(rho, dtype=complex).T.reshape(-1)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if d is None:
        d = int(round(math.sqrt(v.size)))
    return v.reshape(d, d).T


def left_mult(a: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> A rho."""
    a = np.asarray(a, dtype=complex)
    return np.kron(np.eye(a.shape[0]), a)


def right_mult(b: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> rho B."""
    b = np.asarray(b, dtype=complex)
    return np.kron(b.T, np.eye(b.shape[0]))


def sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> A rho B."""
    return np.kron(np.asarray(b, dtype=complex).T, np.asarray(a, dtype=complex))


# ---- models and generators -------------------------------------------------


@dataclass(frozen=True)
class Jump:
    operator: np.ndarray
    rate: float
    omega: float


@dataclass(frozen=True)
class LindbladModel:
    """H_S, Lamb shift and jump list, all in the eigenbasis of H_S."""

    h_s: np.ndarray
    h_ls: np.ndarray
    jumps: tuple

    def __post_init__(self):
        hs = qops.hermitian_operator(self.h_s, rtol=1e-9)
        hls = qops.hermitian_operator(self.h_ls, rtol=1e-9)
        scale = qops.max_norm(hs) * qops.max_norm(hls)
        if scale > 0:
            res = qops.max_norm(qops.commutator(hs, hls))
            if res > COMMUTATION_RTOL * scale:
                raise GeneratorError(
                    f"[H_S, H_LS] residual {res:.3e} exceeds {COMMUTATION_RTOL:.0e} "
                    "* ||H_S|| ||H_LS||; inconsistent frequency clustering"
                )
        for jump in self.jumps:
            if jump.rate < 0:
                raise GeneratorError(f"negative jump rate {jump.rate}")

    @property
    def dim(self) -> int:
        return self.h_s.shape[0]

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.h_s + self.h_ls


@dataclass(frozen=True)
class Generator:
    """A d^2 x d^2 matrix acting on column-stacked density matrices."""

    dim: int
    kind: str  # "lindblad" | "redfield"
    matrix: np.ndarray

    def to_json_dict(self) -> dict:
        # row-major flattening of the d^2 x d^2 matrix, split into parts
        return {
            "dim": self.dim,
            "kind": self.kind,
            "order": "row-major, column-stacked vectorization",
            "real": self.matrix.real.reshape(-1).tolist(),
            "imag": self.matrix.imag.reshape(-1).tolist(),
        }


def export_generator_json(gen: Generator, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(gen.to_json_dict(), fh)
        fh.write("\n")


def hamiltonian_generator(h: np.ndarray) -> np.ndarray:
    """-i [H, .] as a superoperator."""
    h = np.asarray(h, dtype=complex)
    return -1j * (left_mult(h) - right_mult(h))


def dissipator(l_op: np.ndarray) -> np.ndarray:
    """L . L^dag - (1/2){L^dag L, .} as a superoperator, unit rate."""
    l_op = np.asarray(l_op, dtype=complex)
    ldl = qops.dag(l_op) @ l_op
    return sandwich(l_op, qops.dag(l_op)) - 0.5 * (left_mult(ldl) + right_mult(ldl))


def assemble_lamb_shift(
    eigsets: list[eigenops.EigenoperatorSet], gm: bath.GammaMatrix
) -> np.ndarray:
    """H_LS = sum_Omega sum_ab S_ab(Omega) A_a^dag(Omega) A_b(Omega)."""
    n = len(eigsets)
    if gm.n_couplings != n:
        raise GeneratorError(
            f"{n} coupling operators but gamma matrix has {gm.n_couplings} labels"
        )
    d = eigsets[0].operators[0].shape[0]
    h_ls = np.zeros((d, d), dtype=complex)
    for k, om in enumerate(gm.omegas):
        s_mat = gm.lamb[k]
        if not np.all(np.isfinite(s_mat.real)):
            raise GeneratorError(
                f"Lamb coefficient at Omega = {om:.6g} is not finite "
                "(J discontinuous there); the Lamb shift is undefined"
            )
        for a in range(n):
            op_a = eigsets[a].operator(om)
            for b in range(n):
                if s_mat[a, b] == 0:
                    continue
                h_ls += s_mat[a, b] * qops.dag(op_a) @ eigsets[b].operator(om)
    return h_ls


def assemble_lindblad(
    h_s: np.ndarray,
    eigsets: list[eigenops.EigenoperatorSet],
    gm: bath.GammaMatrix,
    include_lamb_shift: bool = True,
) -> LindbladModel:
    """Diagonalize gamma(Omega) per frequency and emit one jump per nonzero
    eigenvalue; h_s is expressed in its own eigenbasis (as the eigenoperators
    are).
    """
    n = len(eigsets)
    jumps = []
    for k, om in enumerate(gm.omegas):
        g_mat = 0.5 * (gm.gamma[k] + gm.gamma[k].conj().T)
        rates, vectors = np.linalg.eigh(g_mat)
        for a in range(n):
            if rates[a] <= 0:
                continue
            # gamma_ab = sum_a rates_a u_{a alpha} u*_{a beta} with
            # u_{a alpha} = vectors[alpha, a]; the jump combines the
            # eigenoperators with conj(u)
            l_op = np.zeros_like(eigsets[0].operator(om))
            for alpha in range(n):
                l_op = l_op + np.conj(vectors[alpha, a]) * eigsets[alpha].operator(om)
            if qops.max_norm(l_op) == 0.0:
                continue
            jumps.append(Jump(operator=l_op, rate=float(rates[a]), omega=float(om)))
    if jumps:
        max_rate = max(j.rate for j in jumps)
        jumps = [j for j in jumps if j.rate > JUMP_PRUNE_FRACTION * max_rate]

    d = np.asarray(h_s).shape[0]
    h_ls = assemble_lamb_shift(eigsets, gm) if include_lamb_shift else np.zeros((d, d))
    return LindbladModel(h_s=np.asarray(h_s, dtype=complex), h_ls=h_ls, jumps=tuple(jumps))


def lindblad_generator(model: LindbladModel) -> Generator:
    mat = hamiltonian_generator(model.hamiltonian)
    for jump in model.jumps:
        mat = mat + jump.rate * dissipator(jump.operator)
    return Generator(dim=model.dim, kind="lindblad", matrix=mat)


def assemble_redfield(
    h_s: np.ndarray,
    eigsets: list[eigenops.EigenoperatorSet],
    gm: bath.GammaMatrix,
) -> Generator:
    """Constant-coefficient Redfield generator, full double frequency sum:

    sum_{W,W'} sum_{ab} Gamma_ba(W) [A_a(W) rho A_b^dag(W') - A_b^dag(W') A_a(W) rho]
                      + Gamma_ba(W)* [A_a(W') rho A_b^dag(W) - rho A_b^dag(W) A_a(W')]

    plus the coherent -i[H_S, .]. No secular approximation, no splitting of
    the cross-frequency Lamb terms; kept as one matrix.
    """
    n = len(eigsets)
    if gm.n_couplings != n:
        raise GeneratorError(
            f"{n} coupling operators but gamma matrix has {gm.n_couplings} labels"
        )
    d = np.asarray(h_s).shape[0]
    mat = hamiltonian_generator(np.asarray(h_s, dtype=complex))
    omegas = gm.omegas
    for k, om in enumerate(omegas):
        gamma_half = 0.5 * gm.gamma[k] + 1j * gm.lamb[k]  # Gamma_ab(Omega)
        if not np.all(np.isfinite(gamma_half.real)) or not np.all(
            np.isfinite(gamma_half.imag)
        ):
            raise GeneratorError(
                f"Gamma(Omega = {om:.6g}) is not finite; cannot assemble Redfield"
            )
        for kp, omp in enumerate(omegas):
            for a in range(n):
                for b in range(n):
                    coeff = gamma_half[b, a]
                    if coeff == 0:
                        continue
                    a_om = eigsets[a].operator(om)
                    b_omp_d = qops.dag(eigsets[b].operator(omp))
                    mat = mat + coeff * (
                        sandwich(a_om, b_omp_d) - left_mult(b_omp_d @ a_om)
                    )
                    a_omp = eigsets[a].operator(omp)
                    b_om_d = qops.dag(eigsets[b].operator(om))
                    mat = mat + np.conj(coeff) * (
                        sandwich(a_omp, b_om_d) - right_mult(b_om_d @ a_omp)
                    )
    return Generator(dim=d, kind="redfield", matrix=mat)


# ---- spectra and propagation -----------------------------------------------


@dataclass(frozen=True)
class GeneratorSpectrum:
    eigenvalues: np.ndarray
    right: np.ndarray  # columns r_mu
    left: np.ndarray  # columns l_mu with <l_mu, r_nu> = delta
    residual: float


def spectrum(gen: Generator) -> GeneratorSpectrum:
    """Bi-orthogonal eigensystem of the generator.

    Left vectors are obtained from the inverse of the right eigenvector
    matrix, which enforces bi-orthonormality exactly; a right-eigenvector
    condition number above 1e8 is treated as near-defective and rejected.
    """
    mat = gen.matrix
    eigenvalues, right = np.linalg.eig(mat)
    cond = np.linalg.cond(right)
    if not np.isfinite(cond) or cond > EIGVEC_CONDITION_LIMIT:
        raise GeneratorError(
            f"near-defective generator: eigenvector condition number {cond:.3e} "
            "(Jordan blocks are out of scope)"
        )
    left = np.linalg.inv(right).conj().T
    residual = float(np.max(np.abs(left.conj().T @ right - np.eye(mat.shape[0]))))
    if residual > BIORTHOGONALITY_TOL:
        raise GeneratorError(f"bi-orthogonality residual {residual:.3e}")
    if gen.kind == "lindblad":
        scale = max(1.0, float(np.max(np.abs(mat))))
        tol = 1e-10 * scale
        max_re = float(np.max(eigenvalues.real))
        if max_re > tol:
            raise GeneratorError(
                f"Lindblad spectrum has Re lambda = {max_re:.3e} > 0"
            )
        if not np.any(np.abs(eigenvalues) <= tol):
            raise GeneratorError("Lindblad spectrum has no stationary eigenvalue")
    return GeneratorSpectrum(
        eigenvalues=eigenvalues, right=right, left=left, residual=residual
    )


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, d, d), raw (not hermitized)
    positivity_min: np.ndarray

    @property
    def traces(self) -> np.ndarray:
        return np.einsum("tii->t", self.states)

    def expectation(self, op: np.ndarray) -> np.ndarray:
        return np.einsum("tij,ji->t", self.states, np.asarray(op, dtype=complex))


def _finalize_trajectory(times, states) -> Trajectory:
    states = np.asarray(states)
    pos = np.array([qops.min_eigenvalue(s) for s in states])
    return Trajectory(times=np.asarray(times, dtype=float), states=states, positivity_min=pos)


def propagate(
    gen: Generator,
    rho0: np.ndarray,
    times,
    method: str = "auto",
    spec: GeneratorSpectrum | None = None,
) -> Trajectory:
    """Evolve rho0 over the given times.

    method "spectral" uses the bi-orthogonal expansion, "stepper" adaptive
    RK integration, "auto" prefers spectral and falls back on stepper when
    the generator is near-defective.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be ascending and nonnegative")
    rho0 = np.asarray(rho0, dtype=complex)
    v0 = vec(rho0)

    if method not in ("auto", "spectral", "stepper"):
        raise ValueError(f"unknown method {method!r}")

    if method in ("auto", "spectral"):
        try:
            sp = spec if spec is not None else spectrum(gen)
        except GeneratorError:
            if method == "spectral":
                raise
            sp = None
        if sp is not None:
            coeffs = np.linalg.solve(sp.right, v0)
            phases = np.exp(np.outer(times, sp.eigenvalues))  # (n_t, d^2)
            vs = (phases * coeffs) @ sp.right.T
            states = np.array([unvec(v, gen.dim) for v in vs])
            return _finalize_trajectory(times, states)

    sol = _sp_integrate.solve_ivp(
        lambda t, y: gen.matrix @ y,
        (float(times[0]), float(times[-1]) if times[-1] > times[0] else float(times[0]) + 1e-12),
        v0,
        t_eval=times,
        method="DOP853",
        rtol=1e-11,
        atol=1e-13,
    )
    if not sol.success:
        raise GeneratorError(f"stepper failed: {sol.message}")
    states = np.array([unvec(sol.y[:, k], gen.dim) for k in range(sol.y.shape[1])])
    return _finalize_trajectory(times, states)


@dataclass(frozen=True)
class SteadyState:
    rho: np.ndarray
    basis: tuple
    degenerate: bool
    warning: str | None = None


def steady_state(gen: Generator, tol: float = NULL_SPACE_TOL) -> SteadyState:
    """Null right-vector of the generator, reshaped and trace-normalized.

    A null space of dimension > 1 (strong symmetry) is flagged and the full
    basis returned; Redfield steady states carry a warning since nothing
    guarantees their positivity.
    """
    eigenvalues, right = np.linalg.eig(gen.matrix)
    scale = max(1.0, float(np.max(np.abs(gen.matrix))))
    idx = np.where(np.abs(eigenvalues) <= tol * scale)[0]
    if len(idx) == 0:
        raise GeneratorError(
            f"no eigenvalue within {tol:.1e} of zero "
            f"(closest: {np.min(np.abs(eigenvalues)):.3e})"
        )
    basis = []
    best = 0
    best_tr = -1.0
    for pos, i in enumerate(idx):
        rho = unvec(right[:, i], gen.dim)
        rho = qops.hermitian_part(rho)
        tr = float(np.trace(rho).real)
        if abs(tr) > best_tr:
            best_tr, best = abs(tr), pos
        if abs(tr) < 1e-12:
            # traceless null direction (possible under strong symmetry);
            # keep unnormalized
            basis.append(rho)
            continue
        basis.append(rho / tr)
    # representative: the member with the largest trace before normalization
    rho = basis[best]
    warning = "redfield steady state: positivity not guaranteed" if gen.kind == "redfield" else None
    return SteadyState(
        rho=rho,
        basis=tuple(basis),
        degenerate=len(idx) > 1,
        warning=warning,
    )


def gibbs_state(h: np.ndarray, beta: float) -> np.ndarray:
    """exp(-beta H)/Z, computed in the eigenbasis for stability."""
    dec = qops.eig_hermitian(h)
    w = np.exp(-beta * (dec.energies - dec.energies.min()))
    w /= w.sum()
    return (dec.vectors * w) @ qops.dag(dec.vectors)


def choi_matrix(gen: Generator, t: float) -> np.ndarray:
    """Choi matrix of the propagator exp(G t)."""
    d = gen.dim
    prop = _sp_linalg.expm(gen.matrix * t)
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e_ij = np.zeros((d, d), dtype=complex)
            e_ij[i, j] = 1.0
            out = unvec(prop @ vec(e_ij), d)
            choi += np.kron(e_ij, out)
    return choi


def choi_psd_check(gen: Generator, t: float) -> float:
    """Minimum eigenvalue of the Choi matrix of exp(G t)."""
    if gen.dim > 8:
        raise GeneratorError("Choi check limited to d <= 8")
    return qops.min_eigenvalue(choi_matrix(gen, t))


# ---- RWA probe --------------------------------------------------------------


@dataclass(frozen=True)
class RwaProbeResult:
    times: np.ndarray
    deviation: np.ndarray
    eigenvalue_shift: complex
    perturbative_shift: complex
    crossover_time: float


def rwa_deviation_probe(r11: complex, r12: complex, g: complex, t_grid) -> RwaProbeResult:
    """Two-block probe d/dt (x1, x2) = [[R11, g], [g*, R12]] (x1, x2).

    Compares the exact evolution against the g = 0 (secular) one from the
    initial condition (1, 1)/sqrt(2); reports the exact eigenvalue shift
    lambda_+ - R11, its perturbative estimate |g|^2/(R11 - R12), and the
    first time the relative deviation reaches 1/2.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    mat = np.array([[r11, g], [np.conj(g), r12]], dtype=complex)
    delta = r11 - r12
    mean = 0.5 * (r11 + r12)
    rad = np.sqrt(0.25 * delta**2 + abs(g) ** 2 + 0j)
    lam_plus = mean + rad if (rad.real * delta.real + rad.imag * delta.imag) >= 0 else mean - rad
    shift = lam_plus - r11
    pert = (abs(g) ** 2 / delta) if delta != 0 else complex(math.inf)

    x0 = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
    deviation = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        exact = _sp_linalg.expm(mat * t) @ x0
        secular = np.array([np.exp(r11 * t), np.exp(r12 * t)]) * x0
        norm = np.linalg.norm(exact)
        deviation[k] = np.linalg.norm(exact - secular) / norm if norm > 0 else np.inf

    crossover = math.inf
    above = np.where(deviation >= 0.5)[0]
    if len(above) > 0:
        i = int(above[0])
        if i == 0:
            crossover = float(t_grid[0])
        else:
            t0, t1 = t_grid[i - 1], t_grid[i]
            d0, d1 = deviation[i - 1], deviation[i]
            crossover = float(t0 + (0.5 - d0) * (t1 - t0) / (d1 - d0))
    return RwaProbeResult(
        times=t_grid,
        deviation=deviation,
        eigenvalue_shift=shift,
        perturbative_shift=pert,
        crossover_time=crossover,
    )


# ---- time-dependent Redfield (opt-in) ---------------------------------------


def propagate_redfield_time_dependent(
    h_s: np.ndarray,
    eigset: eigenops.EigenoperatorSet,
    j: bath.SpectralDensity,
    rho0: np.ndarray,
    times,
    n_kernel: int = 2001,
) -> Trajectory:
    """Redfield with time-dependent coefficients Gamma(Omega, t), single
    coupling operator.

    Gamma(Omega, t) = Int_0^t G(s) e^{i Omega s} ds is tabulated once by
    cumulative quadrature on a fine grid and interpolated inside the stepper;
    the generator is rebuilt at every evaluation.
    """
    times = np.asarray(times, dtype=float)
    omegas = eigset.omegas
    t_end = float(times[-1])
    s_grid = np.linspace(0.0, t_end, n_kernel)
    g_vals = np.array([j.correlation_at(float(s)) for s in s_grid])
    gamma_tab = {}
    for om in omegas:
        integrand = g_vals * np.exp(1j * om * s_grid)
        cum = _sp_integrate.cumulative_trapezoid(integrand, s_grid, initial=0.0)
        gamma_tab[float(om)] = cum

    d = np.asarray(h_s).shape[0]
    h_part = hamiltonian_generator(np.asarray(h_s, dtype=complex))

    def generator_at(t: float) -> np.ndarray:
        mat = h_part.copy()
        for om in omegas:
            gamma_t = np.interp(t, s_grid, gamma_tab[float(om)].real) + 1j * np.interp(
                t, s_grid, gamma_tab[float(om)].imag
            )
            a_om = eigset.operator(om)
            for omp in omegas:
                a_omp_d = qops.dag(eigset.operator(omp))
                mat += gamma_t * (sandwich(a_om, a_omp_d) - left_mult(a_omp_d @ a_om))
                a_omp = eigset.operator(omp)
                a_om_d = qops.dag(eigset.operator(om))
                mat += np.conj(gamma_t) * (
                    sandwich(a_omp, a_om_d) - right_mult(a_om_d @ a_omp)
                )
        return mat

    sol = _sp_integrate.solve_ivp(
        lambda t, y: generator_at(t) @ y,
        (float(times[0]), t_end),
        vec(np.asarray(rho0, dtype=complex)),
        t_eval=times,
        method="DOP853",
        rtol=1e-9,
        atol=1e-11,
    )
    if not sol.success:
        raise GeneratorError(f"stepper failed: {sol.message}")
    states = np.array([unvec(sol.y[:, k], d) for k in range(sol.y.shape[1])])
    return _finalize_trajectory(times, states)


# ---- export ------------------------------------------------------------------


def trajectory_csv_header(d: int) -> str:
    cols = ["t"]
    cols += [f"re(rho_{i}{j})" for i in range(d) for j in range(d)]
    cols += [f"im(rho_{i}{j})" for i in range(d) for j in range(d)]
    cols.append("min_eig")
    return ", ".join(cols)


def export_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with full-precision (round-trippable) floats."""
    d = traj.states.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trajectory_csv_header(d) + "\n")
        for k, t in enumerate(traj.times):
            row = [f"{t:.17g}"]
            flat = traj.states[k].reshape(-1)
            row += [f"{x:.17g}" for x in flat.real]
            row += [f"{x:.17g}" for x in flat.imag]
            row.append(f"{traj.positivity_min[k]:.17g}")
            fh.write(", ".join(row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    n_cols = data.shape[1]
    d = int(round(math.sqrt((n_cols - 2) // 2)))
    times = data[:, 0]
    re = data[:, 1 : 1 + d * d].reshape(-1, d, d)
    im = data[:, 1 + d * d : 1 + 2 * d * d].reshape(-1, d, d)
    pos = data[:, -1]
    return Trajectory(times=times, states=re + 1j * im, positivity_min=pos)
