"""Non-Markovian solvers for the scalar memory-kernel problem and its
matrix-valued generalization.

The scalar problem is

    df/dt = -i w0 f(t) + Int_0^t K(t-s) f(s) ds,      K(t) = -G(t),

with G the bath correlation function. Five routes are implemented: direct
Volterra integration (trapezoid history, Heun corrector), the time-local
approximation f = f0 exp(-i w0 t + Int Delta), the Markov closed form, the
exact branch-cut integral with pole contributions, and the late-time
asymptotic tail. A matrix Born solver and an exact single-excitation
oracle close the loop from independent directions; none of them shares
numerics with another.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import interpolate as _sp_interpolate
from scipy import optimize as _sp_optimize
from scipy import special as _sp_special

from . import bath, master, qops

KERNEL_FFT_MAX = 1 << 24
HISTORY_CAP_DEFAULT = 400_000
CONVERGENCE_TOL_DEFAULT = 1e-4
ORACLE_NORM_TOL = 1e-8
POLE_RESIDUAL_TOL = 1e-9
RECURRENCE_SAFETY = 0.6


class StepSizeError(ValueError):
    """Raised when the Volterra grid cannot represent the problem."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BranchCutError(RuntimeError):
    """Raised when the resonance-filter quadrature fails to converge."""


class TailMetadataError(ValueError):
    """Raised when the low-frequency edge exponent is unknown."""


# ---- problem and solution containers ----------------------------------------


@dataclass(frozen=True)
class ToyModelProblem:
    """Bare frequency w0 and a spectral density; K(t) = -(1/2pi) Int J e^{-iwt}.

    kernel, when given, overrides the numerical Fourier sampling of J with a
    vectorized closed form (times -> K values); used for families whose
    support is too heavy-tailed to grid.
    """

    omega0: float
    j: bath.SpectralDensity
    kernel: object = None

    def kernel_at_zero(self) -> complex:
        return -self.j.zero_frequency_integral()

    def kernel_samples(self, t_grid: np.ndarray) -> np.ndarray:
        if self.kernel is not None:
            return np.asarray(self.kernel(t_grid), dtype=complex)
        return -correlation_samples(self.j, t_grid)


@dataclass(frozen=True)
class ToyModelSolution:
    times: np.ndarray
    f: np.ndarray
    method: str
    f0: complex
    omega_shifted: float | None = None
    tau_r: float | None = None
    t_nm: float | None = None
    poles: tuple = ()
    weight_deficit: float | None = None

    @property
    def abs2(self) -> np.ndarray:
        return np.abs(self.f) ** 2

    def at(self, t: float) -> complex:
        re = np.interp(t, self.times, self.f.real)
        im = np.interp(t, self.times, self.f.imag)
        return complex(re, im)


def export_toy_csv(sol: ToyModelSolution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t, re(f), im(f), abs2(f)\n")
        for t, fv in zip(sol.times, sol.f):
            fh.write(f"{t:.17g}, {fv.real:.17g}, {fv.imag:.17g}, {abs(fv)**2:.17g}\n")


# ---- kernel sampling ---------------------------------------------------------


def correlation_samples(j: bath.SpectralDensity, t_grid: np.ndarray) -> np.ndarray:
    """G(t) on a uniform grid: trapezoid-weighted FFT when the support fits,
    per-point adaptive quadrature otherwise. The two routes are independent
    and cross-checked in tests.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    n_t = len(t_grid)
    if n_t < 2:
        return np.array([j.correlation_at(float(t)) for t in t_grid])
    dt = float(t_grid[1] - t_grid[0])
    if not np.allclose(np.diff(t_grid), dt, rtol=1e-9, atol=0):
        return np.array([j.correlation_at(float(t)) for t in t_grid])
    lo, hi = j.support()
    span = hi - lo
    # alias-free requires the frequency period 2pi/dt' to cover the support
    refine = max(1, math.ceil(1.05 * span * dt / (2.0 * math.pi)))
    dt_fine = dt / refine
    n_fine = refine * (n_t - 1) + 1
    n_fft = 1 << max(18, (8 * n_fine - 1).bit_length())
    if n_fft > KERNEL_FFT_MAX:
        return np.array([j.correlation_at(float(t)) for t in t_grid])
    dw = 2.0 * math.pi / (n_fft * dt_fine)
    m = int(math.floor(span / dw)) + 1
    omegas = lo + dw * np.arange(m + 1)
    weights = np.full(m + 1, dw)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    t0 = float(t_grid[0])
    x = np.zeros(n_fft, dtype=complex)
    # the grid offset rides along as a phase so grids need not start at zero
    x[: m + 1] = j.evaluate(omegas) * weights * np.exp(-1j * omegas * t0)
    ft = np.fft.fft(x)[:n_fine]
    t_fine = dt_fine * np.arange(n_fine)
    g_fine = ft * np.exp(-1j * lo * t_fine) / (2.0 * math.pi)
    return g_fine[::refine]


# ---- Volterra ----------------------------------------------------------------


def _volterra_march(omega0: float, kernel: np.ndarray, f0: complex, dt: float) -> np.ndarray:
    """Trapezoid history convolution with a Heun predictor-corrector."""
    n = len(kernel) - 1
    f = np.empty(n + 1, dtype=complex)
    f[0] = f0
    k_rev = kernel[::-1]  # k_rev[n - i] = K(t_i)
    half_k0 = 0.5 * kernel[0]
    for k in range(n):
        if k == 0:
            conv_k = 0.0
        else:
            # trapezoid over s = 0..t_k of K(t_k - s) f(s)
            conv_k = dt * (
                0.5 * kernel[k] * f[0]
                + np.dot(k_rev[n - k + 1 : n], f[1:k])
                + half_k0 * f[k]
            )
        rhs_k = -1j * omega0 * f[k] + conv_k
        pred = f[k] + dt * rhs_k
        # history part of the convolution at t_{k+1}, endpoint uses predictor
        conv_hist = dt * (
            0.5 * kernel[k + 1] * f[0] + np.dot(k_rev[n - k : n], f[1 : k + 1])
        )
        rhs_pred = -1j * omega0 * pred + conv_hist + dt * half_k0 * pred
        f[k + 1] = f[k] + 0.5 * dt * (rhs_k + rhs_pred)
    return f


def volterra_solve(
    p: ToyModelProblem,
    f0: complex,
    t_max: float,
    dt: float,
    convergence_tol: float = CONVERGENCE_TOL_DEFAULT,
    check: bool = True,
    history_cap: int = HISTORY_CAP_DEFAULT,
) -> ToyModelSolution:
    """March the scalar memory-kernel equation.

    The full history is kept (truncating it would be the Markov
    approximation by the back door). A coarsened re-solve at 2 dt gives a
    Richardson error estimate; if the estimated effect of halving dt exceeds
    convergence_tol the step is rejected with a suggested replacement.
    """
    if dt <= 0 or t_max <= 0:
        raise ValueError("t_max and dt must be positive")
    n = int(math.ceil(t_max / dt))
    n += n % 2
    if n + 1 > history_cap:
        raise StepSizeError(
            f"history would hold {n + 1} points, above the cap {history_cap}",
            suggested_dt=t_max / (history_cap - 2),
        )
    if p.omega0 != 0 and dt > 0.05 / abs(p.omega0):
        raise StepSizeError(
            f"dt = {dt:.3e} does not resolve 1/w0; need <= {0.05 / abs(p.omega0):.3e}",
            suggested_dt=0.05 / abs(p.omega0),
        )
    t_grid = dt * np.arange(n + 1)
    kernel = p.kernel_samples(t_grid)
    k0 = abs(kernel[0])
    if k0 > 0:
        below = np.nonzero(np.abs(kernel) < k0 / math.e)[0]
        if len(below) and below[0] < 10:
            dt_new = dt * max(below[0], 1) / 10.0
            raise StepSizeError(
                f"kernel e-folds within {below[0]} steps; dt = {dt:.3e} too coarse",
                suggested_dt=dt_new,
            )
    f = _volterra_march(p.omega0, kernel, f0, dt)
    if check:
        f_coarse = _volterra_march(p.omega0, kernel[::2], f0, 2.0 * dt)
        denom = max(abs(f[-1]), 1e-3 * abs(f0))
        est_halving = abs(f[-1] - f_coarse[-1]) / (4.0 * denom)
        if est_halving > convergence_tol:
            dt_new = 0.9 * dt * math.sqrt(convergence_tol / est_halving)
            raise StepSizeError(
                f"halving dt would still move f(T) by {est_halving:.2e} relative "
                f"(tolerance {convergence_tol:.0e})",
                suggested_dt=dt_new,
            )
    return ToyModelSolution(times=t_grid, f=f, method="volterra", f0=complex(f0))


def time_local_solve(
    p: ToyModelProblem, f0: complex, t_max: float, dt: float | None = None
) -> ToyModelSolution:
    """f(t) = f0 exp(-i w0 t + Int_0^t Delta), Delta(t) = Int_0^t K(s) e^{i w0 s} ds.

    Both integrals are cumulative trapezoids on a common fine grid.
    """
    if dt is None:
        scale = max(abs(p.omega0), math.sqrt(abs(p.kernel_at_zero())), 1e-12)
        dt = 0.02 / scale
    n = int(math.ceil(t_max / dt))
    t_grid = (t_max / n) * np.arange(n + 1)
    kernel = p.kernel_samples(t_grid)
    delta = _sp_integrate.cumulative_trapezoid(
        kernel * np.exp(1j * p.omega0 * t_grid), t_grid, initial=0.0
    )
    phase = _sp_integrate.cumulative_trapezoid(delta, t_grid, initial=0.0)
    f = f0 * np.exp(-1j * p.omega0 * t_grid + phase)
    return ToyModelSolution(times=t_grid, f=f, method="time_local", f0=complex(f0))


def markov_solution(
    p: ToyModelProblem, f0: complex, t_max: float, n_times: int = 1001
) -> ToyModelSolution:
    """f0 exp(-i w_shifted t - t / tau_R) with w_shifted = w0 + R(w0) and
    tau_R = 2/J(w0); J(w0) = 0 gives pure phase evolution.
    """
    coeff = bath.gamma_coefficient(p.j, p.omega0)
    if coeff.flag == bath.FLAG_DISCONTINUITY:
        raise ValueError(
            f"J jumps at w0 = {p.omega0:.6g}; the Markov rate is ill-defined there"
        )
    gamma, lamb = coeff.gamma, coeff.lamb
    tau_r = math.inf if gamma == 0 else 2.0 / gamma
    w_shift = p.omega0 + lamb
    t_grid = np.linspace(0.0, t_max, n_times)
    f = f0 * np.exp(-1j * w_shift * t_grid - 0.5 * gamma * t_grid)
    return ToyModelSolution(
        times=t_grid,
        f=f,
        method="markov",
        f0=complex(f0),
        omega_shifted=w_shift,
        tau_r=tau_r,
    )


# ---- poles, branch cut, tail -------------------------------------------------


def find_poles(p: ToyModelProblem, scan_points: int = 400) -> tuple:
    """Roots of w = w0 + R(w) on the zero set of J, with residues
    Z_p = 1/(1 - R'(w_p)).

    Only the regions outside the (true) support are scanned; none of the
    built-in families has an interior spectral gap. The scan window is set
    by the rigorous bound |w - w0| = |R(w)| <= Int J / (2 pi dist(w, supp)).
    """
    lo, hi = p.j.true_support()
    g0 = abs(p.j.zero_frequency_integral())  # = Int J / 2pi
    pad = 1e-9 * max(1.0, hi - lo if math.isfinite(hi - lo) else 1.0)

    def h(w: float) -> float:
        return w - p.omega0 - bath.hilbert_transform(p.j, w)

    intervals = []
    if math.isfinite(lo):
        # poles below the band satisfy lo - w <= g0 / (w0 - w + ...) loosely;
        # a window of width g0 + |w0 - lo| + 1 is always sufficient
        width = 2.0 * (g0 + abs(p.omega0 - lo) + 1.0)
        intervals.append((lo - width, lo - pad))
    if math.isfinite(hi):
        width = 2.0 * (g0 + abs(p.omega0 - hi) + 1.0)
        intervals.append((hi + pad, hi + width))

    poles = []
    for a, b in intervals:
        if b <= a:
            continue
        # cluster scan points toward the band edge where R varies fastest
        edge_is_b = b < p.omega0 or abs(b - lo) < abs(a - hi)
        frac = np.linspace(0.0, 1.0, scan_points) ** 2
        grid = b - (b - a) * frac if edge_is_b else a + (b - a) * frac
        grid = np.sort(grid)
        vals = np.array([h(w) for w in grid])
        for i in range(len(grid) - 1):
            if vals[i] == 0.0:
                root = float(grid[i])
            elif vals[i] * vals[i + 1] < 0:
                root = float(
                    _sp_optimize.brentq(h, grid[i], grid[i + 1], xtol=1e-14, rtol=8.9e-16)
                )
            else:
                continue
            residual = abs(h(root))
            if residual > POLE_RESIDUAL_TOL:
                raise RuntimeError(
                    f"pole residual {residual:.3e} at w = {root:.9g} after bracketed solve"
                )
            z = 1.0 / (1.0 - bath.hilbert_derivative(p.j, root))
            poles.append((root, z))
    poles.sort(key=lambda wz: wz[0])
    return tuple(poles)


class _SegmentedSpline:
    """Cubic interpolant built independently on each smooth segment."""

    def __init__(self, nodes_per_segment: list):
        self.bounds = []
        self.splines = []
        for xs, ys in nodes_per_segment:
            self.bounds.append((xs[0], xs[-1]))
            self.splines.append(_sp_interpolate.CubicSpline(xs, ys))
        self.starts = np.array([b[0] for b in self.bounds])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.starts, x, side="right") - 1, 0, len(self.splines) - 1)
        out = np.empty_like(x)
        for i, sp in enumerate(self.splines):
            mask = idx == i
            if np.any(mask):
                out[mask] = sp(x[mask])
        return out if out.ndim else float(out)


class BranchCutSolver:
    """Exact inverse-Laplace representation

        f(t) = f0 Int dw/2pi e^{-iwt} J(w) / {[w - w0 - R(w)]^2 + [J(w)/2]^2}

    plus a sum of pole terms Z_p e^{-i w_p t}. The Hilbert transform R is
    tabulated once on an edge- and peak-refined grid per smooth segment of J
    and splined; each time point is then an independent oscillatory
    quadrature.
    """

    def __init__(self, p: ToyModelProblem, n_base: int = 220):
        self.p = p
        self.lo, self.hi = p.j.support()
        span = self.hi - self.lo
        brk = [b for b in p.j.breakpoints() if self.lo < b < self.hi]
        seg_edges = [self.lo] + sorted(brk) + [self.hi]

        # provisional resonance estimate from the bare frequency
        w_guess = min(max(p.omega0, self.lo + 1e-9 * span), self.hi - 1e-9 * span)
        width_guess = max(0.5 * p.j.evaluate(w_guess), 1e-9 * span)

        nodes = []
        for a, b in zip(seg_edges[:-1], seg_edges[1:]):
            seg = np.linspace(a, b, n_base)
            w = b - a
            inner = np.geomspace(1e-7 * w, 0.2 * w, 45)
            seg = np.concatenate([seg, a + inner, b - inner])
            if a <= w_guess <= b:
                seg = np.concatenate(
                    [
                        seg,
                        w_guess + np.linspace(-60, 60, 301) * width_guess,
                        w_guess + np.geomspace(1e-3, 8, 41) * width_guess,
                        w_guess - np.geomspace(1e-3, 8, 41) * width_guess,
                    ]
                )
            seg = np.unique(np.clip(seg, a, b))
            with warnings.catch_warnings():
                # roundoff chatter from tiny near-edge panels; accuracy is
                # controlled downstream by the sum-rule deficit
                warnings.simplefilter("ignore", _sp_integrate.IntegrationWarning)
                ys = np.array([bath.hilbert_transform(p.j, float(x)) for x in seg])
            nodes.append((seg, ys))
        self.r_spline = _SegmentedSpline(nodes)

        # refine the resonance: root of w - w0 - R(w) inside the support
        def h(w):
            return w - p.omega0 - self.r_spline(w)

        scan = np.linspace(self.lo + 1e-9 * span, self.hi - 1e-9 * span, 4001)
        hv = h(scan)
        sign_changes = np.nonzero(hv[:-1] * hv[1:] < 0)[0]
        if len(sign_changes):
            i = sign_changes[np.argmin(np.abs(scan[sign_changes] - p.omega0))]
            self.peak = float(_sp_optimize.brentq(h, scan[i], scan[i + 1]))
        else:
            self.peak = float(scan[np.argmax(self._filter(scan))])
        self.width = max(0.5 * float(p.j.evaluate(self.peak)), 1e-12 * span)

        cuts = {self.lo, self.hi, *brk}
        for k in (5.0, 50.0, 500.0):
            for s in (-1.0, 1.0):
                c = self.peak + s * k * self.width
                if self.lo < c < self.hi:
                    cuts.add(c)
        self.cuts = sorted(cuts)
        self.poles = find_poles(p)

    def _filter(self, w):
        jw = self.p.j.evaluate(w)
        return jw / ((w - self.p.omega0 - self.r_spline(w)) ** 2 + 0.25 * jw * jw)

    def integral(self, t: float) -> complex:
        total = 0.0 + 0.0j
        err_total = 0.0
        for a, b in zip(self.cuts[:-1], self.cuts[1:]):
            if b - a <= 0:
                continue
            if t == 0:
                val, err = _sp_integrate.quad(
                    self._filter, a, b, epsabs=1e-10, epsrel=1e-9, limit=300
                )
                total += val
                err_total += err
            else:
                re, err_re = _sp_integrate.quad(
                    self._filter, a, b, weight="cos", wvar=t,
                    epsabs=1e-11, epsrel=1e-9, limit=300,
                )
                im, err_im = _sp_integrate.quad(
                    self._filter, a, b, weight="sin", wvar=t,
                    epsabs=1e-11, epsrel=1e-9, limit=300,
                )
                total += re - 1j * im
                err_total += err_re + err_im
        if err_total > max(1e-7, 1e-3 * abs(total)):
            raise BranchCutError(
                f"quadrature error {err_total:.2e} at t = {t:.6g}; resonance peak "
                f"at {self.peak:.6g} has width {self.width:.3e}"
            )
        return total / (2.0 * math.pi)

    def solve(self, f0: complex, times) -> ToyModelSolution:
        times = np.asarray(times, dtype=float)
        f = np.empty(len(times), dtype=complex)
        for k, t in enumerate(times):
            f[k] = self.integral(float(t))
            for wp, zp in self.poles:
                f[k] += zp * np.exp(-1j * wp * t)
        f *= f0
        deficit = abs(self.integral(0.0) + sum(z for _, z in self.poles) - 1.0)
        return ToyModelSolution(
            times=times,
            f=f,
            method="branch_cut",
            f0=complex(f0),
            poles=tuple(self.poles),
            weight_deficit=float(deficit),
        )


def branch_cut_solve(p: ToyModelProblem, f0: complex, times) -> ToyModelSolution:
    return BranchCutSolver(p).solve(f0, times)


def asymptotic_tail(p: ToyModelProblem, f0: complex, t) -> np.ndarray:
    """Leading late-time term from the edge where J ~ c (w - w_e)^alpha:

        f(t) ~ f0 e^{-i w_e t} c Gamma(alpha + 1) phi(w_e) / (2 pi (i t)^{alpha+1}),

    phi(w_e) = [w_e - w0 - R(w_e)]^{-2}. Requires edge metadata on the family.
    """
    edge = p.j.edge_behavior()
    if edge is None:
        raise TailMetadataError(
            "low-frequency edge exponent unknown for this family; "
            "supply (edge, alpha, c) metadata"
        )
    w_e, alpha, c = edge
    r_e = bath.hilbert_transform(p.j, w_e)
    phi = 1.0 / (w_e - p.omega0 - r_e) ** 2
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    amp = f0 * c * _sp_special.gamma(alpha + 1.0) * phi / (2.0 * math.pi)
    out = amp * np.exp(-1j * w_e * t) / (1j * t) ** (alpha + 1.0)
    return complex(out[()]) if scalar else out


def t_nm_estimate(p: ToyModelProblem, f0: complex = 1.0) -> float:
    """Crossover time where the Markov exponential falls below the tail."""
    coeff = bath.gamma_coefficient(p.j, p.omega0)
    if coeff.gamma == 0:
        return math.inf
    tau_r = 2.0 / coeff.gamma

    def gap_scalar(t: float) -> float:
        return -t / tau_r - math.log(abs(asymptotic_tail(p, f0, t)))

    t_low = 0.1 * tau_r
    if gap_scalar(t_low) <= 0:
        return t_low
    t_high = t_low
    for _ in range(60):
        t_high *= 2.0
        if gap_scalar(t_high) <= 0:
            return float(_sp_optimize.brentq(gap_scalar, t_low, t_high, rtol=1e-12))
        t_low = t_high
    return math.inf


# ---- matrix Born -------------------------------------------------------------


def born_solve(
    h_s: np.ndarray,
    eigsets: list,
    correlation,
    rho0: np.ndarray,
    t_max: float,
    dt: float,
    history_cap: int = HISTORY_CAP_DEFAULT,
) -> master.Trajectory:
    """Second-order integro-differential evolution with full history:

        drho~/dt = -sum_a Int_0^t ds { G(t-s) [A~_a(t), A~_a(s) rho~(s)]
                                      - G*(t-s) [A~_a(t), rho~(s) A~_a(s)] }

    in the interaction picture (A~ the Heisenberg eigenoperator sum, one
    independent bath per coupling operator, all sharing the correlation
    function G). The returned trajectory is in the Schroedinger picture.

    correlation may be a SpectralDensity, a vectorized callable t -> G(t),
    or an array aligned with the time grid. Cost is O(steps^2).
    """
    if dt <= 0 or t_max <= 0:
        raise ValueError("t_max and dt must be positive")
    n = int(math.ceil(t_max / dt))
    if n + 1 > history_cap:
        raise StepSizeError(
            f"history would hold {n + 1} matrices, above the cap {history_cap}",
            suggested_dt=t_max / (history_cap - 2),
        )
    t_grid = dt * np.arange(n + 1)
    if isinstance(correlation, bath.SpectralDensity):
        g_vals = correlation_samples(correlation, t_grid)
    elif callable(correlation):
        g_vals = np.asarray(correlation(t_grid), dtype=complex)
    else:
        g_vals = np.asarray(correlation, dtype=complex)
        if len(g_vals) != n + 1:
            raise ValueError(f"correlation array has {len(g_vals)} points, need {n + 1}")

    spec = qops.eig_hermitian(h_s)
    d = spec.dim
    n_c = len(eigsets)
    # Heisenberg coupling operators on the grid (eigenbasis of h_s)
    a_t = np.empty((n_c, n + 1, d, d), dtype=complex)
    for a, es in enumerate(eigsets):
        for k in range(n + 1):
            a_t[a, k] = es.heisenberg(t_grid[k])

    rho = np.empty((n + 1, d, d), dtype=complex)
    rho[0] = qops.to_eigenbasis(np.asarray(rho0, dtype=complex), spec)
    p1 = np.empty_like(a_t)  # A~_a(s) rho~(s)
    p2 = np.empty_like(a_t)  # rho~(s) A~_a(s)
    p1[:, 0] = a_t[:, 0] @ rho[0]
    p2[:, 0] = rho[0] @ a_t[:, 0]

    def rhs(k: int, s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
        out = np.zeros((d, d), dtype=complex)
        for a in range(n_c):
            m = s1[a] - s2[a]
            out -= a_t[a, k] @ m - m @ a_t[a, k]
        return out

    def history(k: int, upto: int, open_end: bool) -> tuple:
        # trapezoid over s = 0..t_upto of G(t_k - s) p(s); an open end keeps
        # full weight at s = upto because the true right endpoint (s = k)
        # is appended by the caller
        w = np.ones(upto + 1)
        w[0] = 0.5
        if not open_end:
            w[upto] = 0.5
        g_slice = g_vals[k - upto : k + 1][::-1] * w
        s1 = dt * np.einsum("s,asij->aij", g_slice, p1[:, : upto + 1])
        s2 = dt * np.einsum("s,asij->aij", np.conj(g_slice), p2[:, : upto + 1])
        return s1, s2

    zero = np.zeros((n_c, d, d), dtype=complex)
    for k in range(n):
        if k == 0:
            s1_k, s2_k = zero, zero
        else:
            s1_k, s2_k = history(k, k, open_end=False)
        r_k = rhs(k, s1_k, s2_k)
        pred = rho[k] + dt * r_k
        # convolution at t_{k+1}: frozen history plus predictor endpoint
        s1_h, s2_h = history(k + 1, k, open_end=True)
        p1_pred = a_t[:, k + 1] @ pred
        p2_pred = pred @ a_t[:, k + 1]
        s1_p = s1_h + 0.5 * dt * g_vals[0] * p1_pred
        s2_p = s2_h + 0.5 * dt * np.conj(g_vals[0]) * p2_pred
        r_pred = rhs(k + 1, s1_p, s2_p)
        rho[k + 1] = rho[k] + 0.5 * dt * (r_k + r_pred)
        p1[:, k + 1] = a_t[:, k + 1] @ rho[k + 1]
        p2[:, k + 1] = rho[k + 1] @ a_t[:, k + 1]

    # back to the Schroedinger picture and the caller's basis
    states = np.empty_like(rho)
    for k in range(n + 1):
        u = np.exp(-1j * spec.energies * t_grid[k])
        states[k] = qops.from_eigenbasis((u[:, None] * rho[k]) * np.conj(u)[None, :], spec)
    pos = np.array([qops.min_eigenvalue(s) for s in states])
    return master.Trajectory(times=t_grid, states=states, positivity_min=pos)


# ---- exact single-excitation oracle ------------------------------------------


@dataclass(frozen=True)
class ModeDiscretization:
    couplings: np.ndarray
    frequencies: np.ndarray
    recurrence_time: float


def discretize_modes(
    j: bath.SpectralDensity,
    n_modes: int = 400,
    window: tuple | None = None,
    mass_floor: float = 1e-4,
) -> ModeDiscretization:
    """Uniform-in-frequency modes with trapezoid weights, g_k^2 = J(w_k) dw / 2pi.

    The default window clips the support to where J >= mass_floor * peak, so
    the mode budget is not spent on negligible tails; pass window explicitly
    to override.
    """
    if window is not None:
        lo, hi = window
    else:
        lo, hi = j.support()
        grid = np.linspace(lo, hi, 4001)
        vals = j.evaluate(grid)
        keep = np.nonzero(vals >= mass_floor * vals.max())[0]
        if len(keep) >= 2:
            lo, hi = float(grid[keep[0]]), float(grid[keep[-1]])
    omegas = np.linspace(lo, hi, n_modes)
    dw = omegas[1] - omegas[0]
    weights = np.full(n_modes, dw)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    g2 = j.evaluate(omegas) * weights / (2.0 * math.pi)
    g2 = np.clip(g2, 0.0, None)
    return ModeDiscretization(
        couplings=np.sqrt(g2),
        frequencies=omegas,
        recurrence_time=2.0 * math.pi / dw,
    )


def _as_modes(modes) -> ModeDiscretization:
    if isinstance(modes, ModeDiscretization):
        return modes
    pairs = list(modes)
    g = np.array([p[0] for p in pairs], dtype=float)
    w = np.array([p[1] for p in pairs], dtype=float)
    spacings = np.diff(np.sort(w))
    rec = 2.0 * math.pi / spacings.min() if len(spacings) and spacings.min() > 0 else math.inf
    return ModeDiscretization(couplings=g, frequencies=w, recurrence_time=rec)


def wigner_weisskopf_oracle(
    omega0: float, modes, t_max: float, dt: float
) -> ToyModelSolution:
    """Exact amplitude on the excited state for one atom coupled to N modes,
    single-excitation sector, by full diagonalization.

    modes is a ModeDiscretization or an iterable of (g_k, w_k) pairs. Valid
    as a continuum surrogate only before the recurrence time. Norm
    conservation is checked, not assumed.
    """
    modes = _as_modes(modes)
    g = np.asarray(modes.couplings, dtype=float)
    w = np.asarray(modes.frequencies, dtype=float)
    n_modes = len(g)
    h = np.zeros((n_modes + 1, n_modes + 1))
    h[0, 0] = omega0
    h[0, 1:] = g
    h[1:, 0] = g
    h[np.arange(1, n_modes + 1), np.arange(1, n_modes + 1)] = w
    energies, vectors = np.linalg.eigh(h)
    weight = np.abs(vectors[0, :]) ** 2
    norm_drift = abs(weight.sum() - 1.0)
    if norm_drift > ORACLE_NORM_TOL:
        raise RuntimeError(
            f"norm drift {norm_drift:.2e} in the single-excitation sector; "
            "reduce the step or mode count"
        )
    t_grid = dt * np.arange(int(math.ceil(t_max / dt)) + 1)
    f = (weight[None, :] * np.exp(-1j * np.outer(t_grid, energies))).sum(axis=1)
    return ToyModelSolution(
        times=t_grid,
        f=f,
        method="wigner_weisskopf",
        f0=1.0 + 0.0j,
        weight_deficit=float(norm_drift),
    )


def pre_recurrence_window(modes: ModeDiscretization) -> float:
    return RECURRENCE_SAFETY * modes.recurrence_time


# ---- regime fits -------------------------------------------------------------


def fit_quadratic_onset(times, absf, f0: float, t_fit: float) -> float:
    """Least-squares c in 1 - |f|/|f0| = c t^2 + d t^4 over [0, t_fit].

    The cubic term vanishes identically (the first kernel derivative is
    purely imaginary for real J), so t^4 is the leading nuisance; only c is
    returned.
    """
    times = np.asarray(times, dtype=float)
    absf = np.asarray(absf, dtype=float)
    mask = (times > 0) & (times <= t_fit)
    y = 1.0 - absf[mask] / abs(f0)
    t2 = times[mask] ** 2
    t4 = times[mask] ** 4
    a = np.array([[np.dot(t2, t2), np.dot(t2, t4)], [np.dot(t4, t2), np.dot(t4, t4)]])
    b = np.array([np.dot(y, t2), np.dot(y, t4)])
    return float(np.linalg.solve(a, b)[0])


def fit_exponential_rate(times, absf, window: tuple) -> float:
    """Decay rate from a log-linear fit of |f| over the window."""
    times = np.asarray(times, dtype=float)
    absf = np.asarray(absf, dtype=float)
    mask = (times >= window[0]) & (times <= window[1]) & (absf > 0)
    if mask.sum() < 4:
        raise ValueError("window contains fewer than 4 usable points")
    slope = np.polyfit(times[mask], np.log(absf[mask]), 1)[0]
    return float(-slope)


def fit_powerlaw_slope(times, absf, window: tuple) -> float:
    """Slope of log|f| against log t over the window."""
    times = np.asarray(times, dtype=float)
    absf = np.asarray(absf, dtype=float)
    mask = (times >= window[0]) & (times <= window[1]) & (absf > 0) & (times > 0)
    if mask.sum() < 4:
        raise ValueError("window contains fewer than 4 usable points")
    return float(np.polyfit(np.log(times[mask]), np.log(absf[mask]), 1)[0])
