"""Spectral-density families and the bath-side integrals built on them.

Conventions, fixed once for the whole package:

    G(t)        = (1/2pi) Int dw J(w) e^{-i w t}            correlation function
    R(w)        = (1/2pi) P Int de J(e) / (w - e)           Hilbert transform
    Gamma(W, t) = Int_0^t ds G(s) e^{i W s}                 half Fourier, finite t
    Gamma(W)    = Gamma(W, inf) = J(W)/2 + i R(W)

so gamma(W) = J(W) is a decay rate and S(W) = R(W) a Lamb-shift coefficient.
Coupling strengths are folded into the amplitude of J (eta, J_K^2, rho_max);
there is no separate lambda^2 prefactor anywhere downstream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize


@lru_cache(maxsize=32)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)

# Effective support is truncated where J drops below this fraction of its peak.
SUPPORT_CUTOFF_FRACTION = 1e-12
# Quadrature targets; the public contracts promise 1e-6 (Hilbert) and 1e-8
# (correlation) relative accuracy, these leave headroom.
QUAD_EPSABS_FRACTION = 1e-12
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 400

FLAG_DISCONTINUITY = "discontinuity"


class BathEvaluationError(ValueError):
    """Raised when a bath-side integral cannot meet its contract."""


class HilbertDivergenceError(BathEvaluationError):
    """R(w) evaluated exactly on a jump of J, where it diverges
    logarithmically. Carries the one-sided limits of J."""

    def __init__(self, omega: float, j_below: float, j_above: float):
        self.omega = omega
        self.j_below = j_below
        self.j_above = j_above
        super().__init__(
            f"Hilbert transform diverges at w = {omega:.6g}: J jumps from "
            f"{j_below:.6g} to {j_above:.6g}"
        )


def _bose(x):
    """1/(e^x - 1), stable for small and large positive x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-8
    with np.errstate(over="ignore", divide="ignore"):
        out[~small] = 1.0 / np.expm1(x[~small])
    xs = x[small]
    # Laurent expansion 1/x - 1/2 + x/12; the x = 0 entries are the caller's
    # problem and come out as inf.
    with np.errstate(divide="ignore"):
        out[small] = 1.0 / xs - 0.5 + xs / 12.0
    return out


def _fermi(x):
    """1/(e^x + 1), overflow-safe."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = np.exp(-x[pos].clip(max=745)) / (1.0 + np.exp(-x[pos].clip(max=745)))
    out[~pos] = 1.0 / (1.0 + np.exp(x[~pos].clip(min=-745)))
    return out


def _scalar_or_array(w, values):
    if np.ndim(w) == 0:
        return float(values)
    return values


class SpectralDensity:
    """Base class: a nonnegative J(w) with enough metadata for quadrature.

    Subclasses provide `evaluate` (vectorized), the true mathematical support,
    an effective (truncated) support for quadrature, interior kink locations,
    jump discontinuities, and, when known, the power-law behavior at the lower
    band edge used by the asymptotic machinery.
    """

    family = "base"

    def evaluate(self, w):
        raise NotImplementedError

    def __call__(self, w):
        return self.evaluate(w)

    def support(self) -> tuple[float, float]:
        """Effective quadrature domain (J < 1e-12 * max J outside)."""
        raise NotImplementedError

    def true_support(self) -> tuple[float, float]:
        """Where J is mathematically allowed to be nonzero (ends may be inf)."""
        return self.support()

    def breakpoints(self) -> list[float]:
        """Interior kinks worth splitting integrals at."""
        return []

    def discontinuities(self) -> list[tuple[float, float, float]]:
        """Jump points as (w, J(w-), J(w+))."""
        return []

    def edge_behavior(self) -> tuple[float, float, float] | None:
        """(w_edge, alpha, c) with J ~ c (w - w_edge)^alpha at the lower edge."""
        return None

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        d = {"family": self.family}
        d.update(self.params())
        return d

    # ---- generic numerics ------------------------------------------------

    def _segments(self, extra: tuple[float, ...] = ()) -> list[tuple[float, float]]:
        lo, hi = self.support()
        pts = sorted({p for p in (*self.breakpoints(), *extra) if lo < p < hi})
        edges = [lo, *pts, hi]
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    def peak_value(self) -> float:
        lo, hi = self.support()
        grid = np.linspace(lo, hi, 4001)
        return float(np.max(self.evaluate(grid)))

    def zero_frequency_integral(self) -> float:
        """G(0) = (1/2pi) Int J dw. Memoized; instances are immutable."""
        cached = self.__dict__.get("_g0_memo")
        if cached is not None:
            return cached
        total = 0.0
        for a, b in self._segments():
            val, _ = integrate.quad(
                lambda w: float(self.evaluate(w)),
                a,
                b,
                epsabs=1e-13,
                epsrel=QUAD_EPSREL,
                limit=QUAD_LIMIT,
            )
            total += val
        g0 = total / (2.0 * math.pi)
        object.__setattr__(self, "_g0_memo", g0)
        return g0

    def correlation_at(self, t: float) -> complex:
        """G(t) by adaptive quadrature, one time point."""
        if t == 0.0:
            return complex(self.zero_frequency_integral())
        g0 = abs(self.zero_frequency_integral())
        epsabs = max(QUAD_EPSABS_FRACTION * 2.0 * math.pi * g0, 1e-300)
        re = im = 0.0
        for a, b in self._segments():
            f = lambda w: float(self.evaluate(w))
            # weighted quadrature cannot take explicit split points, hence the
            # per-segment calls
            vc, _ = integrate.quad(
                f, a, b, weight="cos", wvar=t, epsabs=epsabs, epsrel=QUAD_EPSREL,
                limit=QUAD_LIMIT,
            )
            vs, _ = integrate.quad(
                f, a, b, weight="sin", wvar=t, epsabs=epsabs, epsrel=QUAD_EPSREL,
                limit=QUAD_LIMIT,
            )
            re += vc
            im -= vs
        return complex(re, im) / (2.0 * math.pi)


@dataclass(frozen=True)
class CorrelationFunction:
    """G(t) sampled on t >= 0; G(-t) = conj(G(t)) is implied by real J."""

    times: np.ndarray
    values: np.ndarray
    source: SpectralDensity


def correlation_function(j: SpectralDensity, t_max: float, n_samples: int) -> CorrelationFunction:
    """Sample G(t) on a uniform grid [0, t_max] by per-point quadrature."""
    if t_max <= 0 or n_samples < 2:
        raise ValueError("need t_max > 0 and n_samples >= 2")
    times = np.linspace(0.0, t_max, n_samples)
    values = np.array([j.correlation_at(float(t)) for t in times])
    return CorrelationFunction(times=times, values=values, source=j)


def _truncate_decay(f, start: float, scale: float, threshold: float) -> float:
    """Smallest x >= start with f monotonically below threshold, by bracketing.

    f must eventually decay below threshold; doubling finds the bracket.
    """
    hi = start + scale
    for _ in range(200):
        if f(hi) < threshold:
            break
        hi += max(hi - start, scale)
    else:
        raise BathEvaluationError("support truncation did not converge")
    lo = start
    if f(lo) < threshold:
        return lo
    return float(optimize.brentq(lambda x: f(x) - threshold, lo, hi, xtol=1e-12 * max(1.0, hi)))


# ---- families ------------------------------------------------------------


@dataclass(frozen=True)
class FlatBand(SpectralDensity):
    """J = j0 on [-cutoff, cutoff], zero outside."""

    j0: float
    cutoff: float
    family = "flat"

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        vals = np.where(np.abs(w) < self.cutoff, self.j0, 0.0)
        # midpoint convention exactly on the band edges
        vals = np.where(np.abs(w) == self.cutoff, 0.5 * self.j0, vals)
        return _scalar_or_array(w, vals)

    def support(self):
        return (-self.cutoff, self.cutoff)

    def discontinuities(self):
        return [(-self.cutoff, 0.0, self.j0), (self.cutoff, self.j0, 0.0)]

    def edge_behavior(self):
        return (-self.cutoff, 0.0, self.j0)

    def hilbert_closed_form(self, w: float) -> float:
        # kept for cross-checks; the generic PV path must reproduce this
        return self.j0 / (2.0 * math.pi) * math.log(abs((w + self.cutoff) / (w - self.cutoff)))

    def params(self):
        return {"j0": self.j0, "cutoff": self.cutoff}


@dataclass(frozen=True)
class OhmicCutoff(SpectralDensity):
    """J = 2 pi eta w^alpha e^{-w/cutoff} for w > 0."""

    eta: float
    alpha: float = 1.0
    cutoff: float = 1.0
    family = "ohmic"

    def __post_init__(self):
        if self.eta < 0 or self.alpha < 0 or self.cutoff <= 0:
            raise ValueError("need eta >= 0, alpha >= 0, cutoff > 0")

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        pos = w > 0
        vals = np.zeros_like(w)
        wp = w[pos]
        vals[pos] = 2.0 * math.pi * self.eta * wp**self.alpha * np.exp(-wp / self.cutoff)
        if self.alpha == 0:
            vals = np.where(w == 0.0, 2.0 * math.pi * self.eta, vals)
        return _scalar_or_array(w, vals)

    def support(self):
        a, lam = self.alpha, self.cutoff
        peak = (a * lam) ** a * math.exp(-a) if a > 0 else 1.0
        f = lambda w: w**a * math.exp(-w / lam)
        hi = _truncate_decay(f, max(a * lam, lam), lam, SUPPORT_CUTOFF_FRACTION * peak)
        return (0.0, hi)

    def true_support(self):
        return (0.0, math.inf)

    def discontinuities(self):
        if self.alpha == 0:
            return [(0.0, 0.0, 2.0 * math.pi * self.eta)]
        return []

    def edge_behavior(self):
        return (0.0, self.alpha, 2.0 * math.pi * self.eta)

    def params(self):
        return {"eta": self.eta, "alpha": self.alpha, "cutoff": self.cutoff}


@dataclass(frozen=True)
class BosonicThermal(SpectralDensity):
    """Thermal occupation dressing of a zero-temperature density rho:

    J(w >= 0) = rho(w) [1 + B(w)],  J(w < 0) = rho(-w) B(-w),
    with B(w) = 1/(e^{beta w} - 1). beta = inf reduces to rho itself.
    """

    rho: SpectralDensity
    beta: float
    family = "bosonic_thermal"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive (use math.inf for T = 0)")
        lo, _ = self.rho.true_support()
        if lo < 0:
            raise ValueError("rho must be a zero-temperature density (support in w >= 0)")

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        vals = np.zeros_like(w)
        if math.isinf(self.beta):
            pos = w >= 0
            vals[pos] = self.rho.evaluate(w[pos])
            return _scalar_or_array(w, vals)
        pos = w > 0
        neg = w < 0
        vals[pos] = self.rho.evaluate(w[pos]) * (1.0 + _bose(self.beta * w[pos]))
        vals[neg] = self.rho.evaluate(-w[neg]) * _bose(-self.beta * w[neg])
        zero = w == 0.0
        if np.any(zero):
            vals[zero] = self._at_zero()
        return _scalar_or_array(w, vals)

    def _at_zero(self) -> float:
        edge = self.rho.edge_behavior()
        if edge is None:
            # numeric limit; adequate for tabulated inputs
            eps = 1e-9 * max(1.0, self.rho.support()[1])
            return float(self.rho.evaluate(eps) * (1.0 + _bose(self.beta * eps)))
        w_edge, alpha, c = edge
        if w_edge > 0:
            return 0.0
        if alpha > 1:
            return 0.0
        if alpha == 1:
            return c / self.beta
        return math.inf

    def support(self):
        lo_r, hi_r = self.rho.support()
        if math.isinf(self.beta):
            return (lo_r, hi_r)
        peak = self.peak_value_rough()
        f = lambda x: float(self.rho.evaluate(x)) * _bose(self.beta * x)
        wneg = _truncate_decay(
            f, max(lo_r, 1.0 / self.beta), hi_r, SUPPORT_CUTOFF_FRACTION * peak
        )
        return (-wneg, hi_r)

    def peak_value_rough(self) -> float:
        lo_r, hi_r = self.rho.support()
        grid = np.linspace(max(lo_r, hi_r * 1e-6), hi_r, 2001)
        return float(np.max(self.rho.evaluate(grid) * (1.0 + _bose(self.beta * grid))))

    def true_support(self):
        if math.isinf(self.beta):
            return self.rho.true_support()
        hi = self.rho.true_support()[1]
        return (-hi, hi)

    def breakpoints(self):
        return [0.0, *self.rho.breakpoints()]

    def params(self):
        return {"rho": self.rho.describe(), "beta": self.beta}


@dataclass(frozen=True)
class FermionicBand(SpectralDensity):
    """J = (1/4) rho(w) [1 - F(w)] with a parabolic band
    rho = rho_max (1 - w^2/W^2) on [-W, W] and F the Fermi function."""

    rho_max: float
    half_bandwidth: float
    beta: float
    family = "fermionic_band"

    def _band(self, w):
        W = self.half_bandwidth
        return np.where(np.abs(w) <= W, self.rho_max * (1.0 - (w / W) ** 2), 0.0)

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        if math.isinf(self.beta):
            occ = np.where(w > 0, 1.0, np.where(w < 0, 0.0, 0.5))
        else:
            occ = 1.0 - _fermi(self.beta * w)
        vals = 0.25 * self._band(w) * occ
        return _scalar_or_array(w, vals)

    def support(self):
        W = self.half_bandwidth
        if math.isinf(self.beta):
            return (0.0, W)
        return (-W, W)

    def breakpoints(self):
        return [0.0]

    def discontinuities(self):
        if math.isinf(self.beta):
            return [(0.0, 0.0, 0.25 * self.rho_max)]
        return []

    def edge_behavior(self):
        if math.isinf(self.beta):
            # J(0+) steps to rho_max/4: alpha = 0 edge at w = 0
            return (0.0, 0.0, 0.25 * self.rho_max)
        return None

    def params(self):
        return {
            "rho_max": self.rho_max,
            "half_bandwidth": self.half_bandwidth,
            "beta": self.beta,
        }


@dataclass(frozen=True)
class KondoParticleHole(SpectralDensity):
    """Particle-hole spectral density of an isotropic Kondo coupling:

    J(w) = pi J_K^2 Int de rho(e) rho(e+w) F(e-mu) [1 - F(e+w-mu)],
    rho(e) = rho_f (1 - e^2/W^2) on [-W, W].

    The integral is evaluated with fixed Gauss-Legendre nodes: exact for the
    quartic T = 0 integrand, ~1e-12 for the smooth finite-T one.
    """

    j_k: float
    rho_f: float
    half_bandwidth: float
    mu: float = 0.0
    beta: float = math.inf
    family = "kondo"
    _gl_nodes: int = field(default=160, repr=False)

    def __post_init__(self):
        if abs(self.mu) >= self.half_bandwidth:
            raise ValueError("need |mu| < half_bandwidth")

    def _band(self, e):
        W = self.half_bandwidth
        out = self.rho_f * (1.0 - (e / W) ** 2)
        return np.where(np.abs(e) <= W, out, 0.0)

    def _integral_batch(self, w: np.ndarray) -> np.ndarray:
        # per-w integration bounds, broadcast over fixed Gauss-Legendre nodes
        W, mu = self.half_bandwidth, self.mu
        if math.isinf(self.beta):
            lo = np.maximum(-W, mu - w)
            hi = np.minimum(mu, W - w)
            empty = (w <= 0) | (hi <= lo)
            n_nodes = 16  # exact for the quartic integrand
        else:
            lo = np.maximum(-W, -W - w)
            hi = np.minimum(W, W - w)
            empty = hi <= lo
            n_nodes = self._gl_nodes
        x, wt = _leggauss(n_nodes)
        half = 0.5 * np.where(empty, 0.0, hi - lo)
        mid = 0.5 * (hi + lo)
        e = half[None, :] * x[:, None] + mid[None, :]
        vals = self._band(e) * self._band(e + w[None, :])
        if not math.isinf(self.beta):
            vals = vals * _fermi(self.beta * (e - mu))
            vals = vals * (1.0 - _fermi(self.beta * (e + w[None, :] - mu)))
        return half * np.einsum("n,nm->m", wt, vals)

    def evaluate(self, w):
        w_arr = np.asarray(w, dtype=float)
        flat = np.atleast_1d(w_arr).ravel()
        vals = math.pi * self.j_k**2 * self._integral_batch(flat)
        if np.ndim(w) == 0:
            return float(vals[0])
        return vals.reshape(w_arr.shape)

    def support(self):
        W = self.half_bandwidth
        if math.isinf(self.beta):
            return (0.0, 2.0 * W)
        return (-2.0 * W, 2.0 * W)

    def breakpoints(self):
        W, mu = self.half_bandwidth, self.mu
        pts = [0.0]
        if math.isinf(self.beta):
            pts += [W - mu, W + mu]
        return sorted({p for p in pts})

    def edge_behavior(self):
        if math.isinf(self.beta):
            # J ~ pi (J_K rho(mu))^2 w for small w > 0
            c = math.pi * (self.j_k * float(self._band(np.asarray(self.mu)))) ** 2
            return (0.0, 1.0, c)
        return None

    def params(self):
        return {
            "j_k": self.j_k,
            "rho_f": self.rho_f,
            "half_bandwidth": self.half_bandwidth,
            "mu": self.mu,
            "beta": self.beta,
        }


@dataclass(frozen=True)
class PhotonicBandEdge(SpectralDensity):
    """J = 2 pi eta sqrt(w - w_edge) e^{-(w - w_edge)/cutoff} above the band
    edge w_edge, zero inside the gap below it."""

    eta: float
    omega_edge: float
    cutoff: float
    family = "photonic_band_edge"

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        x = w - self.omega_edge
        pos = x > 0
        vals = np.zeros_like(w)
        xp = x[pos]
        vals[pos] = 2.0 * math.pi * self.eta * np.sqrt(xp) * np.exp(-xp / self.cutoff)
        return _scalar_or_array(w, vals)

    def support(self):
        lam = self.cutoff
        peak = math.sqrt(lam / 2.0) * math.exp(-0.5)
        f = lambda x: math.sqrt(x) * math.exp(-x / lam)
        hi = _truncate_decay(f, lam, lam, SUPPORT_CUTOFF_FRACTION * peak)
        return (self.omega_edge, self.omega_edge + hi)

    def true_support(self):
        return (self.omega_edge, math.inf)

    def edge_behavior(self):
        return (self.omega_edge, 0.5, 2.0 * math.pi * self.eta)

    def params(self):
        return {"eta": self.eta, "omega_edge": self.omega_edge, "cutoff": self.cutoff}


@dataclass(frozen=True)
class Tabulated(SpectralDensity):
    """Piecewise-linear J from sorted (w, J) samples; zero outside the range.

    PV integrals over the interpolant are evaluated segment-exactly, so the
    Hilbert transform of tabulated data carries no quadrature error beyond
    the interpolation itself.
    """

    omegas: np.ndarray
    values: np.ndarray
    family = "tabulated"

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != v.shape or len(w) < 2:
            raise ValueError("need matching 1-D arrays with at least two samples")
        if not np.all(np.diff(w) > 0):
            raise ValueError("tabulated abscissae must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("tabulated J must be nonnegative")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_file(cls, path) -> "Tabulated":
        """Two-column UTF-8 text, '#' starts a comment."""
        ws, vs = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
                try:
                    ws.append(float(parts[0]))
                    vs.append(float(parts[1]))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return cls(omegas=np.array(ws), values=np.array(vs))

    def evaluate(self, w):
        w_arr = np.asarray(w, dtype=float)
        vals = np.interp(w_arr, self.omegas, self.values, left=0.0, right=0.0)
        return _scalar_or_array(w, vals)

    def support(self):
        return (float(self.omegas[0]), float(self.omegas[-1]))

    def breakpoints(self):
        return [float(x) for x in self.omegas[1:-1]]

    def discontinuities(self):
        out = []
        if self.values[0] != 0.0:
            out.append((float(self.omegas[0]), 0.0, float(self.values[0])))
        if self.values[-1] != 0.0:
            out.append((float(self.omegas[-1]), float(self.values[-1]), 0.0))
        return out

    def hilbert_exact(self, w: float) -> float:
        """PV Hilbert transform of the interpolant, closed form per segment."""
        for wd, lo_lim, hi_lim in self.discontinuities():
            if w == wd:
                raise HilbertDivergenceError(w, lo_lim, hi_lim)
        xs, ys = self.omegas, self.values
        total = 0.0
        log_coeff = 0.0  # accumulates J(w) * log terms when w sits on a node
        on_node = np.any(xs == w)
        for i in range(len(xs) - 1):
            a, b = float(xs[i]), float(xs[i + 1])
            ya, yb = float(ys[i]), float(ys[i + 1])
            d = (yb - ya) / (b - a)
            jw = ya + d * (w - a)  # interpolant extended to w
            total -= d * (b - a)
            if w == a or w == b:
                # log parts from the two adjacent segments telescope; J is
                # continuous at the node so the coefficient is J(w)
                if w == a:
                    log_coeff -= math.log(abs(w - b))
                else:
                    log_coeff += math.log(abs(w - a))
            else:
                total += jw * math.log(abs((w - a) / (w - b)))
        if on_node:
            total += float(self.evaluate(w)) * log_coeff
        return total / (2.0 * math.pi)

    def params(self):
        return {"n_samples": int(len(self.omegas))}


# ---- half-Fourier machinery ----------------------------------------------


def hilbert_transform(j: SpectralDensity, w: float) -> float:
    """R(w) = (1/2pi) P Int J(e)/(w - e) de.

    Uses Cauchy-weight adaptive quadrature on the segment containing w and
    plain quadrature elsewhere; exact segment formulas for Tabulated. Raises
    HilbertDivergenceError when w sits exactly on a jump of J.
    """
    w = float(w)
    if isinstance(j, Tabulated):
        return j.hilbert_exact(w)
    for wd, lo_lim, hi_lim in j.discontinuities():
        if w == wd:
            raise HilbertDivergenceError(w, lo_lim, hi_lim)

    lo, hi = j.support()
    scale = max(abs(lo), abs(hi), 1.0)
    pad = 0.1 * scale

    total = 0.0
    err_total = 0.0
    with warnings.catch_warnings():
        # roundoff chatter on steep near-edge panels; accuracy is enforced
        # through the accumulated error estimate below instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if lo - pad < w < hi + pad:
            # make sure w is strictly interior to exactly one integration segment
            edges = sorted({lo, hi, *(p for p in j.breakpoints() if lo < p < hi)})
            edges = [min(lo, w - pad)] + edges + [max(hi, w + pad)]
            edges = sorted(set(edges))
            # drop edges that coincide with w (J continuous there, checked above)
            edges = [e for e in edges if e != w]
            segs = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
            for a, b in segs:
                if a < w < b:
                    val, err = integrate.quad(
                        lambda e: float(j.evaluate(e)),
                        a,
                        b,
                        weight="cauchy",
                        wvar=w,
                        epsabs=1e-12,
                        epsrel=QUAD_EPSREL,
                        limit=QUAD_LIMIT,
                    )
                    total -= val  # PV Int J/(e - w) -> sign flip for J/(w - e)
                else:
                    val, err = integrate.quad(
                        lambda e: float(j.evaluate(e)) / (w - e),
                        a,
                        b,
                        epsabs=1e-12,
                        epsrel=QUAD_EPSREL,
                        limit=QUAD_LIMIT,
                    )
                    total += val
                err_total += err
        else:
            for a, b in j._segments():
                val, err = integrate.quad(
                    lambda e: float(j.evaluate(e)) / (w - e),
                    a,
                    b,
                    epsabs=1e-12,
                    epsrel=QUAD_EPSREL,
                    limit=QUAD_LIMIT,
                )
                total += val
                err_total += err
    if err_total > max(1e-8, 1e-5 * abs(total)):
        raise BathEvaluationError(
            f"Hilbert transform at w = {w:.9g}: quadrature error estimate "
            f"{err_total:.2e} too large"
        )
    return total / (2.0 * math.pi)


def hilbert_derivative(j: SpectralDensity, w: float) -> float:
    """R'(w) for w strictly outside the support: -(1/2pi) Int J(e)/(w-e)^2 de."""
    lo, hi = j.support()
    if lo <= w <= hi:
        # central difference fallback inside the support
        h = 1e-6 * max(1.0, abs(w))
        return (hilbert_transform(j, w + h) - hilbert_transform(j, w - h)) / (2 * h)
    total = 0.0
    for a, b in j._segments():
        val, _ = integrate.quad(
            lambda e: float(j.evaluate(e)) / (w - e) ** 2,
            a,
            b,
            epsabs=1e-13,
            epsrel=QUAD_EPSREL,
            limit=QUAD_LIMIT,
        )
        total += val
    return -total / (2.0 * math.pi)


@dataclass(frozen=True)
class HalfFourierCoefficient:
    """Gamma(Omega, inf) split into rate and Lamb parts:
    gamma = J(Omega), lamb = R(Omega)."""

    omega: float
    gamma: float
    lamb: float
    flag: str | None = None

    @property
    def value(self) -> complex:
        return 0.5 * self.gamma + 1j * self.lamb


def gamma_coefficient(j: SpectralDensity, omega: float) -> HalfFourierCoefficient:
    """Decay rate and Lamb coefficient at one Bohr frequency.

    On a jump of J the half-Fourier real part is the mean of the one-sided
    limits (flagged); the Lamb part diverges there and is reported as a
    signed infinity.
    """
    omega = float(omega)
    for wd, lo_lim, hi_lim in j.discontinuities():
        if omega == wd:
            gamma = 0.5 * (lo_lim + hi_lim)
            jump = hi_lim - lo_lim
            lamb = math.inf if jump < 0 else -math.inf
            return HalfFourierCoefficient(
                omega=omega, gamma=gamma, lamb=lamb, flag=FLAG_DISCONTINUITY
            )
    gamma = float(j.evaluate(omega))
    if gamma < -1e-10:
        raise BathEvaluationError(f"negative J({omega}) = {gamma}")
    lamb = hilbert_transform(j, omega)
    return HalfFourierCoefficient(omega=omega, gamma=gamma, lamb=lamb)


@dataclass(frozen=True)
class GammaMatrix:
    """gamma_{ab}(Omega) and S_{ab}(Omega) over coupling labels, per Omega.

    gamma and lamb have shape (n_omegas, n_couplings, n_couplings); gamma is
    Hermitian PSD at every Omega (hard requirement), lamb Hermitian.
    """

    omegas: np.ndarray
    gamma: np.ndarray
    lamb: np.ndarray
    flags: tuple

    @property
    def n_couplings(self) -> int:
        return self.gamma.shape[1]

    def index_of(self, omega: float) -> int:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        return i

    def gamma_at(self, omega: float) -> np.ndarray:
        return self.gamma[self.index_of(omega)]

    def lamb_at(self, omega: float) -> np.ndarray:
        return self.lamb[self.index_of(omega)]


PSD_FLOOR = -1e-8


def gamma_matrix(
    j,
    omegas,
    weights=None,
) -> GammaMatrix:
    """Assemble gamma(Omega) and S(Omega) over coupling labels.

    j: a single SpectralDensity shared by all couplings, or a dict mapping
       (a, b) index pairs to SpectralDensity for user-supplied cross spectra
       (missing pairs are zero; (b, a) falls back to (a, b) by symmetry).
    weights: optional per-coupling amplitudes for the shared-J case. A 1-D
       vector w gives the rank-one matrix w w^dag J(Omega); a 2-D matrix M
       gives M M^dag J(Omega). Default: identity couplings (independent
       identical baths), gamma_{ab} = delta_{ab} J(Omega).
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if isinstance(j, dict):
        n = 1 + max(max(a, b) for a, b in j.keys())
        gam = np.zeros((len(omegas), n, n), dtype=complex)
        lam = np.zeros((len(omegas), n, n), dtype=complex)
        flags = []
        for k, om in enumerate(omegas):
            flagged = None
            for a in range(n):
                for b in range(n):
                    dens = j.get((a, b)) or j.get((b, a))
                    if dens is None:
                        continue
                    coeff = gamma_coefficient(dens, om)
                    gam[k, a, b] = coeff.gamma
                    lam[k, a, b] = coeff.lamb
                    flagged = flagged or coeff.flag
            flags.append(flagged)
    else:
        if weights is None:
            coupling = np.eye(1, dtype=complex)
        else:
            wts = np.asarray(weights, dtype=complex)
            if wts.ndim == 1:
                coupling = np.outer(wts, wts.conj())
            else:
                coupling = wts @ wts.conj().T
        n = coupling.shape[0]
        gam = np.zeros((len(omegas), n, n), dtype=complex)
        lam = np.zeros((len(omegas), n, n), dtype=complex)
        flags = []
        for k, om in enumerate(omegas):
            coeff = gamma_coefficient(j, om)
            gam[k] = coupling * coeff.gamma
            lam[k] = coupling * coeff.lamb
            flags.append(coeff.flag)

    for k in range(len(omegas)):
        g = gam[k]
        if np.max(np.abs(g - g.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise BathEvaluationError(f"gamma({omegas[k]}) is not Hermitian")
        finite = np.all(np.isfinite(g.real))
        if finite:
            lo = float(np.linalg.eigvalsh(0.5 * (g + g.conj().T))[0])
            if lo < PSD_FLOOR:
                raise BathEvaluationError(
                    f"gamma({omegas[k]}) has negative eigenvalue {lo:.3e}; "
                    "inconsistent cross-spectra"
                )
    return GammaMatrix(omegas=omegas, gamma=gam, lamb=lam, flags=tuple(flags))


def gamma_time_dependent(j: SpectralDensity, omega: float, t: float) -> complex:
    """Gamma(Omega, t) = Int_0^t G(s) e^{i Omega s} ds, adaptive in time.

    This is the literal definition and stays robust for heavy-tailed J where
    a frequency-domain rewrite would integrate an oscillation over a huge
    support. G(s) values are cached across the two quadrature passes.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0 + 0.0j
    omega = float(omega)

    g_cache: dict[float, complex] = {}

    def g_at(s: float) -> complex:
        v = g_cache.get(s)
        if v is None:
            v = j.correlation_at(s) * np.exp(1j * omega * s)
            g_cache[s] = v
        return v

    lo, hi = j.support()
    osc = (abs(omega) + max(abs(lo), abs(hi))) * t / math.pi
    limit = int(min(6000, max(QUAD_LIMIT, 2 * osc)))
    re, _ = integrate.quad(
        lambda s: g_at(s).real, 0.0, t, epsabs=1e-12, epsrel=QUAD_EPSREL, limit=limit
    )
    im, _ = integrate.quad(
        lambda s: g_at(s).imag, 0.0, t, epsabs=1e-12, epsrel=QUAD_EPSREL, limit=limit
    )
    return complex(re, im)


def kondo_rate(
    j_k: float, rho_f: float, half_bandwidth: float, mu: float, temperature: float
) -> float:
    """Lindblad spin-decay rate of the Kondo model:

    gamma_L(T) = pi J_K^2 Int de rho(e)^2 / (4 cosh^2[(e - mu)/2T]),
    rho(e) = rho_f (1 - e^2/W^2) on [-W, W]. Returns 0 exactly at T = 0;
    the low-T slope is the Korringa rate pi (J_K rho(mu))^2 T.
    """
    W = half_bandwidth
    if temperature < 0 or W <= 0 or abs(mu) >= W:
        raise ValueError("need T >= 0, W > 0, |mu| < W")
    if temperature == 0.0:
        return 0.0
    # substitute x = (e - mu)/T; the cosh^-2 kernel confines |x| <~ 50
    x_lo = max(-50.0, (-W - mu) / temperature)
    x_hi = min(50.0, (W - mu) / temperature)
    if x_hi <= x_lo:
        return 0.0
    x, wt = _leggauss(240)
    xs = 0.5 * (x_hi - x_lo) * x + 0.5 * (x_hi + x_lo)
    e = mu + temperature * xs
    band = rho_f * (1.0 - (e / W) ** 2)
    band = np.where(np.abs(e) <= W, band, 0.0)
    integrand = band**2 / (4.0 * np.cosh(0.5 * xs) ** 2)
    integral = 0.5 * (x_hi - x_lo) * float(np.dot(wt, integrand)) * temperature
    return math.pi * j_k**2 * integral
