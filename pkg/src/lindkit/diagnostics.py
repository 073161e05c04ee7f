"""Timescale hierarchy and the "is a Lindblad description valid here?" verdict.

The report gathers the characteristic times that control the three layers of
approximation behind a Lindblad model -- weak coupling (Born), memorylessness
(Markov), and secularity (rotating wave) -- and the verdict applies explicit
numeric thresholds to them. The paper trail for every verdict is the report
itself: each rule cites the fields it read and the thresholds it used.

Two candidate bath correlation times are reported side by side and never
collapsed into one number:

  tau_b_integral   first moment Int t|G| dt / Int |G| dt, flagged divergent
                   when the truncated integral keeps growing under domain
                   doubling (heavy power-law tails);
  tau_b_threshold  first time with |G(t)| < floor * |G(0)| (default 1%).

The probing window of a transition is [Omega - c/tau_R, Omega + c/tau_R]
(c = 2 by default): the stretch of the spectral density a transition actually
samples while it decays. Strong variation of J inside that window is the
quantitative "J must look flat where it is probed" test.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import bath, memory, qops

VERDICT_PASS = "pass"
VERDICT_MARGINAL = "marginal"
VERDICT_FAIL = "fail"

# grid construction constants; fixed so identical inputs give identical reports
PROFILE_POINTS_PER_OSCILLATION = 64
PROFILE_SEGMENT_POINTS = 8192
PROFILE_MAX_DOUBLINGS = 26
INTEGRAL_DOUBLINGS = 12
INTEGRAL_CONVERGED_RATIO = 0.75
INTEGRAL_CONVERGED_FRACTION = 0.005
# |G| samples below this fraction of |G(0)| are quadrature round-off, not
# tail; the oscillatory-quad error grows with t and reaches ~1e-12 relative
# by the last doubling window
INTEGRAL_NOISE_RELATIVE = 1e-11
WINDOW_GRID_POINTS = 401
PRESENT_NORM_FRACTION = 1e-12


@dataclass(frozen=True)
class DiagnosticThresholds:
    """Numeric gates for the three verdicts, printed in every report.

    The underlying theory gives only "much less than" relations; the defaults
    here are artifact choices, kept in one place so a config can move them.
    """

    born_pass: float = 0.1
    born_marginal: float = 0.3
    markov_ratio_pass: float = 0.1
    markov_variation_pass: float = 0.2
    markov_relax: float = 3.0
    rwa_pass: float = 10.0
    rwa_marginal: float = 3.0
    window_factor: float = 2.0
    correlation_floor: float = 0.01


@dataclass(frozen=True)
class TransitionScales:
    """Per-transition numbers: frequency, rate, and what the decay probes."""

    omega: float
    j_value: float
    tau_r: float                 # 2 / J(omega); inf when J(omega) = 0
    tau_h: float                 # 1 / |omega|; inf at omega = 0
    window: tuple                # probing interval actually used
    variation: float             # max |J - J(omega)| / J(omega) over window
    t_nm: float | None           # Markov-to-tail crossover; None when unknown


@dataclass(frozen=True)
class TimescaleReport:
    tau_b_integral: float        # math.inf when flagged divergent
    tau_b_divergent: bool
    tau_b_threshold: float
    tau_h: float                 # 1 / max |omega| over present transitions
    correlation_scale: float     # |G(0)|
    coupling_parameter: float    # |G(0)|^(1/2) * tau_b_threshold
    transitions: tuple           # TransitionScales, sorted by omega
    secularity: np.ndarray       # |omega_i - omega_j| * min(tau_r_i, tau_r_j)
    t_rwa: float                 # min |delta| * tau_r^2 over unresolved pairs
    t_nm: float | None           # min over transitions, None when none known
    thresholds: DiagnosticThresholds


@dataclass(frozen=True)
class VerdictEntry:
    status: str                  # pass | marginal | fail
    rule: str                    # the inequality that fired, with numbers
    evidence: dict               # report fields the rule read


@dataclass(frozen=True)
class ValidityVerdict:
    born: VerdictEntry
    markov: VerdictEntry
    rwa: VerdictEntry

    @property
    def statuses(self) -> tuple:
        return (self.born.status, self.markov.status, self.rwa.status)

    @property
    def worst(self) -> str:
        order = (VERDICT_PASS, VERDICT_MARGINAL, VERDICT_FAIL)
        return order[max(order.index(s) for s in self.statuses)]


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.4g}"
    return str(x)


# ---- correlation-function profile ---------------------------------------------


def _oscillation_scale(j: bath.SpectralDensity) -> float:
    lo, hi = j.support()
    return max(abs(lo), abs(hi), 1e-12)


def correlation_profile(
    j: bath.SpectralDensity, floor: float = 0.01
) -> tuple[float, float, bool]:
    """(|G(0)|, tau_b_threshold, found) with the threshold time defined as the
    first grid time where |G| drops below floor * |G(0)|.

    The grid doubles until the crossing is found; `found` is False when |G|
    stays above the floor over the whole scanned range (the time is then the
    scan horizon, a lower bound).
    """
    w_scale = _oscillation_scale(j)
    g0 = abs(complex(j.correlation_at(0.0)))
    if g0 == 0.0:
        return 0.0, 0.0, True
    dt = (2.0 * math.pi / w_scale) / PROFILE_POINTS_PER_OSCILLATION
    t_hi = PROFILE_SEGMENT_POINTS * dt
    t_lo = 0.0
    for _ in range(PROFILE_MAX_DOUBLINGS):
        grid = np.linspace(t_lo, t_hi, PROFILE_SEGMENT_POINTS + 1)
        vals = np.abs(memory.correlation_samples(j, grid))
        below = np.nonzero(vals < floor * g0)[0]
        if below.size:
            return g0, float(grid[below[0]]), True
        t_lo, t_hi = t_hi, 2.0 * t_hi
    return g0, t_lo, False


def tau_b_integral(j: bath.SpectralDensity, tau_ref: float) -> tuple[float, bool]:
    """First-moment correlation time with domain-doubling divergence detection.

    Integrates t|G| and |G| over windows [0, T], [T, 2T], ... with
    T = 4 * tau_ref. Convergent tails make the first-moment increments shrink
    geometrically; increments that stop shrinking flag the integral divergent
    and the returned value is math.inf.
    """
    if tau_ref <= 0:
        return 0.0, False
    t0 = 4.0 * tau_ref
    noise_floor = INTEGRAL_NOISE_RELATIVE * abs(j.zero_frequency_integral())
    num = den = 0.0
    increments = []
    lo = 0.0
    for k in range(INTEGRAL_DOUBLINGS):
        hi = t0 * 2.0**k
        grid = np.linspace(lo, hi, PROFILE_SEGMENT_POINTS + 1)
        vals = np.abs(memory.correlation_samples(j, grid))
        vals = np.where(vals > noise_floor, vals, 0.0)
        inc = float(np.trapezoid(grid * vals, grid))
        num += inc
        den += float(np.trapezoid(vals, grid))
        increments.append(inc)
        lo = hi
    if den == 0.0:
        return 0.0, False
    last, prev = increments[-1], increments[-2]
    # a dead tail (underflowed increments) is converged, not divergent
    shrinking = last == 0.0 or (prev > 0 and last / prev < INTEGRAL_CONVERGED_RATIO)
    small = last < INTEGRAL_CONVERGED_FRACTION * num
    if shrinking and small:
        return num / den, False
    return math.inf, True


# ---- per-transition quantities -------------------------------------------------


def _present_frequencies(eigsets: list) -> np.ndarray:
    """Frequencies carrying a nonzero eigenoperator in at least one coupling."""
    found = {}
    for es in eigsets:
        norms = [float(np.max(np.abs(op))) for op in es.operators]
        top = max(norms, default=0.0)
        for om, nrm in zip(es.omegas, norms):
            if nrm > PRESENT_NORM_FRACTION * top:
                key = float(om)
                found[key] = max(found.get(key, 0.0), nrm)
    return np.array(sorted(found), dtype=float)


def _window_grid(j: bath.SpectralDensity, lo: float, hi: float) -> np.ndarray:
    grid = np.linspace(lo, hi, WINDOW_GRID_POINTS)
    sharp = [w for (w, *_rest) in j.discontinuities() if lo < w < hi]
    eb = j.edge_behavior()
    if eb is not None and lo < eb[0] < hi:
        sharp.append(eb[0])
    if sharp:
        eps = 1e-9 * (hi - lo)
        extra = []
        for w in sharp:
            extra += [w - eps, w, w + eps]
        grid = np.sort(np.concatenate([grid, extra]))
    return grid


def probing_window_variation(
    j: bath.SpectralDensity,
    omega: float,
    tau_r: float,
    tau_b_threshold: float,
    window_factor: float,
) -> tuple[tuple, float]:
    """Probing window around a transition and the J variation inside it.

    A decaying transition samples J over a width ~ 1/tau_r around its
    frequency. When the transition does not decay (J(omega) = 0, tau_r
    infinite) the window falls back to the intrinsic width 1/tau_b_threshold,
    and any nonzero J inside it means the nearest spectral weight sits close
    enough to matter: the variation is then infinite.
    """
    if math.isfinite(tau_r) and tau_r > 0:
        half = window_factor / tau_r
    elif tau_b_threshold > 0:
        half = 1.0 / tau_b_threshold
    else:
        return (omega, omega), 0.0
    lo, hi = omega - half, omega + half
    grid = _window_grid(j, lo, hi)
    vals = np.asarray(j.evaluate(grid), dtype=float)
    j_at = float(j.evaluate(omega))
    if j_at <= 0.0:
        return (lo, hi), math.inf if np.any(vals > 0) else 0.0
    return (lo, hi), float(np.max(np.abs(vals - j_at)) / j_at)


def _transition_t_nm(j: bath.SpectralDensity, omega: float) -> float | None:
    if float(j.evaluate(omega)) <= 0.0:
        return None
    try:
        p = memory.ToyModelProblem(omega0=omega, j=j)
        t = memory.t_nm_estimate(p)
    except (ValueError, RuntimeError, memory.TailMetadataError, bath.BathEvaluationError):
        return None
    return None if not math.isfinite(t) else float(t)


# ---- the report ----------------------------------------------------------------


def timescales(
    h_s,
    eigsets: list,
    j: bath.SpectralDensity,
    thresholds: DiagnosticThresholds | None = None,
) -> TimescaleReport:
    """Assemble the full timescale hierarchy for one system-bath pair.

    h_s is accepted for interface symmetry with the generator builders; the
    frequencies actually used are the ones present in the eigenoperator sets.
    """
    th = thresholds or DiagnosticThresholds()
    qops.hermitian_operator(h_s)

    g0, tau_thr, _found = correlation_profile(j, th.correlation_floor)
    if g0 > 0:
        tb_int, divergent = tau_b_integral(j, tau_thr if tau_thr > 0 else 1.0)
    else:
        tb_int, divergent = 0.0, False

    omegas = _present_frequencies(eigsets)
    scales = []
    for om in omegas:
        j_val = float(j.evaluate(om))
        tau_r = 2.0 / j_val if j_val > 0 else math.inf
        tau_h = 1.0 / abs(om) if om != 0.0 else math.inf
        window, variation = probing_window_variation(
            j, float(om), tau_r, tau_thr, th.window_factor
        )
        scales.append(
            TransitionScales(
                omega=float(om),
                j_value=j_val,
                tau_r=tau_r,
                tau_h=tau_h,
                window=window,
                variation=variation,
                t_nm=_transition_t_nm(j, float(om)),
            )
        )

    n = len(scales)
    sec = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            gap = abs(scales[a].omega - scales[b].omega)
            sec[a, b] = gap * min(scales[a].tau_r, scales[b].tau_r)

    t_rwa = math.inf
    for a in range(n):
        for b in range(a + 1, n):
            if 0.0 < sec[a, b] <= th.rwa_pass:
                gap = abs(scales[a].omega - scales[b].omega)
                t_rwa = min(t_rwa, gap * min(scales[a].tau_r, scales[b].tau_r) ** 2)

    known_nm = [s.t_nm for s in scales if s.t_nm is not None]
    max_om = max((abs(s.omega) for s in scales), default=0.0)
    return TimescaleReport(
        tau_b_integral=tb_int,
        tau_b_divergent=divergent,
        tau_b_threshold=tau_thr,
        tau_h=1.0 / max_om if max_om > 0 else math.inf,
        correlation_scale=g0,
        coupling_parameter=math.sqrt(g0) * tau_thr,
        transitions=tuple(scales),
        secularity=sec,
        t_rwa=t_rwa,
        t_nm=min(known_nm) if known_nm else None,
        thresholds=th,
    )


# ---- the verdict ---------------------------------------------------------------


def _grade(value: float, pass_lt: float, marginal_lt: float) -> str:
    if value < pass_lt:
        return VERDICT_PASS
    if value < marginal_lt:
        return VERDICT_MARGINAL
    return VERDICT_FAIL


def verdict(report: TimescaleReport) -> ValidityVerdict:
    """Apply the threshold rules to a report; every entry cites its inputs."""
    th = report.thresholds

    c = report.coupling_parameter
    born = VerdictEntry(
        status=_grade(c, th.born_pass, th.born_marginal),
        rule=(
            f"coupling_parameter = |G(0)|^(1/2) * tau_b_threshold = {_fmt(c)}; "
            f"pass < {th.born_pass}, marginal < {th.born_marginal}"
        ),
        evidence={
            "coupling_parameter": c,
            "correlation_scale": report.correlation_scale,
            "tau_b_threshold": report.tau_b_threshold,
        },
    )

    tau_r_min = min((s.tau_r for s in report.transitions), default=math.inf)
    memory_time = min(report.tau_b_threshold, report.tau_h)
    if tau_r_min == 0.0:
        ratio = math.inf
    elif math.isinf(tau_r_min):
        ratio = 0.0 if math.isfinite(memory_time) else math.inf
    else:
        ratio = memory_time / tau_r_min
    variation = max((s.variation for s in report.transitions), default=0.0)
    ratio_grade = _grade(
        ratio, th.markov_ratio_pass, th.markov_ratio_pass * th.markov_relax
    )
    var_grade = _grade(
        variation, th.markov_variation_pass, th.markov_variation_pass * th.markov_relax
    )
    order = (VERDICT_PASS, VERDICT_MARGINAL, VERDICT_FAIL)
    markov_status = order[max(order.index(ratio_grade), order.index(var_grade))]
    triggers = []
    if ratio_grade != VERDICT_PASS:
        triggers.append(f"memory ratio {_fmt(ratio)} >= {th.markov_ratio_pass}")
    if var_grade != VERDICT_PASS:
        triggers.append(
            f"probing_window_variation {_fmt(variation)} >= {th.markov_variation_pass}"
        )
    markov = VerdictEntry(
        status=markov_status,
        rule=(
            f"min(tau_b_threshold, tau_h)/tau_r = {_fmt(ratio)} "
            f"(pass < {th.markov_ratio_pass}) and probing_window_variation = "
            f"{_fmt(variation)} (pass < {th.markov_variation_pass}); "
            f"marginal relaxes both by x{th.markov_relax:g}"
            + ("; triggered by " + ", ".join(triggers) if triggers else "")
        ),
        evidence={
            "tau_b_threshold": report.tau_b_threshold,
            "tau_b_integral": report.tau_b_integral,
            "tau_b_divergent": report.tau_b_divergent,
            "tau_h": report.tau_h,
            "tau_r_min": tau_r_min,
            "memory_ratio": ratio,
            "probing_window_variation": variation,
        },
    )

    off = report.secularity[~np.eye(len(report.transitions), dtype=bool)]
    live = off[off > 0.0]
    sec_min = float(np.min(live)) if live.size else math.inf
    if sec_min > th.rwa_pass:
        rwa_status = VERDICT_PASS
    elif sec_min > th.rwa_marginal:
        rwa_status = VERDICT_MARGINAL
    else:
        rwa_status = VERDICT_FAIL
    rwa = VerdictEntry(
        status=rwa_status,
        rule=(
            f"min nonzero secularity |dOmega|*tau_r = {_fmt(sec_min)}; "
            f"pass > {th.rwa_pass}, marginal > {th.rwa_marginal} "
            f"(entries equal to 0 are merged degeneracies and do not count)"
        ),
        evidence={"secularity_min": sec_min, "t_rwa": report.t_rwa},
    )
    return ValidityVerdict(born=born, markov=markov, rwa=rwa)


# ---- rendering -----------------------------------------------------------------


def _json_safe(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, (np.floating, np.integer)):
        return _json_safe(float(x))
    if isinstance(x, np.ndarray):
        return [_json_safe(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def report_json(report: TimescaleReport, result: ValidityVerdict) -> str:
    """Machine-readable report; keys sorted, infinities spelled out."""
    payload = {
        "timescales": {
            "tau_b_integral": report.tau_b_integral,
            "tau_b_divergent": report.tau_b_divergent,
            "tau_b_threshold": report.tau_b_threshold,
            "tau_h": report.tau_h,
            "correlation_scale": report.correlation_scale,
            "coupling_parameter": report.coupling_parameter,
            "t_rwa": report.t_rwa,
            "t_nm": report.t_nm,
            "transitions": [asdict(s) for s in report.transitions],
            "secularity": report.secularity,
        },
        "thresholds": asdict(report.thresholds),
        "verdicts": {
            "born": asdict(result.born),
            "markov": asdict(result.markov),
            "rwa": asdict(result.rwa),
            "overall": result.worst,
        },
    }
    return json.dumps(_json_safe(payload), indent=2, sort_keys=True)


def render_table(report: TimescaleReport, result: ValidityVerdict) -> str:
    """Human-readable summary: timescales, per-transition table, verdicts."""
    th = report.thresholds
    lines = []
    lines.append("timescale hierarchy")
    lines.append(f"  |G(0)|            {_fmt(report.correlation_scale)}")
    tb = "divergent" if report.tau_b_divergent else _fmt(report.tau_b_integral)
    lines.append(f"  tau_B (integral)  {tb}")
    lines.append(f"  tau_B (threshold) {_fmt(report.tau_b_threshold)}")
    lines.append(f"  tau_H             {_fmt(report.tau_h)}")
    lines.append(f"  coupling param    {_fmt(report.coupling_parameter)}")
    lines.append(f"  t_NM              {_fmt(report.t_nm)}")
    lines.append(f"  t_RWA             {_fmt(report.t_rwa)}")
    lines.append("")
    lines.append("transitions (omega, J(omega), tau_R, window variation, t_NM)")
    for s in report.transitions:
        lines.append(
            f"  {s.omega:+.6g}  {_fmt(s.j_value)}  {_fmt(s.tau_r)}"
            f"  {_fmt(s.variation)}  {_fmt(s.t_nm)}"
        )
    lines.append("")
    lines.append("verdicts")
    for name, entry in (("born", result.born), ("markov", result.markov), ("rwa", result.rwa)):
        lines.append(f"  {name:<7} {entry.status:<8} {entry.rule}")
    lines.append(f"  overall {result.worst}")
    lines.append("")
    lines.append(
        "thresholds: born < {0}/{1}, markov ratio < {2}, variation < {3} "
        "(marginal x{4:g}), rwa > {5}/{6}, window factor {7:g}, "
        "correlation floor {8:g}".format(
            th.born_pass,
            th.born_marginal,
            th.markov_ratio_pass,
            th.markov_variation_pass,
            th.markov_relax,
            th.rwa_pass,
            th.rwa_marginal,
            th.window_factor,
            th.correlation_floor,
        )
    )
    return "\n".join(lines)
