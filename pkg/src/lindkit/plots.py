"""Figure output for the command line tools.

Every report path writes a PNG next to the CSV/JSON data so a run can
be eyeballed without firing up a plotting stack.  The Agg backend is
forced so the tools work headless, and figures carry no timestamps or
other run-dependent metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["line_plot", "verdict_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def line_plot(path, x, curves, labels, xlabel, ylabel, title=None,
              logx=False, logy=False, hlines=(), extra=()):
    """Overlay a handful of curves and write the figure to ``path``.

    ``curves`` is a sequence of y-arrays; entries may be shorter than
    ``x`` (they are drawn against their own prefix of the grid).
    ``extra`` holds (x, y, label) triples on their own grids, drawn as
    markers.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for i, (y, lab) in enumerate(zip(curves, labels)):
        y = np.asarray(y)
        xs = np.asarray(x)[: y.size]
        ax.plot(xs, y[: xs.size], label=lab, color=_COLORS[i % len(_COLORS)], lw=1.4)
    for k, (xs, y, lab) in enumerate(extra):
        ax.plot(xs, y, "o", ms=3.5, label=lab,
                color=_COLORS[(len(curves) + k) % len(_COLORS)])
    for level, lab in hlines:
        ax.axhline(level, color="k", ls=":", lw=0.9)
        ax.annotate(lab, (0.99, level), xycoords=("axes fraction", "data"),
                    ha="right", va="bottom", fontsize=8)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(labels):
        ax.legend(loc="best", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def verdict_plot(path, j, report):
    """Spectral density with transition markers and probing windows."""
    transitions = [t for t in report.transitions]
    omegas = [t.omega for t in transitions]
    lo = min([w for (w, _) in (t.window for t in transitions)] + [min(omegas)])
    hi = max([w for (_, w) in (t.window for t in transitions)] + [max(omegas)])
    pad = 0.25 * (hi - lo) if hi > lo else 1.0
    grid = np.linspace(lo - pad, hi + pad, 801)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(grid, j.evaluate(grid), color=_COLORS[0], lw=1.4, label="J(omega)")
    for i, t in enumerate(transitions):
        ax.axvline(t.omega, color=_COLORS[1], lw=0.9, ls="--",
                   label="transitions" if i == 0 else None)
        wlo, whi = t.window
        if np.isfinite(wlo) and np.isfinite(whi):
            ax.axvspan(wlo, whi, color=_COLORS[1], alpha=0.12)
    ax.set_xlabel("omega")
    ax.set_ylabel("J(omega)")
    ax.set_title("probing windows")
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
