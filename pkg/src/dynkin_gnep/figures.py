"""Figure rendering for solver runs.

Each function draws one diagnostic and writes it straight to a file, so the
command line can drop figures next to its delimited output.  The Agg backend
keeps rendering headless and deterministic.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import harmonic
from .rewards import GameSpec

DPI = 140


def _grid(n: int = 1025) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def reward_figure(spec: GameSpec, path: str) -> str:
    """Plot both players' stop and forced-stop rewards."""
    xs = _grid()
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    for ax, own, forced, label in (
        (axes[0], spec.f1, spec.g1, "player 1"),
        (axes[1], spec.f2, spec.g2, "player 2"),
    ):
        ax.plot(xs, own.piece_eval(xs), label="own stop reward")
        ax.plot(xs, forced.piece_eval(xs), label="opponent-stop reward")
        ax.axhline(0.0, color="gray", lw=0.6)
        ax.set_ylabel(label)
        ax.legend(loc="best", fontsize=8)
    axes[1].set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def payoff_figure(spec: GameSpec, lower: float, upper: float, path: str) -> str:
    """Plot the closed-form payoff maps of a threshold pair."""
    xs = _grid()
    m1 = harmonic.two_threshold_payoff(spec.f1, spec.g1, lower, upper)
    m2 = harmonic.two_threshold_payoff(spec.g2, spec.f2, lower, upper)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(xs, m1.piece_eval(xs), label="player 1 payoff")
    ax.plot(xs, m2.piece_eval(xs), label="player 2 payoff")
    for t, name in ((lower, "lower threshold"), (upper, "upper threshold")):
        ax.axvline(t, color="gray", lw=0.8, ls="--")
        ax.text(t, ax.get_ylim()[1], f" {name} {t:.4f}", fontsize=7, va="top")
    ax.set_xlabel("x")
    ax.set_ylabel("expected payoff")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def value_figure(sol, path: str, title: str = "auxiliary stopping problem") -> str:
    """Plot obstacle versus value with the contact set shaded."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(sol.xs, sol.obstacle, label="obstacle", lw=1.0)
    ax.plot(sol.xs, sol.value, label="value", lw=1.4)
    for a, b in sol.contact:
        ax.axvspan(a, b, color="tab:orange", alpha=0.18, lw=0)
    if sol.threshold is not None:
        ax.axvline(sol.threshold, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("x")
    ax.set_title(title, fontsize=10)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def trace_figure(solution, path: str) -> str:
    """Plot the best-response iteration: thresholds per sweep and residuals."""
    trace = np.asarray(solution.trace, dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    its = np.arange(1, trace.shape[0] + 1)
    axes[0].plot(its, trace[:, 0], marker="o", ms=3, label="lower")
    axes[0].plot(its, trace[:, 1], marker="s", ms=3, label="upper")
    axes[0].set_xlabel("sweep")
    axes[0].set_ylabel("threshold")
    axes[0].legend(loc="best", fontsize=8)
    res = np.asarray(solution.residuals, dtype=float)
    pos = res > 0
    axes[1].semilogy(its[pos], res[pos], marker="o", ms=3)
    axes[1].set_xlabel("sweep")
    axes[1].set_ylabel("lower-threshold movement")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def stability_figure(report, path: str) -> str:
    """Plot the best-response contraction factor across anchor points."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(report.w_samples, report.t_samples, lw=1.2)
    ax.axhline(1.0, color="tab:red", lw=0.8, ls="--", label="contraction limit")
    ax.plot(
        [report.argmax_w], [report.sup_value], marker="o", color="tab:red",
        label=f"sup {report.sup_value:.3g}",
    )
    ax.set_xlabel("anchor point")
    ax.set_ylabel("|response slope product|")
    ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def mc_figure(check, path: str) -> str:
    """Plot simulated payoffs with error bars over the closed-form curves."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    starts = [r.start for r in check.reports]
    for picks, closed, label, color in (
        ([r.payoff1 for r in check.reports],
         [r.closed_payoff1 for r in check.reports], "player 1", "tab:blue"),
        ([r.payoff2 for r in check.reports],
         [r.closed_payoff2 for r in check.reports], "player 2", "tab:green"),
    ):
        ax.errorbar(
            starts,
            [e.value for e in picks],
            yerr=[3.0 * e.se for e in picks],
            fmt="o", ms=3, capsize=2, label=f"{label} simulated", color=color,
        )
        ax.plot(starts, closed, lw=0.9, color=color, alpha=0.6)
    ax.set_xlim(check.lower, check.upper)
    ax.set_xlabel("start point")
    ax.set_ylabel("payoff")
    ax.set_title(
        f"{check.paths} paths, dt {check.dt:g}, bars 3 SE", fontsize=9,
    )
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def transform_figure(result, path: str) -> str:
    """Plot the space transform and, when discounted, its eigenfunctions."""
    zs = np.linspace(0.0, 1.0, 513)
    two = result.falling is not None
    fig, axes = plt.subplots(1, 2 if two else 1, figsize=(9.0 if two else 6.0, 3.8))
    ax0 = axes[0] if two else axes
    ax0.plot(zs, result.forward(zs), lw=1.2)
    ax0.set_xlabel("source position")
    ax0.set_ylabel("transformed position")
    ax0.set_title("coordinate map", fontsize=9)
    if two:
        axes[1].plot(zs, result.rising(zs), label="rising solution")
        axes[1].plot(zs, result.falling(zs), label="falling solution")
        axes[1].set_xlabel("source position")
        axes[1].set_title("discount eigenfunctions", fontsize=9)
        axes[1].legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def deviation_figure(scan, path: str) -> str:
    """Plot deviation improvements with their 3 SE bands."""
    ts = [p.threshold for p in scan.points]
    vals = [p.improvement for p in scan.points]
    bands = [3.0 * p.se for p in scan.points]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.errorbar(ts, vals, yerr=bands, fmt="o", ms=3, capsize=2)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.axvline(scan.base_threshold, color="tab:red", lw=0.8, ls="--",
               label=f"equilibrium threshold {scan.base_threshold:.4f}")
    ax.set_xlabel(f"player {scan.player} deviation threshold")
    ax.set_ylabel("payoff improvement")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
