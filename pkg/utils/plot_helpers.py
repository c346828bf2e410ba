"""
SVG plots for run outputs: risk curves, certificate scans, kernel-difference profiles.

Uses the Agg backend with a fixed SVG hash salt and no date metadata so the
same data always yields the same file.
"""

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "offgrid"
matplotlib.rcParams["svg.fonttype"] = "none"

SVG_METADATA = {"Date": None}


def _save(fig, path: Path | str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(p, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    return p


def plot_risk_curves(path: Path | str, rows: Sequence, title: str = "") -> Path:
    """Empirical total risk vs rho per test, with the T1 bound where available."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for which in sorted({r.which for r in rows}):
        sel = [r for r in rows if r.which == which]
        rho = np.array([r.rho for r in sel])
        total = np.array([r.total for r in sel])
        se = np.hypot([r.se_I for r in sel], [r.se_II for r in sel])
        ax.errorbar(rho, total, yerr=se, marker="o", capsize=2, label=f"{which} empirical")
        bound = np.array([r.bound for r in sel])
        if np.any(np.isfinite(bound)):
            ax.plot(rho, bound, linestyle="--", label=f"{which} bound")
    ax.set_xlabel("rho")
    ax.set_ylabel("type I + type II")
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_detection(path: Path | str, rows: Sequence) -> Path:
    """Empirical minimal separation against rho_min for each (s, T)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for T in sorted({r.T for r in rows}):
        sel = sorted((r for r in rows if r.T == T), key=lambda r: r.s)
        s = [r.s for r in sel]
        ax.plot(s, [r.rho_empirical for r in sel], marker="o", label=f"T={T} empirical")
        ax.plot(s, [r.rho_min for r in sel], linestyle="--", label=f"T={T} rho_min")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("s")
    ax.set_ylabel("rho")
    ax.legend()
    return _save(fig, path)


def plot_certificate(path: Path | str, grid: np.ndarray, profile: np.ndarray, anchors: np.ndarray) -> Path:
    """Scanned <phi_T(theta), p> with the anchors marked."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(grid, profile, linewidth=1)
    for q in anchors:
        ax.axvline(q, color="grey", linewidth=0.6, linestyle=":")
    ax.axhline(1.0, color="black", linewidth=0.5)
    ax.axhline(-1.0, color="black", linewidth=0.5)
    ax.set_xlabel("theta")
    ax.set_ylabel("certificate")
    return _save(fig, path)


def plot_kernel_difference(path: Path | str, offsets: np.ndarray, profile: np.ndarray, V_T: float) -> Path:
    """Max |K_T - K_prox| per offset, with the overall V_T level."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(offsets, profile, linewidth=1)
    ax.axhline(V_T, color="black", linewidth=0.5, linestyle="--")
    ax.set_xlabel("theta - theta'")
    ax.set_ylabel("max |K - K_prox|")
    return _save(fig, path)


def plot_mixture(path: Path | str, t: np.ndarray, y: np.ndarray, fitted: np.ndarray | None, spikes: Sequence) -> Path:
    """Observation (or its grid samples) with the fitted curve and spike stems."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, y, linewidth=0.8, label="observation")
    if fitted is not None:
        ax.plot(t, fitted, linewidth=1, label="fit")
    for b, th in spikes:
        ax.vlines(th, 0, b, color="tab:red", linewidth=1)
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)
