"""Matplotlib rendering for the CLI report paths.

Figures are written next to the delimited outputs with fixed names and
deterministic content (headless Agg backend, pinned metadata, no
timestamps).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_contract_figure",
    "save_moments_figure",
    "save_sweep_figure",
    "save_terms_figure",
    "save_simulation_figure",
]

_SAVE_KW = dict(dpi=150, bbox_inches="tight", metadata={"Software": "hawkes-reinsurance"})


def _finish(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_contract_figure(z: np.ndarray, phi: np.ndarray, path: Path,
                         a: float | None = None, b: float | None = None,
                         label: str = "contract") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(z, z, "--", color="0.6", lw=1, label="full cover")
    ax.plot(z, phi, color="C0", lw=2, label=label)
    for x, name in ((a, "a"), (b, "b")):
        if x is not None:
            ax.axvline(x, color="0.4", ls=":", lw=1)
            ax.annotate(name, (x, 0), xytext=(x, -0.04 * z[-1]),
                        ha="center", va="top", annotation_clip=False)
    ax.set_xlabel("claim size z")
    ax.set_ylabel("covered amount")
    ax.set_xlim(0, z[-1])
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_moments_figure(t: np.ndarray, m: np.ndarray, m2: np.ndarray, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(t, m, color="C0")
    ax1.set_xlabel("t (years)")
    ax1.set_ylabel("mean intensity")
    ax2.plot(t, m2, color="C1")
    ax2.set_xlabel("t (years)")
    ax2.set_ylabel("second moment of intensity")
    fig.tight_layout()
    return _finish(fig, path)


def save_sweep_figure(lams, slopes, avals, bvals, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    for ax, y, name in zip(axes, (slopes, avals, bvals), ("slope", "a", "b")):
        ax.plot(lams, y, "o-", color="C0", ms=4)
        ax.set_xlabel("feedback slope")
        ax.set_ylabel(name)
        ax.set_xscale("log")
        if name == "b":
            ax.set_yscale("log")
    fig.tight_layout()
    return _finish(fig, path)


def save_terms_figure(terms: dict[str, float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(terms)
    vals = [terms[k] for k in names]
    ax.barh(range(len(names)), vals, color=["C0" if v >= 0 else "C3" for v in vals])
    ax.set_yticks(range(len(names)), names)
    ax.axvline(0, color="0.3", lw=1)
    ax.set_xlabel("criterion contribution")
    fig.tight_layout()
    return _finish(fig, path)


def save_simulation_figure(times: np.ndarray, intensities: np.ndarray, horizon: float,
                           counts: np.ndarray, path: Path) -> Path:
    """One sample intensity staircase plus the count histogram of the batch."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax1.step(times, intensities, where="post", color="C0", lw=1)
    ax1.set_xlabel("t (years)")
    ax1.set_ylabel("intensity after event")
    ax1.set_xlim(0, horizon)
    ax2.hist(counts, bins=min(50, max(10, int(counts.max() - counts.min() + 1))),
             color="C0", alpha=0.8)
    ax2.set_xlabel("claims per path")
    ax2.set_ylabel("paths")
    fig.tight_layout()
    return _finish(fig, path)
