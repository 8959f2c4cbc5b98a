"""PNG figures of the statistics, rendered off-screen."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .master import CorrelationCurve  # noqa: E402


def plot_wtd(x: np.ndarray, w: np.ndarray, err: np.ndarray, path: str | Path,
             channel: str, reference: tuple[np.ndarray, np.ndarray] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(x, w, yerr=err, fmt=".", ms=3, lw=0.6, label="trajectories")
    if reference is not None:
        ax.plot(*reference, "-", lw=1.2, label="master equation")
    ax.set_xlabel(r"$\tau/\bar\tau$")
    ax.set_ylabel(r"$\bar\tau\,W(\tau)$")
    ax.set_title(f"waiting-time distribution, channel {channel}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_awtd(x: np.ndarray, density: np.ndarray, path: str | Path, channel: str) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    w = x[1] - x[0] if x.size > 1 else 1.0
    extent = (0, x[-1] + w / 2, 0, x[-1] + w / 2)
    im = ax.imshow(density.T, origin="lower", extent=extent, cmap="viridis", aspect="equal")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel(r"$\tau_1/\bar\tau$")
    ax.set_ylabel(r"$\tau_2/\bar\tau$")
    ax.set_title(f"adjacent waiting times, channel {channel}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_g2(curves: Sequence[CorrelationCurve], path: str | Path,
            extra: Sequence[tuple[np.ndarray, np.ndarray, str]] = ()) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for c in curves:
        label = f"{c.channel} {c.source}"
        if c.stderr is not None and np.any(c.stderr > 0):
            ax.errorbar(c.taus, c.values, yerr=c.stderr, fmt=".", ms=3, lw=0.6, label=label)
        else:
            ax.plot(c.taus, c.values, "-", lw=1.2, label=label)
    for x, y, label in extra:
        ax.plot(x, y, "--", lw=1.0, label=label)
    ax.axhline(1.0, color="0.6", lw=0.6)
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel(r"$g^{(2)}(\tau)$")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
