"""Static figures for result bundles (Agg backend, PNG output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = ("#1f77b4", "#d62728")


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_worldlines(traj1, traj2, path, *, free=None, n: int = 600) -> None:
    """x-y projection and x against t.  ``free`` marks the free ranges with solid lines."""
    fig, (ax_xy, ax_t) = plt.subplots(1, 2, figsize=(10, 4.2))
    for k, traj in enumerate((traj1, traj2)):
        ts = np.linspace(traj.t_start, traj.t_end, n)
        x = traj.position(ts)
        ax_xy.plot(x[:, 0], x[:, 1], color=COLORS[k], lw=0.8, alpha=0.5)
        ax_t.plot(ts, x[:, 0], color=COLORS[k], lw=0.8, alpha=0.5)
        if free is not None:
            tf = np.linspace(*free[k], n)
            xf = traj.position(tf)
            ax_xy.plot(xf[:, 0], xf[:, 1], color=COLORS[k], lw=1.8, label=f"particle {k + 1}")
            ax_t.plot(tf, xf[:, 0], color=COLORS[k], lw=1.8)
    ax_xy.set_xlabel("x")
    ax_xy.set_ylabel("y")
    ax_xy.set_aspect("equal", adjustable="datalim")
    ax_t.set_xlabel("t")
    ax_t.set_ylabel("x")
    if free is not None:
        ax_xy.legend(frameon=False)
    _finish(fig, path)


def plot_series(data: dict[int, dict], path) -> None:
    """Momentum components and Legendre transform against time."""
    fig, (ax_p, ax_e) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for particle, s in sorted(data.items()):
        c = COLORS[(particle - 1) % 2]
        for j, style in enumerate(("-", "--", ":")):
            ax_p.plot(s["t"], s["P"][:, j], style, color=c, lw=1.0, label=f"P{'xyz'[j]} ({particle})")
        ax_e.plot(s["t"], s["E"], color=c, lw=1.2, label=f"particle {particle}")
    ax_p.set_ylabel("P")
    ax_p.legend(frameon=False, ncol=2, fontsize=8)
    ax_e.set_xlabel("t")
    ax_e.set_ylabel("E")
    ax_e.legend(frameon=False)
    _finish(fig, path)


def plot_history(values, path) -> None:
    """Action against accepted iterate."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    vals = np.asarray(values, dtype=float)
    ax.plot(np.arange(vals.size), vals, lw=1.2)
    ax.set_xlabel("iterate")
    ax.set_ylabel("S")
    _finish(fig, path)


__all__ = ["plot_history", "plot_series", "plot_worldlines"]
