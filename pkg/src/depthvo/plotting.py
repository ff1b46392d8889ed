"""Deterministic SVG trajectory plots rendered next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt

from .geometry import Trajectory


def plot_trajectory_topdown(path, est: Trajectory, gt: Trajectory | None = None):
    """Top-down (x vs z) plot of camera centers, written as SVG."""
    plt.rcParams["svg.hashsalt"] = "depthvo"
    fig, ax = plt.subplots(figsize=(6, 6))
    pos = est.positions()
    ax.plot(pos[:, 0], pos[:, 2], "-", color="tab:blue", label="estimated")
    if gt is not None:
        gpos = gt.positions()
        ax.plot(gpos[:, 0], gpos[:, 2], "--", color="tab:gray", label="ground truth")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
