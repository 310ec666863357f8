"""PNG renderings of the K-sweep series written next to the CSV files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .parametrization import eval_control  # noqa: E402


def _axes(width=6.0, height=None):
    height = height or width * (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(True, lw=0.4, alpha=0.5)
    return fig, ax


def plot_distance_vs_k(ks, distances, path):
    fig, ax = _axes()
    ax.plot(ks, distances, "o-", color="C0")
    ax.set_xlabel("number of harmonics K")
    ax.set_ylabel(r"distance $|z(\tau_f) - z(\tau_0)|$")
    ax.set_xticks(list(ks))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_positions(trajectories: dict, path):
    fig, ax = _axes()
    for k, traj in trajectories.items():
        ax.plot(traj.tau, traj.z, lw=0.9, label=f"K = {k}")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel(r"$z(\tau)$")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_controls(controls: dict, path, n=2000):
    """Controls over the longest fundamental period among them."""
    fig, ax = _axes()
    longest = max(2.0 * math.pi / c.omega for c in controls.values())
    tau = np.linspace(0.0, longest, n)
    for k, ctrl in controls.items():
        ax.plot(tau, eval_control(ctrl, tau), lw=0.9, label=f"K = {k}")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel(r"$u_1(\tau)$")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(out_dir, ks, manifests, trajectories, controls) -> list[Path]:
    out = Path(out_dir)
    paths = [out / "fig5.png", out / "fig6.png", out / "fig7.png"]
    plot_distance_vs_k(ks, [m["distance"] for m in manifests], paths[0])
    plot_positions(trajectories, paths[1])
    plot_controls(controls, paths[2])
    return paths
