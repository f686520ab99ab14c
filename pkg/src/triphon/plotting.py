"""Quick-look figures for the CLI report path (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_trajectory", "plot_coupling_sweep", "plot_wigner",
           "plot_robustness", "plot_fidelity_curve"]


def plot_trajectory(traj, path, title=""):
    """Phonon and qubit populations (and purity) over the run."""
    fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5),
                                  height_ratios=[2.2, 1])
    t_ns = traj.t * 1e9
    ax.plot(t_ns, traj.n_m, label=r"$\langle b^\dagger b\rangle$", color="tab:red")
    ax.plot(t_ns, traj.n_q1, label=r"$\langle c_1^\dagger c_1\rangle$", color="tab:blue")
    ax.plot(t_ns, traj.n_q2, label=r"$\langle c_2^\dagger c_2\rangle$",
            color="tab:blue", ls="--")
    ax.set_ylabel("occupation")
    ax.legend(loc="best", frameon=False)
    if title:
        ax.set_title(title)
    ax2.plot(t_ns, traj.purity, color="tab:gray")
    ax2.set_ylabel(r"Tr $\rho^2$")
    ax2.set_xlabel("t (ns)")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def plot_coupling_sweep(rows, path):
    """Tripartite and radiation-pressure rates vs flux bias."""
    import math

    phi = [r[0] for r in rows]
    tp = 2 * math.pi
    fig, (ax, axj) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax.plot(phi, [abs(c.g) / tp / 1e6 for _, c in rows], color="tab:red",
            label=r"$|g|$")
    ax.plot(phi, [abs(c.g1) / tp / 1e6 for _, c in rows], color="tab:blue",
            label=r"$|g_1|$")
    ax.plot(phi, [abs(c.g2) / tp / 1e6 for _, c in rows], color="tab:blue",
            ls="--", label=r"$|g_2|$")
    ax.set_xlabel(r"$\Phi_b/\Phi_0$")
    ax.set_ylabel("coupling / 2$\\pi$ (MHz)")
    ax.legend(frameon=False)
    axj.plot(phi, [c.JL / tp / 1e6 for _, c in rows], label=r"$J_L$")
    axj.plot(phi, [c.JC / tp / 1e6 for _, c in rows], label=r"$J_C$")
    axj.plot(phi, [c.J_eff / tp / 1e6 for _, c in rows], label=r"$J_{eff}$")
    axj.set_xlabel(r"$\Phi_b/\Phi_0$")
    axj.set_ylabel("exchange / 2$\\pi$ (MHz)")
    axj.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def plot_wigner(grid, path, title=""):
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    vmax = float(np.max(np.abs(grid.W)))
    pcm = ax.pcolormesh(grid.xs, grid.ps, grid.W, cmap="RdBu_r",
                        vmin=-vmax, vmax=vmax, shading="auto")
    fig.colorbar(pcm, ax=ax, label="W")
    ax.set_xlabel(r"Re $\alpha$")
    ax.set_ylabel(r"Im $\alpha$")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def plot_robustness(rows, path, xlabel):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    xs = [r["value"] for r in rows]
    ax.plot(xs, [r["prep_fidelity"] for r in rows], "o-", label="at $t_\\pi$")
    ax.plot(xs, [r["peak_fidelity"] for r in rows], "s--", label="peak")
    if any(abs(x) > 0 for x in xs) and min(x for x in xs if x > 0) > 0 \
            and max(xs) / max(min(x for x in xs if x > 0), 1e-30) > 50:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fidelity")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def plot_fidelity_curve(curve, path, title=""):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot([t * 1e9 for t, _ in curve], [f for _, f in curve], color="tab:green")
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("fidelity to ideal evolution")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path
