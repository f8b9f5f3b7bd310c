"""PNG figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_trajectory", "plot_sweep", "plot_convergence", "plot_compare"]


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-stable
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trajectory(path, t, u, x, phi, control_names=None, state_names=None):
    """Controls, states and switching functions on one figure."""
    u, x, phi = np.atleast_2d(u), np.atleast_2d(x), np.atleast_2d(phi)
    N = u.shape[1]
    cn = control_names or [f"u_{j + 1}" for j in range(u.shape[0])]
    sn = state_names or [f"x_{i + 1}" for i in range(x.shape[0])]
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for j, row in enumerate(u):
        axes[0].step(t[:N], row, where="post", label=cn[j])
    axes[0].set_ylabel("control")
    for i, row in enumerate(x):
        axes[1].plot(t, row, label=sn[i])
    axes[1].set_ylabel("state")
    for j, row in enumerate(phi):
        axes[2].plot(t[:N], row, label=f"phi ({cn[j]})")
    axes[2].axhline(0.0, color="0.5", lw=0.8)
    axes[2].set_ylabel("switching function")
    axes[2].set_xlabel("t")
    for ax in axes:
        ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_sweep(path, t, controls, rhos):
    """Control of the first channel for each penalty value."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for u, r in zip(controls, rhos):
        if u is not None:
            ax.step(t[: len(u)], u, where="post", label=f"rho = {r:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_convergence(path, table):
    """``ln err`` against ``ln h`` with both fitted lines."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x, y = np.log(table.h), np.log(table.err)
    ax.plot(x[~table.outliers], y[~table.outliers], "o", label="data")
    if table.outliers.any():
        ax.plot(x[table.outliers], y[table.outliers], "x", ms=9, label="outlier")
    xs = np.linspace(x.min(), x.max(), 2)
    if table.fit is not None:
        ax.plot(xs, table.fit.slope * xs + table.fit.intercept, "--",
                label=f"all points, slope {table.fit.slope:.4f}")
    if table.fit_without_outliers is not None and table.outliers.any():
        f = table.fit_without_outliers
        ax.plot(xs, f.slope * xs + f.intercept, "-", label=f"without outliers, slope {f.slope:.4f}")
    ax.set_xlabel("ln h")
    ax.set_ylabel("ln err")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_compare(path, t, u_num, u_exact):
    """Numerical against analytic control."""
    N = len(u_num)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(t[:N], u_num, where="post", label="numerical")
    ax.plot(t[:N], u_exact, "--", label="exact")
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)
