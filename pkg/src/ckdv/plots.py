"""Static SVG figures for run directories."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_META = {"Date": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return path


def plot_fields(path, grid, snapshots):
    """``snapshots``: list of ``(label, u_values, v_values)``."""
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for label, u, v in snapshots:
        axes[0].plot(grid.x, u, lw=1, label=label)
        axes[1].plot(grid.x, v, lw=1, label=label)
    axes[0].set_ylabel("u")
    axes[1].set_ylabel("v")
    axes[1].set_xlabel("x")
    axes[0].legend(fontsize=8)
    return _save(fig, path)


def plot_spectrum(path, grid, fields):
    """Log-magnitude spectra of ``(label, Field)`` pairs against ``|xi|``."""
    fig, ax = plt.subplots(figsize=(7, 4))
    order = np.argsort(grid.xi)
    for label, f in fields:
        mag = np.abs(f.coeffs)[order]
        ax.semilogy(grid.xi[order], np.maximum(mag, 1e-300), lw=0.8, label=label)
    ax.set_ylim(bottom=1e-18)
    ax.set_xlabel("xi")
    ax.set_ylabel("|c(xi)|")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_series(path, series, names=None, logy=True, ylabel=""):
    fig, ax = plt.subplots(figsize=(7, 4))
    for name in names or series.names:
        y = np.abs(series[name])
        if logy:
            ax.semilogy(series.times, np.maximum(y, 1e-18), label=name)
        else:
            ax.plot(series.times, y, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)
