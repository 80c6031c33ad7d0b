"""Figures written next to the CSV/JSON outputs.

Everything renders off-screen with the Agg backend.  PNG metadata is
stripped so identical data produce identical files.
"""
from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "image.cmap": "viridis",
}

TRUTH_COLOR = "tab:red"


def figsize(scale=1.0, ratio=None):
    width = 6.4 * scale
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def save(fig, path):
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)


def plot_matrices(path, recon, truth=None, titles=("truth", "reconstruction")):
    """Heatmaps of the parameter matrix, truth and reconstruction on one colour scale."""
    with plt.rc_context(STYLE):
        mats = [truth, recon] if truth is not None else [recon]
        labels = list(titles) if truth is not None else [titles[1]]
        vmax = max(np.abs(m).max() for m in mats) or 1.0
        fig, axes = plt.subplots(1, len(mats), figsize=figsize(0.45 * len(mats) + 0.2, 0.5 if truth is not None else 0.9))
        axes = np.atleast_1d(axes)
        for ax, mat, label in zip(axes, mats, labels):
            im = ax.imshow(mat, vmin=-vmax, vmax=vmax, cmap="RdBu_r")
            ax.set_title(label)
            ax.set_xticks(range(mat.shape[0]))
            ax.set_yticks(range(mat.shape[0]))
        fig.colorbar(im, ax=list(axes), shrink=0.8)
        save(fig, path)


def plot_convergence(path, n, misfit, drift_norm=None):
    """Moment misfit (or drift norm where no oracle is available) against iteration."""
    n = np.asarray(n)
    misfit = np.asarray(misfit, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.7))
        ok = np.isfinite(misfit)
        if ok.any():
            ax.loglog(n[ok], misfit[ok], lw=0.8, label=r"$\|m - \Pi(\phi|\lambda^n)\|_\infty$")
        if drift_norm is not None:
            ax.loglog(n, np.asarray(drift_norm), lw=0.5, alpha=0.5, label="drift norm")
        ax.set_xlabel("iteration n")
        ax.set_ylabel("error")
        ax.legend(frameon=False)
        save(fig, path)


def plot_moments(path, observed, fitted, labels=None):
    """Observed against fitted moments, with the identity line."""
    observed = np.asarray(observed)
    fitted = np.asarray(fitted)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.5, 1.0))
        ax.plot([0, 1], [0, 1], color="0.7", lw=0.8)
        ax.scatter(observed, fitted, s=12)
        ax.set_xlabel("observed moment")
        ax.set_ylabel("fitted moment")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        save(fig, path)


def plot_pairwise(path, summary, truth=None, names=None):
    """Corner plot: marginal histograms on the diagonal, 2-D histograms below."""
    coords = summary.coords
    k = len(coords)
    names = names or [f"$\\lambda_{{{c + 1}}}$" for c in coords]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(k, k, figsize=(1.8 * k, 1.8 * k), squeeze=False)
        for a in range(k):
            for b in range(k):
                ax = axes[a, b]
                if b > a:
                    ax.axis("off")
                    continue
                if a == b:
                    edges, counts = summary.marginals[a]
                    ax.stairs(counts, edges, fill=True, alpha=0.6)
                    if truth is not None:
                        ax.axvline(truth[coords[a]], color=TRUTH_COLOR, lw=1)
                    ax.set_yticks([])
                else:
                    xe, ye, h = summary.pairwise[(coords[b], coords[a])]
                    ax.pcolormesh(xe, ye, h.T, cmap="Greys")
                    if truth is not None:
                        ax.plot(truth[coords[b]], truth[coords[a]], "o", ms=3, color=TRUTH_COLOR)
                if a == k - 1:
                    ax.set_xlabel(names[b])
                if b == 0 and a > 0:
                    ax.set_ylabel(names[a])
        save(fig, path)


def plot_chain(path, n, lambdas, truth=None):
    lambdas = np.asarray(lambdas)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ax.plot(n, lambdas, lw=0.4)
        if truth is not None:
            for t in truth:
                ax.axhline(t, color=TRUTH_COLOR, lw=0.5, ls="--")
        ax.set_xscale("log")
        ax.set_xlabel("step n")
        ax.set_ylabel(r"$\lambda$")
        save(fig, path)
