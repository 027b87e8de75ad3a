"""Figure rendering for run reports.

Every figure is written next to the delimited plot tables produced by
``emit_plot_data``. PNG output strips the writer metadata so reruns of the
same data are byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def schedule_figure(ks, alphas, decays, path):
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(ks, alphas, lw=0.8, label="cyclical")
    if decays is not None:
        ax.plot(ks, decays, lw=0.8, label="decay")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("stepsize")
    ax.legend(frameon=False)
    _save(fig, path)


def density_figure(hist, xedges, yedges, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(hist.T, origin="lower", aspect="auto", cmap="viridis",
              extent=[xedges[0], xedges[-1], yedges[0], yedges[-1]])
    ax.set_xlabel("theta_0")
    ax.set_ylabel("theta_1")
    _save(fig, path)


def bar_figure(labels, values, path, errs=None, ylabel=""):
    fig, ax = plt.subplots(figsize=(4.5, 3))
    x = np.arange(len(labels))
    ax.bar(x, values, yerr=errs, capsize=3 if errs is not None else 0,
           color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    _save(fig, path)


def loglog_figure(series, path, xlabel="", ylabel=""):
    """``series``: mapping label -> list of (x, y) pairs."""
    fig, ax = plt.subplots(figsize=(4.5, 3))
    for label in sorted(series):
        pairs = sorted(series[label])
        ax.loglog([p[0] for p in pairs], [p[1] for p in pairs],
                  marker="o", label=f"alpha0={label}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    _save(fig, path)
