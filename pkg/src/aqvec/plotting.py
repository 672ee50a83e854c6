"""Figures rendered from run outputs: overlap sequences, qubit scaling, training curves."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path) -> None:
    # no timestamps in PNG metadata so reruns stay byte-stable
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_overlap_sequence(frames, s_values, path, labels=None, ncols: int = 4) -> None:
    """Grid of overlap matrices from ``s = 0`` (top left) to ``s = 1`` (bottom right)."""
    frames = list(frames)
    nrows = math.ceil(len(frames) / ncols)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(2.0 * ncols, 2.0 * nrows), squeeze=False)
        boundaries = []
        if labels is not None:
            labels = np.asarray(labels)
            boundaries = np.flatnonzero(np.diff(labels)) + 0.5
        for ax in axes.flat:
            ax.axis("off")
        for ax, m, s in zip(axes.flat, frames, s_values):
            ax.imshow(m, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
            for b in boundaries:
                ax.axhline(b, color="tab:red", lw=0.4)
                ax.axvline(b, color="tab:red", lw=0.4)
            ax.set_title(f"s = {s:.2f}")
        _save(fig, path)


def plot_scaling(rows, path, title: str | None = None) -> None:
    """Train and test accuracy (mean and std over seeds) versus qubit count."""
    q = np.array([r["n_qubits"] for r in rows])
    with plt.rc_context(STYLE):
        fig, (ax_tr, ax_te) = plt.subplots(1, 2, figsize=(7.0, 2.8), sharey=True)
        for ax, key, name in ((ax_tr, "train", "(a) training set"), (ax_te, "test", "(b) test set")):
            mean = np.array([r[f"{key}_mean"] for r in rows])
            std = np.array([r[f"{key}_std"] for r in rows])
            ax.errorbar(q, mean, yerr=std, marker="o", capsize=3)
            ax.set_xlabel("number of qubits")
            ax.set_title(name)
            ax.set_xticks(q)
            ax.grid(alpha=0.3)
        ax_tr.set_ylabel("accuracy")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_training_curve(history, path) -> None:
    epochs = [r.epoch for r in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        ax.plot(epochs, [r.loss for r in history], color="tab:blue")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss", color="tab:blue")
        ax2 = ax.twinx()
        ax2.plot(epochs, [r.train_accuracy for r in history], color="tab:orange")
        ax2.set_ylabel("train accuracy", color="tab:orange")
        ax2.set_ylim(0.0, 1.02)
        _save(fig, path)
