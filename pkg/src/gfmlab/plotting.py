"""Static SVG plots of simulated channels (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_CHANNEL_META = (
    ("frequency", "f (Hz)"),
    ("voltage", "|V_o| (pu)"),
    ("active power", "P (pu)"),
    ("reactive power", "Q (pu)"),
)


def plot_channels(times: np.ndarray, channels: np.ndarray, path: str | Path, title: str = "") -> Path:
    """Write one SVG with the four per-DER channels stacked vertically.

    channels has shape (n_samples, n_der, 4) ordered (f_hz, v_pu, p_pu, q_pu).
    """
    path = Path(path).with_suffix(".svg")
    n_der = channels.shape[1]
    fig, axes = plt.subplots(4, 1, figsize=(9, 10), sharex=True)
    for c, (name, ylabel) in enumerate(_CHANNEL_META):
        ax = axes[c]
        for k in range(n_der):
            ax.plot(times, channels[:, k, c], lw=0.9, label=f"DER {k + 1}")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8, ncol=min(n_der, 4))
    axes[-1].set_xlabel("t (s)")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_csv(csv_path: str | Path, out_path: str | Path, title: str = "") -> Path:
    """Re-plot a previously written trajectory CSV."""
    from .engine import read_channels_csv

    times, data, _ = read_channels_csv(csv_path)
    n_der = data.shape[1] // 4
    channels = data.reshape(len(times), n_der, 4)
    return plot_channels(times, channels, out_path, title=title)
