"""Matplotlib figures for the ``report`` subcommand."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PANEL_TITLES = {
    "logmelspec": "logmelspec",
    "logmelspec_enh": "enhanced logmelspec",
    "meldiffuseness": "meldiffuseness",
    "melmsc": "melmsc",
}


def plot_feature_panels(matrix, path, names=None):
    """One heatmap per feature block, stacked vertically, time on the x axis."""
    names = names or [n for n, _ in matrix.layout]
    t = np.arange(matrix.n_frames) * matrix.frame_period_s
    fig, axes = plt.subplots(len(names), 1, figsize=(7.0, 1.6 * len(names) + 0.6),
                             sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        block = matrix.block(name)
        extent = (t[0] if len(t) else 0.0, t[-1] if len(t) else 1.0, 0.5, block.shape[1] + 0.5)
        kw = {"vmin": 0.0, "vmax": 1.0} if name in ("meldiffuseness", "melmsc") else {}
        im = ax.imshow(block.T, origin="lower", aspect="auto", extent=extent, cmap="viridis", **kw)
        ax.set_title(PANEL_TITLES.get(name, name), fontsize=9)
        ax.set_ylabel("Mel band", fontsize=8)
        fig.colorbar(im, ax=ax, pad=0.01)
    axes[-1, 0].set_xlabel("time / s")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_coherence(freqs, measured, model, path, band=(200.0, 7000.0)):
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.plot(freqs, np.real(measured), lw=1.0, label="measured (real part)")
    ax.plot(freqs, np.imag(measured), lw=0.8, alpha=0.6, label="measured (imag part)")
    ax.plot(freqs, model, "k--", lw=1.0, label="diffuse model")
    ax.axvspan(*band, color="0.9", zorder=0)
    ax.set_xlabel("frequency / Hz")
    ax.set_ylabel("coherence")
    ax.set_ylim(-1.05, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_diffuseness_trace(frame_period_s, mean_diffuseness, path):
    t = np.arange(len(mean_diffuseness)) * frame_period_s
    fig, ax = plt.subplots(figsize=(6.0, 2.4))
    ax.plot(t, mean_diffuseness, lw=0.8)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("time / s")
    ax.set_ylabel("mean diffuseness")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
