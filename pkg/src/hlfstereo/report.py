"""Figure rendering for CLI reports.

Every function takes arrays plus an output path and writes one PNG.  The
Agg backend is forced so reports render in headless batch runs.
"""

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 130


def _finish(fig, path):
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def disparity_figure(disparity, path, valid=None, title="disparity",
                     vmin=None, vmax=None):
    """Disparity map with colorbar; invalid pixels drawn hatched gray."""
    disparity = np.asarray(disparity, dtype=np.float64)
    shown = disparity
    if valid is not None:
        shown = np.ma.masked_array(disparity, mask=~np.asarray(valid, bool))
    fig, ax = plt.subplots(figsize=(6.0, 4.6))
    cmap = plt.get_cmap("turbo").copy()
    cmap.set_bad("0.75")
    im = ax.imshow(shown, cmap=cmap, vmin=vmin, vmax=vmax,
                   interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="disparity [px]")
    return _finish(fig, path)


def image_figure(image, path, title="image"):
    """Plain image preview (grayscale or RGB), axes off."""
    image = np.asarray(image)
    fig, ax = plt.subplots(figsize=(6.0, 4.6))
    if image.ndim == 2:
        ax.imshow(image, cmap="gray", interpolation="nearest")
    else:
        ax.imshow(np.clip(image, 0.0, 1.0), interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    return _finish(fig, path)


def error_figure(est, gt, path, valid=None, title="disparity error"):
    """Signed error map plus histogram of |error|."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    err = est - gt
    mask = np.isfinite(err)
    if valid is not None:
        mask &= np.asarray(valid, bool)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10.0, 4.2))
    lim = max(1e-6, np.percentile(np.abs(err[mask]), 98)) if mask.any() else 1.0
    shown = np.ma.masked_array(err, mask=~mask)
    cmap = plt.get_cmap("coolwarm").copy()
    cmap.set_bad("0.75")
    im = ax0.imshow(shown, cmap=cmap, vmin=-lim, vmax=lim,
                    interpolation="nearest")
    ax0.set_title(title)
    ax0.set_xticks([])
    ax0.set_yticks([])
    fig.colorbar(im, ax=ax0, fraction=0.046, pad=0.04, label="est - gt [px]")
    if mask.any():
        ax1.hist(np.abs(err[mask]).ravel(), bins=60, color="0.35")
    ax1.set_xlabel("|error| [px]")
    ax1.set_ylabel("pixels")
    ax1.set_yscale("log")
    ax1.set_title("error histogram")
    return _finish(fig, path)


def spectra_figure(profiles, bands, path, labels=None,
                   title="spectral profiles"):
    """Line plot of one or more per-band profiles."""
    profiles = np.atleast_2d(np.asarray(profiles, dtype=np.float64))
    bands = np.asarray(bands, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, prof in enumerate(profiles):
        lab = labels[i] if labels is not None else None
        ax.plot(bands, prof, marker="o", markersize=3, label=lab)
    ax.set_xlabel("wavelength [nm]")
    ax.set_ylabel("intensity")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if labels is not None:
        ax.legend(fontsize=8)
    return _finish(fig, path)


def metrics_figure(metrics, path, title="metrics"):
    """Horizontal bar chart of a {name: value} metric dict."""
    names = list(metrics.keys())
    values = [float(metrics[k]) for k in names]
    fig, ax = plt.subplots(figsize=(6.4, 0.55 * max(len(names), 2) + 1.2))
    ypos = np.arange(len(names))[::-1]
    ax.barh(ypos, values, color="0.4")
    for y, v in zip(ypos, values):
        ax.text(v, y, f" {v:.4g}", va="center", fontsize=9)
    ax.set_yticks(ypos)
    ax.set_yticklabels(names)
    ax.set_title(title)
    ax.margins(x=0.15)
    return _finish(fig, path)


def cost_slices_figure(volume, labels, path, rows=2,
                       title="cost volume slices"):
    """A grid of per-label cost slices from an (H, W, L) volume."""
    volume = np.asarray(volume)
    count = volume.shape[2]
    picks = np.unique(np.linspace(0, count - 1, rows * 4).round().astype(int))
    cols = int(np.ceil(len(picks) / rows))
    fig, axes = plt.subplots(rows, cols, figsize=(2.6 * cols, 2.4 * rows))
    axes = np.atleast_1d(axes).ravel()
    finite = volume[np.isfinite(volume)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(np.percentile(finite, 99)) if finite.size else 1.0
    for ax, li in zip(axes, picks):
        ax.imshow(volume[:, :, li], cmap="magma", vmin=vmin, vmax=vmax,
                  interpolation="nearest")
        ax.set_title(f"d={labels[li]:.2f}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    for ax in axes[len(picks):]:
        ax.axis("off")
    fig.suptitle(title)
    return _finish(fig, path)
