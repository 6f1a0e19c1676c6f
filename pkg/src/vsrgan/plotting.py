"""Loss-curve and evaluation figures (display only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps SVG/PNG output byte-stable across runs
_SVG_META = {"Date": None, "Creator": None}
_PNG_META = {"Software": None}
plt.rcParams["svg.hashsalt"] = "vsrgan"


def _save(fig, path):
    path = str(path)
    meta = _SVG_META if path.endswith(".svg") else _PNG_META if path.endswith(".png") else None
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_loss_curves(logs, path, title="training losses"):
    """One panel per loss column; ``logs`` maps a label to a TrainLog."""
    columns = [("loss_d", "discriminator loss"), ("loss_g", "generator loss"),
               ("loss_pixel", "pixel distance"), ("loss_feat", "feature distance")]
    used = [(c, t) for c, t in columns if any(np.any(lg.column(c) != 0) for lg in logs.values())]
    used = used or columns[1:2]
    fig, axes = plt.subplots(len(used), 1, figsize=(7, 2.4 * len(used)), sharex=True,
                             squeeze=False)
    for ax, (col, label) in zip(axes[:, 0], used):
        for name, lg in logs.items():
            steps = np.arange(1, len(lg) + 1)
            ax.plot(steps, lg.column(col), label=name, linewidth=1.0)
        ax.set_ylabel(label)
        if col != "loss_d":
            ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
    axes[0, 0].set_title(title)
    axes[0, 0].legend(loc="upper right", fontsize="small")
    axes[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    return _save(fig, path)


def plot_eval_report(report, path):
    """Per-frame PSNR and SSIM of an evaluation run."""
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 4.8), sharex=True)
    idx = np.arange(len(report))
    psnr = np.array(report.psnr)
    finite = np.where(np.isfinite(psnr), psnr, np.nan)
    a1.plot(idx, finite, marker=".", linewidth=0.8)
    a1.set_ylabel("PSNR (dB)")
    a1.grid(True, alpha=0.3)
    a2.plot(idx, report.ssim, marker=".", linewidth=0.8, color="tab:orange")
    a2.set_ylabel("SSIM")
    a2.set_xlabel("sample")
    a2.grid(True, alpha=0.3)
    mode = "center frame only" if report.center_frame_only else "full sequence"
    a1.set_title(f"{report.model} ({mode}, crop {report.crop})")
    fig.tight_layout()
    return _save(fig, path)
