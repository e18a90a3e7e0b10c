"""Matplotlib figures written next to the text reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_training_curves", "plot_metric_report", "plot_enhancement_grid", "plot_verify_timings"]

STYLE = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_curves(history: list[dict], path, phase: int = 1) -> Path:
    """Loss terms (log scale when positive) against step."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        steps = [r["step"] for r in history]
        for key in ("loss", "noise", "freq"):
            vals = [r.get(key) for r in history]
            if any(v is None for v in vals) or not vals:
                continue
            ax.plot(steps, vals, label=key, lw=1.2)
        if all(r.get("noise", 1) > 0 for r in history) and "freq" in history[0]:
            ax.set_yscale("log")
        if any("psnr" in r for r in history):
            ax2 = ax.twinx()
            pts = [(r["step"], r["psnr"]) for r in history if "psnr" in r]
            ax2.plot(*zip(*pts), "k--", lw=1, label="PSNR (dB)")
            ax2.set_ylabel("PSNR (dB)")
            ax2.grid(False)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_title(f"phase {phase} training")
        ax.legend(loc="upper right", frameon=False)
        return _save(fig, path)


def plot_metric_report(report, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
        x = np.arange(report.count)
        finite = [p if math.isfinite(p) else np.nan for p in report.psnr]
        a1.bar(x, finite, color="#4c72b0")
        a1.axhline(report.mean_psnr if math.isfinite(report.mean_psnr) else np.nan, color="k", lw=1, ls="--")
        a1.set_ylabel("PSNR (dB)")
        a2.bar(x, report.ssim, color="#55a868")
        a2.axhline(report.mean_ssim, color="k", lw=1, ls="--")
        a2.set_ylabel("SSIM")
        a2.set_ylim(min(0.0, min(report.ssim, default=0.0)), 1.0)
        for ax in (a1, a2):
            ax.set_xticks(x)
            ax.set_xticklabels(report.names, rotation=45, ha="right", fontsize=7)
        return _save(fig, path)


def plot_enhancement_grid(rows: list[tuple[str, list[np.ndarray]]], path,
                          titles=("low-light", "enhanced", "reference")) -> Path:
    """One row per image; each entry is a ``[C, H, W]`` array in [0, 1]."""
    ncols = max(len(imgs) for _, imgs in rows)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(rows), ncols, figsize=(2.2 * ncols, 2.2 * len(rows)), squeeze=False)
        for r, (name, imgs) in enumerate(rows):
            for c in range(ncols):
                ax = axes[r, c]
                ax.axis("off")
                if c >= len(imgs):
                    continue
                im = np.clip(imgs[c], 0, 1)
                ax.imshow(im[0] if im.shape[0] == 1 else im.transpose(1, 2, 0), cmap="gray", vmin=0, vmax=1)
                if r == 0 and c < len(titles):
                    ax.set_title(titles[c])
            axes[r, 0].text(-0.05, 0.5, name, transform=axes[r, 0].transAxes, rotation=90,
                            va="center", ha="right", fontsize=7)
        return _save(fig, path)


def plot_verify_timings(results, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 0.25 * len(results) + 1))
        names = [r.name for r in results]
        colors = ["#55a868" if r.passed else "#c44e52" for r in results]
        ax.barh(np.arange(len(results)), [r.seconds for r in results], color=colors)
        ax.set_yticks(np.arange(len(results)))
        ax.set_yticklabels(names, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("seconds")
        return _save(fig, path)
