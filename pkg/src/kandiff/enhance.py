"""Inference: pad to the network divisor, run the reverse chain, crop back."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import NoiseSchedule, sample
from .imaging import ImageBuffer, denormalize, list_pngs, load_png, normalize, save_png

__all__ = ["padded_size", "pad_to_multiple", "enhance_image", "enhance_dir", "EnhanceSummary"]

log = logging.getLogger(__name__)


def padded_size(n: int, divisor: int) -> int:
    """Smallest multiple of ``divisor`` that is >= ``n``."""
    if n < 1 or divisor < 1:
        raise ValueError(f"padded_size needs positive sizes, got n={n} divisor={divisor}")
    return -(-n // divisor) * divisor


def pad_to_multiple(x: np.ndarray, divisor: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate ``x[..., H, W]`` at the bottom/right; returns the original size."""
    h, w = x.shape[-2:]
    ph, pw = padded_size(h, divisor) - h, padded_size(w, divisor) - w
    if ph or pw:
        pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
        x = np.pad(x, pad, mode="edge")
    return x, (h, w)


def enhance_image(net, sched: NoiseSchedule, img, seed: int = 0, stochastic: bool = False) -> ImageBuffer:
    data = img.data if isinstance(img, ImageBuffer) else np.asarray(img)
    if data.shape[0] != net.cfg.image_channels:
        if data.shape[0] == 1 and net.cfg.image_channels == 3:
            data = np.repeat(data, 3, axis=0)
        else:
            raise ValueError(f"model expects {net.cfg.image_channels} channels, image has {data.shape[0]}")
    y = normalize(data).astype(net.dtype)
    y, (h, w) = pad_to_multiple(y, net.cfg.divisor)
    out = sample(net, y[None], sched, seed=seed, stochastic=stochastic)[0]
    out = denormalize(out[:, :h, :w])
    return ImageBuffer(out.astype(np.float64), getattr(img, "bit_depth", 8))


@dataclass
class EnhanceSummary:
    written: list[Path] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


def enhance_dir(net, sched: NoiseSchedule, in_dir, out_dir, seed: int = 0,
                stochastic: bool = False) -> EnhanceSummary:
    """Enhance every PNG in ``in_dir``. Per-file errors are logged and skipped."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    files = list_pngs(in_dir)
    if not files:
        raise FileNotFoundError(f"no PNG files in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = EnhanceSummary()
    for path in files:
        try:
            img = load_png(path)
            res = enhance_image(net, sched, img, seed=seed, stochastic=stochastic)
            dest = out_dir / path.name
            save_png(dest, res, bit_depth=16 if img.bit_depth == 16 else 8)
            summary.written.append(dest)
        except Exception as exc:  # one bad file must not stop the batch
            log.error("enhance: skipping %s: %s", path.name, exc)
            summary.failed[path.name] = str(exc)
    return summary
