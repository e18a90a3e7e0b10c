"""Full-reference image quality: PSNR and Gaussian-window SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import ImageBuffer

__all__ = ["psnr", "ssim", "MetricReport", "gaussian_window"]


def _arr(x) -> np.ndarray:
    a = x.data if isinstance(x, ImageBuffer) else np.asarray(x, dtype=np.float64)
    return a[None] if a.ndim == 2 else a


def psnr(x, ref, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``."""
    a, b = _arr(x), _arr(ref)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes {a.shape} and {b.shape} differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(img, k, axis=-1) @ g
    return sliding_window_view(rows, k, axis=-2) @ g


def ssim(x, ref, window: int = 11, sigma: float = 1.5, K1: float = 0.01, K2: float = 0.03,
         data_range: float = 1.0) -> float:
    """Mean local SSIM over valid window positions, averaged over channels."""
    a, b = _arr(x), _arr(ref)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if min(a.shape[-2:]) < window:
        raise ValueError(f"ssim: image {a.shape[-2:]} is smaller than the {window}x{window} window")
    g = gaussian_window(window, sigma)
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a**2
    sbb = _filter_valid(b * b, g) - mu_b**2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    per_channel = (num / den).mean(axis=(-2, -1))
    return float(per_channel.mean())


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, name: str, p: float, s: float) -> None:
        self.names.append(name)
        self.psnr.append(p)
        self.ssim.append(s)

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    def to_tsv(self) -> str:
        lines = ["name\tpsnr_db\tssim"]
        lines += [f"{n}\t{p:.6f}\t{s:.6f}" for n, p, s in zip(self.names, self.psnr, self.ssim)]
        lines.append(f"#mean\t{self.mean_psnr:.6f}\t{self.mean_ssim:.6f}")
        lines.append(f"#count\t{self.count}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "MetricReport":
        rep = cls()
        for line in text.splitlines()[1:]:
            if not line or line.startswith("#"):
                continue
            name, p, s = line.split("\t")
            rep.add(name, float(p), float(s))
        return rep
