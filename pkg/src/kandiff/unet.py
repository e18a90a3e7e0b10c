"""Conditional U-Net noise predictor with KAN-Blocks at the lowest resolution.

The network sees the noisy image and the low-light condition stacked along the
channel axis, is conditioned on the cumulative signal level ``abar`` through a
sinusoidal embedding, and returns two maps of the input's shape: the predicted
noise and a per-pixel log-variance (uncertainty).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .kan import ConvBlock, KanBlock, SplineGrid
from .nn import Conv2d, GroupNorm, Linear, Module
from .tensor import DimensionError, Tensor, _as_tensor, concat, silu

__all__ = [
    "DenoiserConfig",
    "DenoiserNet",
    "timestep_embedding",
    "denoise_forward",
    "freeze_uncertainty",
    "count_parameters",
]


@dataclass
class DenoiserConfig:
    image_channels: int = 3
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 4)
    num_kan_blocks: int = 2
    kan_layers_per_block: int = 3
    time_embed_dim: int = 64
    groups: int = 8
    grid_size: int = 5
    spline_order: int = 3
    grid_min: float = -1.0
    grid_max: float = 1.0
    bottleneck: str = "kan"  # "kan" or "conv" (ablation twin)
    kan_placement: str = "bottleneck"  # or "straddle"
    zero_init_heads: bool = False
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.channel_mults = tuple(int(m) for m in self.channel_mults)
        if self.bottleneck not in ("kan", "conv"):
            raise ValueError(f"bottleneck must be 'kan' or 'conv', got {self.bottleneck!r}")
        if self.kan_placement not in ("bottleneck", "straddle"):
            raise ValueError(f"kan_placement must be 'bottleneck' or 'straddle', got {self.kan_placement!r}")
        if self.kan_placement == "straddle" and self.num_kan_blocks != 2:
            raise ValueError("straddle placement needs exactly two KAN blocks")

    @property
    def in_channels(self) -> int:
        return 2 * self.image_channels

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * self.channel_mults[-1]

    @property
    def divisor(self) -> int:
        return 2 ** (len(self.channel_mults) - 1)

    def grid(self) -> SplineGrid:
        return SplineGrid(self.grid_min, self.grid_max, self.grid_size, self.spline_order)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_mults"] = list(self.channel_mults)
        return d


def timestep_embedding(abar, dim: int, scale: float = 1000.0) -> np.ndarray:
    """Sinusoidal features of ``scale * abar``; shape ``[N, dim]``."""
    s = np.atleast_1d(np.asarray(abar, dtype=np.float64)) * scale
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = s[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(s), 1))], axis=1)
    return emb


class ResBlock(Module):
    def __init__(self, cin: int, cout: int, temb: int, groups: int, *, rng, dtype):
        self.norm1 = GroupNorm(cin, groups, dtype)
        self.conv1 = Conv2d(cin, cout, 3, rng=rng, dtype=dtype)
        self.time = Linear(temb, 2 * cout, rng=rng, dtype=dtype)
        self.norm2 = GroupNorm(cout, groups, dtype)
        self.conv2 = Conv2d(cout, cout, 3, rng=rng, dtype=dtype)
        self.skip = Conv2d(cin, cout, 1, rng=rng, dtype=dtype) if cin != cout else None
        self.cout = cout

    def forward(self, x: Tensor, temb: Tensor) -> Tensor:
        h = self.conv1(silu(self.norm1(x)))
        ss = self.time(silu(temb))
        n = ss.shape[0]
        scale = ss[:, : self.cout].reshape((n, self.cout, 1, 1))
        shift = ss[:, self.cout :].reshape((n, self.cout, 1, 1))
        h = h * (scale + 1.0) + shift
        h = self.conv2(silu(self.norm2(h)))
        skip = self.skip(x) if self.skip is not None else x
        return skip + h


class Downsample(Module):
    def __init__(self, ch: int, *, rng, dtype):
        self.conv = Conv2d(ch, ch, 3, stride=2, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.conv(x)


class Upsample(Module):
    def __init__(self, ch: int, *, rng, dtype):
        self.conv = Conv2d(ch, ch, 3, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.conv(F.upsample_nearest2x(x))


class TimeEmbedding(Module):
    def __init__(self, dim: int, *, rng, dtype):
        self.dim = dim
        self.proj1 = Linear(dim, dim, rng=rng, dtype=dtype)
        self.proj2 = Linear(dim, dim, rng=rng, dtype=dtype)

    def forward(self, abar, dtype) -> Tensor:
        e = Tensor(timestep_embedding(abar, self.dim).astype(dtype))
        return self.proj2(silu(self.proj1(e)))


class UncertaintyHead(Module):
    """Small conv stack mapping decoder features to a per-pixel log-variance."""

    def __init__(self, ch: int, cout: int, *, rng, dtype, zero: bool):
        self.conv1 = Conv2d(ch, ch, 3, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(ch, cout, 3, rng=rng, dtype=dtype, zero=zero)
        if not zero:
            self.conv2.weight.data *= 0.1

    def forward(self, h):
        return self.conv2(silu(self.conv1(h)))

    def freeze(self, frozen: bool = True) -> None:
        for p in self.parameters():
            p.frozen = frozen


class DenoiserNet(Module):
    def __init__(self, cfg: DenoiserConfig | None = None):
        cfg = cfg or DenoiserConfig()
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(cfg.seed)
        grid = cfg.grid()
        mults = cfg.channel_mults
        chans = [cfg.base_channels * m for m in mults]
        temb = cfg.time_embed_dim
        depth = len(mults)

        self.time_embed = TimeEmbedding(temb, rng=rng, dtype=dtype)
        self.in_conv = Conv2d(cfg.in_channels, cfg.base_channels, 3, rng=rng, dtype=dtype)

        def kan_block():
            if cfg.bottleneck == "kan":
                return KanBlock(chans[-1], cfg.kan_layers_per_block, grid, rng=rng, dtype=dtype)
            return ConvBlock(chans[-1], cfg.kan_layers_per_block, rng=rng, dtype=dtype)

        self.down = []
        self.downsample = []
        prev = cfg.base_channels
        for i, ch in enumerate(chans):
            self.down.append(ResBlock(prev, ch, temb, cfg.groups, rng=rng, dtype=dtype))
            if i < depth - 1:
                self.downsample.append(Downsample(ch, rng=rng, dtype=dtype))
            prev = ch

        straddle = cfg.kan_placement == "straddle"
        self.pre_kan = kan_block() if straddle else None
        self.kan = [] if straddle else [kan_block() for _ in range(cfg.num_kan_blocks)]

        self.upsample = []
        self.up = []
        for i in reversed(range(depth)):
            if i < depth - 1:
                self.upsample.append(Upsample(prev, rng=rng, dtype=dtype))
            self.up.append(ResBlock(prev + chans[i], chans[i], temb, cfg.groups, rng=rng, dtype=dtype))
            prev = chans[i]
        self.post_kan = kan_block() if straddle else None

        self.out_norm = GroupNorm(cfg.base_channels, cfg.groups, dtype)
        self.noise_head = Conv2d(cfg.base_channels, cfg.image_channels, 3, rng=rng, dtype=dtype,
                                 zero=cfg.zero_init_heads)
        if not cfg.zero_init_heads:
            self.noise_head.weight.data *= 0.1
        self.uncertainty = UncertaintyHead(cfg.base_channels, cfg.image_channels, rng=rng,
                                           dtype=dtype, zero=cfg.zero_init_heads)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def kan_blocks(self) -> list:
        blocks = list(self.kan)
        if self.pre_kan is not None:
            blocks = [self.pre_kan, self.post_kan]
        return [b for b in blocks if isinstance(b, KanBlock)]

    def uncertainty_frozen(self) -> bool:
        params = self.uncertainty.parameters()
        return bool(params) and all(p.frozen for p in params)

    def forward(self, x_t, y, abar) -> tuple[Tensor, Tensor]:
        x_t, y = _as_tensor(x_t), _as_tensor(y)
        squeeze = x_t.ndim == 3
        if squeeze:
            x_t = x_t.reshape((1,) + x_t.shape)
            y = y.reshape((1,) + y.shape)
        if x_t.shape != y.shape:
            raise DimensionError(f"x_t {x_t.shape} and condition {y.shape} must match")
        n, c, h, w = x_t.shape
        if c != self.cfg.image_channels:
            raise DimensionError(f"expected {self.cfg.image_channels} image channels, got {c}")
        d = self.cfg.divisor
        if h % d or w % d:
            raise DimensionError(
                f"spatial size {h}x{w} must be divisible by {d} for {len(self.cfg.channel_mults)} levels"
            )
        abar = np.broadcast_to(np.asarray(abar, dtype=np.float64).reshape(-1), (n,))
        temb = self.time_embed(abar, self.dtype)

        hcur = self.in_conv(concat([x_t, y], axis=1))
        skips = []
        for i, block in enumerate(self.down):
            hcur = block(hcur, temb)
            if i == len(self.down) - 1 and self.pre_kan is not None:
                hcur = self.pre_kan(hcur)
            skips.append(hcur)
            if i < len(self.downsample):
                hcur = self.downsample[i](hcur)
        for block in self.kan:
            hcur = block(hcur)
        for j, block in enumerate(self.up):
            if j > 0:
                hcur = self.upsample[j - 1](hcur)
            hcur = block(concat([hcur, skips.pop()], axis=1), temb)
            if j == 0 and self.post_kan is not None:
                hcur = self.post_kan(hcur)
        hcur = silu(self.out_norm(hcur))
        eps, u = self.noise_head(hcur), self.uncertainty(hcur)
        if squeeze:
            eps, u = eps.reshape(eps.shape[1:]), u.reshape(u.shape[1:])
        return eps, u


def denoise_forward(net: DenoiserNet, x_t, y, abar) -> tuple[Tensor, Tensor]:
    return net(x_t, y, abar)


def freeze_uncertainty(net: DenoiserNet) -> None:
    net.uncertainty.freeze(True)


def count_parameters(net: Module) -> tuple[int, dict[str, int]]:
    """Total learnable scalar count and a breakdown by top-level submodule."""
    breakdown: dict[str, int] = {}
    for name, p in net.named_parameters():
        key = name.split(".")[0]
        breakdown[key] = breakdown.get(key, 0) + p.size
    return sum(breakdown.values()), breakdown
