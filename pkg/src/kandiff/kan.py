"""Spline-parameterized Kolmogorov-Arnold layers and the KAN-Block.

Each edge ``(q, p)`` of a layer carries its own learnable univariate function

    phi_qp(x) = base_weight_qp * silu(x) + spline_weight_qp * sum_j c_qpj B_j(x)

where ``B_j`` are degree-``k`` B-splines on a uniform grid. A layer sums the
edge functions feeding each output, and a block interleaves layers with
depthwise convolutions on the re-assembled feature map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .nn import Conv2d, GroupNorm, Module
from .tensor import DimensionError, Parameter, Tensor, _as_tensor, silu

__all__ = [
    "SplineGrid",
    "bspline_basis",
    "SplineActivation",
    "spline_activation_eval",
    "KanLayer",
    "init_kan_layer",
    "kan_layer_forward",
    "TokenNorm",
    "KanBlock",
    "ConvBlock",
]


@dataclass(frozen=True)
class SplineGrid:
    t_min: float = -1.0
    t_max: float = 1.0
    grid_size: int = 5
    order: int = 3

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError(f"degenerate spline domain [{self.t_min}, {self.t_max}]")
        if self.grid_size < 1 or self.order < 1:
            raise ValueError(f"need grid_size >= 1 and order >= 1, got {self.grid_size}, {self.order}")

    @property
    def h(self) -> float:
        return (self.t_max - self.t_min) / self.grid_size

    @property
    def num_basis(self) -> int:
        return self.grid_size + self.order

    def knots(self) -> np.ndarray:
        """Uniform knots with ``order`` extra knots on each side of the domain."""
        k, g = self.order, self.grid_size
        return self.t_min + (np.arange(g + 2 * k + 1) - k) * self.h


def _local_basis(x: np.ndarray, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nonzero basis values at clamped ``x`` via Cox-de Boor on the active span.

    Returns ``(first, values, deriv)``: basis ``first + r`` takes ``values[..., r]``
    for ``r = 0..k``, and ``deriv`` holds the matching derivatives.
    """
    k, g, h = grid.order, grid.grid_size, grid.h
    xc = np.clip(x, grid.t_min, grid.t_max)
    # half-open intervals, closed at t_max
    span = np.clip(np.floor((xc - grid.t_min) / h).astype(np.int64), 0, g - 1)
    u = ((xc - grid.t_min) / h - span)[..., None].astype(x.dtype)
    local = np.ones(x.shape + (1,), dtype=x.dtype)
    zero = np.zeros(x.shape + (1,), dtype=x.dtype)
    prev = local
    for d in range(1, k + 1):
        r = np.arange(d + 1, dtype=x.dtype)
        padded = np.concatenate([zero, local, zero], axis=-1)
        prev = local
        local = ((u + d - r) * padded[..., :-1] + (r + 1 - u) * padded[..., 1:]) / d
    padded = np.concatenate([zero, prev, zero], axis=-1)
    deriv = (padded[..., :-1] - padded[..., 1:]) / h
    return span, local, deriv


def _scatter(first: np.ndarray, local: np.ndarray, width: int) -> np.ndarray:
    m = first.size
    k1 = local.shape[-1]
    full = np.zeros((m, width), dtype=local.dtype)
    rows = np.arange(m)[:, None]
    full[rows, first.reshape(m, 1) + np.arange(k1)] = local.reshape(m, k1)
    return full.reshape(first.shape + (width,))


def bspline_basis(x, grid: SplineGrid) -> Tensor:
    """All ``G + k`` basis values at every element of ``x`` (shape ``x.shape + (G+k,)``).

    Inputs are clamped to the grid domain, so the derivative is zero outside it.
    """
    x = _as_tensor(x)
    xd = x.data
    first, local, deriv = _local_basis(xd, grid)
    deriv = deriv * ((xd >= grid.t_min) & (xd <= grid.t_max))[..., None]
    idx = first[..., None] + np.arange(grid.order + 1)

    def bw(g):
        return ((np.take_along_axis(g, idx, axis=-1) * deriv).sum(axis=-1),)

    return Tensor._make(_scatter(first, local, grid.num_basis), (x,), bw)


@dataclass
class SplineActivation:
    """One learnable edge function."""

    coefficients: Tensor
    base_weight: Tensor
    spline_weight: Tensor
    grid: SplineGrid = SplineGrid()


def spline_activation_eval(phi: SplineActivation, x) -> Tensor:
    x = _as_tensor(x)
    basis = bspline_basis(x, phi.grid)
    spline = (basis * phi.coefficients).sum(axis=-1)
    return phi.base_weight * silu(x) + phi.spline_weight * spline


class KanLayer(Module):
    """``n_in -> n_out`` map whose ``n_out x n_in`` edges are :class:`SplineActivation` s.

    Parameters are stored stacked: ``coefficients[q, p, :]``, ``base_weight[q, p]``
    and ``spline_weight[q, p]`` describe edge ``phi_qp``.
    """

    def __init__(self, coefficients: np.ndarray, base_weight: np.ndarray,
                 spline_weight: np.ndarray, grid: SplineGrid):
        self.grid = grid
        self.n_out, self.n_in = base_weight.shape
        if coefficients.shape != (self.n_out, self.n_in, grid.num_basis):
            raise DimensionError(
                f"coefficients {coefficients.shape} do not match "
                f"({self.n_out}, {self.n_in}, {grid.num_basis})"
            )
        self.coefficients = Parameter(coefficients)
        self.base_weight = Parameter(base_weight)
        self.spline_weight = Parameter(spline_weight)

    def edge(self, q: int, p: int) -> SplineActivation:
        """View of edge ``phi_qp``; gradients flow back into the stacked tensors."""
        return SplineActivation(
            self.coefficients[q, p], self.base_weight[q, p], self.spline_weight[q, p], self.grid
        )

    def forward(self, x: Tensor) -> Tensor:
        return kan_layer_forward(self, x)


def init_kan_layer(n_in: int, n_out: int, grid: SplineGrid = SplineGrid(), seed=0,
                   dtype=np.float32) -> KanLayer:
    if n_in < 1 or n_out < 1:
        raise ValueError(f"layer dimensions must be positive, got {n_in} -> {n_out}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    coef = rng.standard_normal((n_out, n_in, grid.num_basis)) * (0.1 / np.sqrt(grid.grid_size))
    base = rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)
    return KanLayer(
        coef.astype(dtype), base.astype(dtype), np.ones((n_out, n_in), dtype=dtype), grid
    )


def kan_layer_forward(layer: KanLayer, x) -> Tensor:
    """``out[t, q] = sum_p phi_qp(x[t, p])`` for a ``[T, n_in]`` token matrix."""
    x = _as_tensor(x)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise DimensionError(f"KAN layer expects [T, {layer.n_in}] input, got {x.shape}")
    t = x.shape[0]
    nb = layer.grid.num_basis
    base = silu(x) @ layer.base_weight.T
    basis = bspline_basis(x, layer.grid).reshape((t, layer.n_in * nb))
    w = layer.coefficients * layer.spline_weight.reshape((layer.n_out, layer.n_in, 1))
    return base + basis @ w.reshape((layer.n_out, layer.n_in * nb)).T


class TokenNorm(Module):
    """RMS normalization across channels of each token, with scale and shift."""

    def __init__(self, channels: int, dtype=np.float32, eps: float = 1e-5):
        self.eps = eps
        self.scale = Parameter(np.ones(channels, dtype=dtype))
        self.shift = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        rms = ((x * x).mean(axis=-1, keepdims=True) + self.eps).sqrt()
        return x / rms * self.scale + self.shift


def _tokens(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape((n * h * w, c))


def _untokens(t: Tensor, n: int, h: int, w: int) -> Tensor:
    return t.reshape((n, h, w, t.shape[1])).transpose(0, 3, 1, 2)


def _dw_kernel(rng, channels: int, k: int, dtype) -> np.ndarray:
    kern = rng.standard_normal((channels, k, k)) * 0.05
    kern[:, k // 2, k // 2] += 1.0
    return kern.astype(dtype)


class KanBlock(Module):
    """``N`` stages of ``I <- DwConv(Phi_i(norm(I)))`` with a residual around the block."""

    def __init__(self, channels: int, num_layers: int = 3, grid: SplineGrid = SplineGrid(), *,
                 rng, dtype=np.float32, kernel_size: int = 3, norm: bool = True):
        self.channels = channels
        self.layers = [init_kan_layer(channels, channels, grid, rng, dtype) for _ in range(num_layers)]
        self.dwconvs = [Parameter(_dw_kernel(rng, channels, kernel_size, dtype)) for _ in range(num_layers)]
        self.norms = [TokenNorm(channels, dtype) for _ in range(num_layers)] if norm else []

    def forward(self, x) -> Tensor:
        x = _as_tensor(x)
        squeeze = x.ndim == 3
        if squeeze:
            x = x.reshape((1,) + x.shape)
        if x.shape[1] != self.channels:
            raise DimensionError(f"KAN block of width {self.channels} got input {x.shape}")
        n, _, h, w = x.shape
        out = x
        for i, layer in enumerate(self.layers):
            tok = _tokens(out)
            if self.norms:
                tok = self.norms[i](tok)
            out = F.depthwise_conv2d(_untokens(layer(tok), n, h, w), self.dwconvs[i])
        out = out + x
        return out.reshape(out.shape[1:]) if squeeze else out


class ConvBlock(Module):
    """Conv-only twin of :class:`KanBlock`: each KAN layer becomes a 3x3 conv + SiLU.

    Per stage this holds ``9*C*C + C`` weights against ``(G+k+2)*C*C`` for a KAN
    layer, which keeps the two bottlenecks at a comparable parameter budget.
    """

    def __init__(self, channels: int, num_layers: int = 3, *, rng, dtype=np.float32,
                 kernel_size: int = 3):
        self.channels = channels
        self.norms = [GroupNorm(channels, 8, dtype) for _ in range(num_layers)]
        self.convs = [Conv2d(channels, channels, 3, rng=rng, dtype=dtype) for _ in range(num_layers)]
        self.dwconvs = [Parameter(_dw_kernel(rng, channels, kernel_size, dtype)) for _ in range(num_layers)]

    def forward(self, x) -> Tensor:
        out = x
        for norm, conv, dw in zip(self.norms, self.convs, self.dwconvs):
            out = F.depthwise_conv2d(silu(conv(norm(out))), dw)
        return out + x
