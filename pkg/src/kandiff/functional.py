"""Spatial operations on ``[N, C, H, W]`` (or unbatched ``[C, H, W]``) tensors."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, Tensor, _as_tensor

__all__ = [
    "pad2d",
    "conv2d",
    "depthwise_conv2d",
    "upsample_nearest2x",
    "group_norm",
    "linear",
]

_PAD_MODES = ("zeros", "replicate")


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError(f"expected [C,H,W] or [N,C,H,W], got shape {x.shape}")
    return x, False


def _edge_pad_grad(g: np.ndarray, p: int, axis: int) -> np.ndarray:
    n = g.shape[axis] - 2 * p
    inner = np.take(g, np.arange(p, p + n), axis=axis).copy()
    lead = np.take(g, np.arange(0, p), axis=axis).sum(axis=axis)
    tail = np.take(g, np.arange(p + n, p + n + p), axis=axis).sum(axis=axis)
    idx0 = [slice(None)] * g.ndim
    idx0[axis] = 0
    inner[tuple(idx0)] += lead
    idx0[axis] = n - 1
    inner[tuple(idx0)] += tail
    return inner


def pad2d(x, p: int, mode: str = "zeros") -> Tensor:
    """Pad the two trailing axes by ``p`` on every side."""
    x = _as_tensor(x)
    if mode not in _PAD_MODES:
        raise ValueError(f"unknown padding mode {mode!r}; choose from {_PAD_MODES}")
    if p == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    out = np.pad(x.data, widths, mode="constant" if mode == "zeros" else "edge")
    h, w = x.shape[-2:]

    if mode == "zeros":
        def bw(g):
            return (g[..., p : p + h, p : p + w],)
    else:
        def bw(g):
            g = _edge_pad_grad(g, p, g.ndim - 2)
            return (_edge_pad_grad(g, p, g.ndim - 1),)

    return Tensor._make(out, (x,), bw)


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int | None = None,
           padding_mode: str = "replicate") -> Tensor:
    """Cross-correlation of ``x`` with ``kernel`` of shape ``[C_out, C_in, k, k]``.

    ``padding=None`` selects shape-preserving padding ``k // 2``.
    """
    x = _as_tensor(x)
    kernel = _as_tensor(kernel, x)
    xb, squeeze = _batched(x)
    cout, cin, kh, kw = kernel.shape
    if xb.shape[1] != cin:
        raise DimensionError(
            f"conv2d: input has {xb.shape[1]} channels, kernel {kernel.shape} expects {cin}"
        )
    if padding is None:
        padding = kh // 2
    xp = pad2d(xb, padding, padding_mode)
    n, _, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise DimensionError(
            f"conv2d: non-positive output extent ({ho}, {wo}) for input {x.shape}, "
            f"kernel {kernel.shape}, stride {stride}, padding {padding}"
        )

    xpd, kd = xp.data, kernel.data
    win = sliding_window_view(xpd, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # [N, C_in, k, k, Ho, Wo]: each copied row is a contiguous output plane
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, cin * kh * kw, ho * wo)
    wmat = kd.reshape(cout, -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        bias = _as_tensor(bias, x)
        out += bias.data.reshape(1, cout, 1)
    out = out.reshape(n, cout, ho, wo)

    def bw(g):
        g2 = g.reshape(n, cout, ho * wo)
        gk = None
        if kernel.requires_grad:
            gk = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kd.shape)
        gx = None
        if xp.requires_grad:
            gcols = np.matmul(wmat.T, g2).reshape(n, cin, kh, kw, ho, wo)
            gx = np.zeros(xpd.shape, dtype=xpd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, i, j]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gk, gb

    parents = (xp, kernel, bias) if bias is not None else (xp, kernel)
    res = Tensor._make(out, parents, bw)
    return res.reshape(res.shape[1:]) if squeeze else res


def depthwise_conv2d(x, kernel, padding_mode: str = "replicate") -> Tensor:
    """Shape-preserving per-channel convolution with ``kernel`` of shape ``[C, k, k]``."""
    x = _as_tensor(x)
    kernel = _as_tensor(kernel, x)
    xb, squeeze = _batched(x)
    c, kh, kw = kernel.shape
    if xb.shape[1] != c:
        raise DimensionError(
            f"depthwise_conv2d: input has {xb.shape[1]} channels, kernel {kernel.shape} has {c}"
        )
    if kh % 2 == 0 or kh != kw:
        raise DimensionError(f"depthwise_conv2d needs an odd square kernel, got {kernel.shape}")
    p = kh // 2
    xp = pad2d(xb, p, padding_mode)
    xpd, kd = xp.data, kernel.data
    h, w = xb.shape[2:]
    out = np.zeros(xb.shape, dtype=xpd.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xpd[:, :, i : i + h, j : j + w] * kd[None, :, i, j, None, None]

    def bw(g):
        gk = None
        if kernel.requires_grad:
            gk = np.empty(kd.shape, dtype=kd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gk[:, i, j] = np.einsum("nchw,nchw->c", xpd[:, :, i : i + h, j : j + w], g)
        gx = None
        if xp.requires_grad:
            gx = np.zeros(xpd.shape, dtype=xpd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + h, j : j + w] += g * kd[None, :, i, j, None, None]
        return gx, gk

    res = Tensor._make(out, (xp, kernel), bw)
    return res.reshape(res.shape[1:]) if squeeze else res


def upsample_nearest2x(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    out = xd.repeat(2, axis=-2).repeat(2, axis=-1)
    shape = xd.shape

    def bw(g):
        g = g.reshape(g.shape[:-2] + (shape[-2], 2, shape[-1], 2))
        return (g.sum(axis=(-3, -1)),)

    return Tensor._make(out, (x,), bw)


def group_norm(x, groups: int, weight=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Group normalization over ``[N, C, H, W]`` with per-channel affine terms."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if c % groups:
        raise DimensionError(f"group_norm: {c} channels not divisible into {groups} groups")
    xd = x.data.reshape(n, groups, -1)
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        g = g.reshape(n, groups, -1)
        gx = inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True))
        return (gx.reshape(n, c, h, w),)

    out = Tensor._make(xhat.reshape(n, c, h, w), (x,), bw)
    if weight is not None:
        out = out * _as_tensor(weight, x).reshape((1, c, 1, 1))
    if bias is not None:
        out = out + _as_tensor(bias, x).reshape((1, c, 1, 1))
    return out


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape ``[out, in]``."""
    out = _as_tensor(x) @ _as_tensor(weight).T
    if bias is not None:
        out = out + bias
    return out
