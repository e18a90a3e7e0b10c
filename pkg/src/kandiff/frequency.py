"""2-D Fourier transform, amplitude/phase spectra and the frequency-domain loss.

The transform is an iterative radix-2 FFT for power-of-two lengths and a
direct (matrix) DFT otherwise. Both are unnormalized in the forward direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, Tensor, _as_tensor, absolute, atan2, mean

__all__ = [
    "fft",
    "ifft",
    "fft2_array",
    "ifft2_array",
    "fft2",
    "Spectrum",
    "spectrum",
    "magnitude",
    "wrap_angle",
    "FreqLossConfig",
    "freq_loss",
]


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2(a: np.ndarray, sign: float) -> np.ndarray:
    n = a.shape[-1]
    a = a[..., _bit_reverse_indices(n)]
    lead = a.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(lead + (n // m, 2, half))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        a = np.stack((even + odd, even - odd), axis=-2).reshape(lead + (n,))
        m *= 2
    return a


def _direct(a: np.ndarray, sign: float) -> np.ndarray:
    n = a.shape[-1]
    k = np.arange(n)
    mat = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    return a @ mat


def fft(a, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along ``axis``."""
    a = np.moveaxis(np.asarray(a, dtype=np.complex128), axis, -1)
    if a.shape[-1] == 0:
        raise DimensionError("cannot transform an empty axis")
    out = _radix2(a, -1.0) if _is_pow2(a.shape[-1]) else _direct(a, -1.0)
    return np.moveaxis(out, -1, axis)


def ifft(a, axis: int = -1) -> np.ndarray:
    """Inverse DFT along ``axis`` (carries the ``1/n`` factor)."""
    a = np.moveaxis(np.asarray(a, dtype=np.complex128), axis, -1)
    n = a.shape[-1]
    out = (_radix2(a, 1.0) if _is_pow2(n) else _direct(a, 1.0)) / n
    return np.moveaxis(out, -1, axis)


def fft2_array(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 2 or x.size == 0:
        raise DimensionError(f"fft2 needs a non-empty array with two trailing axes, got {x.shape}")
    return fft(fft(x, -1), -2)


def ifft2_array(z) -> np.ndarray:
    return ifft(ifft(z, -1), -2)


def _pad_pow2(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    ph = 1 << (h - 1).bit_length()
    pw = 1 << (w - 1).bit_length()
    if (ph, pw) == (h, w):
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(0, ph - h), (0, pw - w)]
    data = np.pad(x.data, widths)
    return Tensor._make(data, (x,), lambda g: (g[..., :h, :w],))


def fft2(x, mode: str = "auto") -> tuple[Tensor, Tensor]:
    """Differentiable 2-D DFT of a real tensor over its two trailing axes.

    Returns ``(re, im)``. ``mode="pad"`` zero-pads each axis to the next power of
    two first so the radix-2 path is always taken.
    """
    x = _as_tensor(x)
    if mode == "pad":
        x = _pad_pow2(x)
    elif mode != "auto":
        raise ValueError(f"unknown fft mode {mode!r}")
    z = fft2_array(x.data)
    out = np.stack((z.real, z.imag)).astype(x.dtype)

    def bw(g):
        # adjoint of a real->complex linear map: Re(conj(F)^T (g_re + i g_im))
        gz = g[0].astype(np.complex128) + 1j * g[1]
        n = x.shape[-1] * x.shape[-2]
        return ((ifft2_array(gz) * n).real.astype(x.dtype),)

    both = Tensor._make(out, (x,), bw)
    return both[0], both[1]


def magnitude(re, im, eps: float = 1e-8) -> Tensor:
    """``sqrt(re^2 + im^2)`` with the gradient zeroed where the magnitude is below ``eps``."""
    re, im = _as_tensor(re), _as_tensor(im, re)
    rd, idd = re.data, im.data
    amp = np.sqrt(rd * rd + idd * idd)
    safe = amp >= eps
    inv = np.where(safe, 1.0 / np.where(safe, amp, 1.0), 0.0).astype(amp.dtype)
    return Tensor._make(amp, (re, im), lambda g: (g * rd * inv, g * idd * inv))


def wrap_angle(d) -> Tensor:
    """Map angles into ``(-pi, pi]``; piecewise identity, so the gradient is one."""
    d = _as_tensor(d)
    dd = d.data
    out = dd - 2.0 * np.pi * np.ceil((dd - np.pi) / (2.0 * np.pi))
    return Tensor._make(out.astype(dd.dtype), (d,), lambda g: (g,))


@dataclass
class Spectrum:
    amp: Tensor
    pha: Tensor


def spectrum(x, mode: str = "auto") -> Spectrum:
    re, im = fft2(x, mode)
    return Spectrum(magnitude(re, im), atan2(im, re))


@dataclass
class FreqLossConfig:
    gamma_amp: float = 0.01
    gamma_pha: float = 0.01
    fft_mode: str = "auto"

    def __post_init__(self):
        if self.gamma_amp < 0 or self.gamma_pha < 0:
            raise ValueError("frequency loss weights must be non-negative")


def freq_loss(x_low, x_high, cfg: FreqLossConfig | None = None) -> Tensor:
    """Weighted mean L1 distance between amplitude spectra plus wrapped phase spectra.

    ``x_high`` is the normal-light target and ``x_low`` the reconstruction being
    pulled toward it.
    """
    cfg = cfg or FreqLossConfig()
    x_low, x_high = _as_tensor(x_low), _as_tensor(x_high)
    if x_low.shape != x_high.shape:
        raise DimensionError(f"freq_loss: shapes {x_low.shape} and {x_high.shape} differ")
    lo = spectrum(x_low, cfg.fft_mode)
    hi = spectrum(x_high, cfg.fft_mode)
    amp_term = mean(absolute(lo.amp - hi.amp))
    pha_term = mean(absolute(wrap_angle(lo.pha - hi.pha)))
    return amp_term * cfg.gamma_amp + pha_term * cfg.gamma_pha
