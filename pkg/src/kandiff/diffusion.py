"""DDPM noise schedule, forward corruption, reverse mean step, sampling and training losses.

Timesteps are 1-based: ``t`` ranges over ``1..T`` and index ``t - 1`` of the
schedule arrays. ``t = 0`` is accepted by :func:`q_sample` as the clean limit
(``abar_0 = 1``).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .frequency import FreqLossConfig, freq_loss
from .tensor import ContractError, Tensor, _as_tensor, exp, mean, no_grad

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "q_sample",
    "reverse_mean_step",
    "sample",
    "heteroscedastic_loss",
    "phase1_loss",
    "phase2_loss",
    "substream",
]


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose (``noise``, ``timestep``, ``init`` ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def _idx(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return t.astype(np.int64) - 1

    def beta(self, t):
        return self.betas[self._idx(t)]

    def alpha(self, t):
        return self.alphas[self._idx(t)]

    def alpha_bar(self, t):
        """``abar_t``, with ``abar_0 = 1``."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        padded = np.concatenate([[1.0], self.alpha_bars])
        return padded[t.astype(np.int64)]


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 2e-2,
                  kind: str = "linear") -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"need at least one timestep, got T={T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * np.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], beta_start, beta_end)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def _coef(values, ndim: int, dtype) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        return v.astype(dtype)
    return v.reshape((-1,) + (1,) * (ndim - 1)).astype(dtype)


def q_sample(x0, t, eps, sched: NoiseSchedule) -> Tensor:
    """Closed-form corruption ``sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``.

    ``t`` may be a scalar or one timestep per leading-axis element.
    """
    x0, eps = _as_tensor(x0), _as_tensor(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} differs from x0 shape {x0.shape}")
    ab = sched.alpha_bar(t)
    a = _coef(np.sqrt(ab), x0.ndim, x0.dtype)
    b = _coef(np.sqrt(1.0 - ab), x0.ndim, x0.dtype)
    return x0 * a + eps * b


def reverse_mean_step(x_t, eps_hat, t, sched: NoiseSchedule) -> Tensor:
    """``x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)``."""
    x_t, eps_hat = _as_tensor(x_t), _as_tensor(eps_hat)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"eps_hat shape {eps_hat.shape} differs from x_t shape {x_t.shape}")
    alpha = sched.alpha(t)
    abar = sched.alpha_bar(t)
    c_eps = _coef((1.0 - alpha) / np.sqrt(1.0 - abar), x_t.ndim, x_t.dtype)
    c_out = _coef(1.0 / np.sqrt(alpha), x_t.ndim, x_t.dtype)
    return (x_t - eps_hat * c_eps) * c_out


def sample(net, y, sched: NoiseSchedule, seed: int = 0, stochastic: bool = False,
           x_T=None, clip: bool = True, reverse_step=None) -> np.ndarray:
    """Run the reverse chain from ``t = T`` down to ``1`` conditioned on ``y``.

    ``net(x_t, y, abar_t)`` must return ``(eps_hat, u)``. The start point is a
    seeded standard normal draw unless ``x_T`` is given. ``reverse_step`` swaps in
    a replacement for :func:`reverse_mean_step` (used by fault-injection checks).
    """
    step_fn = reverse_step or reverse_mean_step
    y = np.asarray(y.data if isinstance(y, Tensor) else y)
    rng = substream(seed, "noise")
    x = np.asarray(x_T, dtype=y.dtype) if x_T is not None else rng.standard_normal(y.shape).astype(y.dtype)
    with no_grad():
        for t in range(sched.T, 0, -1):
            eps_hat, _ = net(Tensor(x), Tensor(y), sched.alpha_bar(t))
            x = step_fn(x, eps_hat, t, sched).data
            if stochastic and t > 1:
                x = x + (np.sqrt(sched.beta(t)) * rng.standard_normal(x.shape)).astype(x.dtype)
    return np.clip(x, -1.0, 1.0) if clip else x


def heteroscedastic_loss(eps, eps_hat, u, train_u: bool = True) -> Tensor:
    """``mean(exp(-u) (eps - eps_hat)^2 + u)``; with ``train_u=False`` u is a fixed weight."""
    eps, eps_hat, u = _as_tensor(eps), _as_tensor(eps_hat), _as_tensor(u)
    r2 = (eps - eps_hat) ** 2
    if train_u:
        return mean(exp(-u) * r2 + u)
    return mean(r2 * np.exp(-u.data))


def _draw(x0: np.ndarray, sched: NoiseSchedule, rng: np.random.Generator):
    n = x0.shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(x0.shape).astype(x0.dtype)
    return t, eps


def _phase1(net, x0, y, sched, rng) -> tuple[Tensor, dict]:
    x0 = np.asarray(x0.data if isinstance(x0, Tensor) else x0)
    y = np.asarray(y.data if isinstance(y, Tensor) else y)
    t, eps = _draw(x0, sched, rng)
    x_t = q_sample(x0, t, eps, sched)
    eps_hat, u = net(x_t, Tensor(y), sched.alpha_bar(t))
    loss = heteroscedastic_loss(eps, eps_hat, u)
    return loss, {"loss": loss.item(), "noise": float(np.mean((eps - eps_hat.data) ** 2))}


def phase1_loss(net, x0, y, sched: NoiseSchedule, rng: np.random.Generator) -> Tensor:
    """Noise regression weighted by a learned per-pixel log-variance (uncertainty)."""
    return _phase1(net, x0, y, sched, rng)[0]


def _phase2(net, x0, y, sched, freq_cfg: FreqLossConfig, rng, freq_t="uniform") -> tuple[Tensor, dict]:
    if not net.uncertainty_frozen():
        raise ContractError("phase-2 loss requires the uncertainty head to be frozen")
    x0 = np.asarray(x0.data if isinstance(x0, Tensor) else x0)
    y = np.asarray(y.data if isinstance(y, Tensor) else y)
    t, eps = _draw(x0, sched, rng)
    x_t = q_sample(x0, t, eps, sched)
    eps_hat, u = net(x_t, Tensor(y), sched.alpha_bar(t))
    noise = heteroscedastic_loss(eps, eps_hat, u, train_u=False)
    if freq_t == "uniform":
        t_f, xt_f, eps_f = t, x_t, eps_hat
    else:
        t_f = np.full(x0.shape[0], int(freq_t))
        xt_f = q_sample(x0, t_f, rng.standard_normal(x0.shape).astype(x0.dtype), sched)
        eps_f, _ = net(xt_f, Tensor(y), sched.alpha_bar(t_f))
    x_prev = reverse_mean_step(xt_f, eps_f, t_f, sched)
    lf = freq_loss(x_prev, Tensor(x0), freq_cfg)
    loss = noise + lf
    return loss, {"loss": loss.item(), "noise": noise.item(), "freq": lf.item()}


def phase2_loss(net, x0, y, sched: NoiseSchedule, freq_cfg: FreqLossConfig,
                rng: np.random.Generator, freq_t="uniform") -> Tensor:
    """Frozen-uncertainty noise loss plus the spectral loss on the reconstructed ``x_{t-1}``."""
    return _phase2(net, x0, y, sched, freq_cfg, rng, freq_t)[0]
