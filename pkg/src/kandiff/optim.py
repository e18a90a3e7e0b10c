"""Adam with bias correction; frozen parameters are skipped."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, state: AdamState | None = None) -> AdamState:
    """Apply one in-place Adam update to ``params`` and return the advanced state.

    ``grads`` is aligned with ``params``; ``None`` entries and frozen parameters
    are left alone, though the shared step counter still advances.
    """
    state = state if state is not None else AdamState()
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g in zip(params, grads):
        if g is None or getattr(p, "frozen", False):
            continue
        key = p.name if isinstance(p, Parameter) and p.name else str(id(p))
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[key], state.v[key] = m, v
        mhat = m / bc1
        vhat = v / bc2
        p.data = (p.data - lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype, copy=False)
    return state


class Adam:
    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.state = adam_step(
            self.params,
            [p.grad for p in self.params],
            self.lr,
            self.betas[0],
            self.betas[1],
            self.eps,
            self.state,
        )
