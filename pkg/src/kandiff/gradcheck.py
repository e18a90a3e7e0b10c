"""Central finite-difference gradient checks in float64."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["relative_error", "numeric_grad", "check_grad", "check_directional"]


def relative_error(a, b, floor: float = 1e-12) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def _scalar(fn, inputs) -> float:
    out = fn(*inputs)
    return float(np.sum(out.data if isinstance(out, Tensor) else out))


def numeric_grad(fn: Callable, inputs: Sequence[Tensor], index: int, h: float = 1e-5,
                 coords=None) -> np.ndarray:
    """FD gradient of ``sum(fn(*inputs))`` w.r.t. ``inputs[index]`` (optionally at ``coords`` only)."""
    x = inputs[index]
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    picks = range(flat.size) if coords is None else coords
    for i in picks:
        orig = flat[i]
        flat[i] = orig + h
        up = _scalar(fn, inputs)
        flat[i] = orig - h
        down = _scalar(fn, inputs)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def analytic_grads(fn: Callable, inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in inputs:
        x.grad = None
    out = fn(*inputs)
    out = out if out.ndim == 0 else out.sum()
    out.backward()
    return [np.zeros_like(x.data) if x.grad is None else np.array(x.grad) for x in inputs]


def check_grad(fn: Callable, inputs: Sequence[Tensor], h: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Worst relative error between analytic and FD gradients over all inputs.

    ``max_coords`` limits FD evaluation to a random coordinate subset per input.
    """
    analytic = analytic_grads(fn, inputs)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue
        coords = None
        if max_coords is not None and x.data.size > max_coords:
            coords = rng.choice(x.data.size, size=max_coords, replace=False)
        num = numeric_grad(fn, inputs, i, h, coords)
        ana = analytic[i]
        if coords is not None:
            num, ana = num.reshape(-1)[coords], ana.reshape(-1)[coords]
        worst = max(worst, relative_error(ana, num))
    return worst


def check_directional(fn: Callable, params: Sequence[Tensor], directions: int = 3, h: float = 1e-5,
                      rng: np.random.Generator | None = None) -> float:
    """Compare ``grad . v`` against ``(f(p + hv) - f(p - hv)) / 2h`` for random unit ``v``.

    Covers every coordinate at two forward passes per direction, which keeps
    whole-network checks cheap.
    """
    rng = rng or np.random.default_rng(0)
    analytic = analytic_grads(fn, params)
    worst = 0.0
    for _ in range(directions):
        vs = [rng.standard_normal(p.shape) for p in params]
        norm = np.sqrt(sum(float(np.sum(v * v)) for v in vs))
        vs = [v / norm for v in vs]
        base = [p.data.copy() for p in params]
        for p, b, v in zip(params, base, vs):
            p.data = b + h * v
        up = _scalar(fn, params)
        for p, b, v in zip(params, base, vs):
            p.data = b - h * v
        down = _scalar(fn, params)
        for p, b in zip(params, base):
            p.data = b
        num = (up - down) / (2 * h)
        ana = sum(float(np.sum(g * v)) for g, v in zip(analytic, vs))
        worst = max(worst, relative_error(ana, num))
    return worst
