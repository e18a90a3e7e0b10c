"""Minimal module system: parameter discovery, naming, and a few standard layers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor

__all__ = ["Module", "Conv2d", "Linear", "GroupNorm", "ModuleList"]


class Module:
    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        """Yield ``(dotted_name, parameter)`` in definition order and stamp the name."""
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                value.name = name
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        item.name = f"{name}.{i}"
                        yield item.name, item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        bad = [
            f"{n}: expected {params[n].shape}, got {tuple(state[n].shape)}"
            for n in params
            if n in state and tuple(state[n].shape) != params[n].shape
        ]
        if missing or unexpected or bad:
            lines = [f"missing {n}" for n in missing] + [f"unexpected {n}" for n in unexpected] + bad
            raise ValueError("state does not match model:\n  " + "\n  ".join(lines))
        for n, p in params.items():
            p.data = np.array(state[n], dtype=p.dtype, copy=True)


class ModuleList(Module, list):
    """A plain list whose entries are walked for parameters."""

    def named_parameters(self, prefix: str = ""):
        for i, m in enumerate(self):
            yield from m.named_parameters(f"{prefix}{i}.")


def _normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * std).astype(dtype)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int = 3, stride: int = 1, *, rng, dtype=np.float32,
                 zero: bool = False):
        self.stride = stride
        std = 0.0 if zero else np.sqrt(2.0 / (cin * k * k))
        self.weight = Parameter(_normal(rng, (cout, cin, k, k), std, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride)


class Linear(Module):
    def __init__(self, nin: int, nout: int, *, rng, dtype=np.float32):
        self.weight = Parameter(_normal(rng, (nout, nin), 1.0 / np.sqrt(nin), dtype))
        self.bias = Parameter(np.zeros(nout, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int = 8, dtype=np.float32):
        self.groups = min(groups, channels)
        while channels % self.groups:
            self.groups -= 1
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.weight, self.bias)
