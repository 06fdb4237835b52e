"""Minimal parameter containers built on the tensor primitives."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            if name in own:
                own[name].assign(value)

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def zero_grad(self):
        T.zero_grad(self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def he_normal(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    return rng.standard_normal(shape) * (gain * math.sqrt(2.0 / fan_in))


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None, gain: float = 1.0):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in = in_ch * kernel * kernel
        dt = T.default_dtype()
        self.weight = Parameter(he_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in, gain).astype(dt))
        self.bias = Parameter(np.zeros(out_ch, dtype=dt), exempt=True)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, gain: float = 1.0):
        dt = T.default_dtype()
        self.weight = Parameter(he_normal(rng, (in_dim, out_dim), in_dim, gain).astype(dt))
        self.bias = Parameter(np.zeros(out_dim, dtype=dt), exempt=True)

    def forward(self, x):
        return T.add(T.matmul(x, self.weight), self.bias)
