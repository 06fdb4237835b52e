"""LARS, EMA target updates and the learning-rate / momentum schedules."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..numcore import Parameter


def cosine_lr(step: int, warmup_steps: int, total_steps: int, peak_lr: float) -> float:
    """Linear warmup from 0 to ``peak_lr``, then cosine decay to 0 at ``total_steps``."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0), span) / span
    return peak_lr * (math.cos(math.pi * progress) + 1) / 2


def momentum_schedule(step: int, total_steps: int, m0: float = 0.996) -> float:
    """EMA coefficient rising from ``m0`` to 1 along a cosine."""
    progress = min(max(step, 0), total_steps) / max(total_steps, 1)
    return 1 - (1 - m0) * (math.cos(math.pi * progress) + 1) / 2


def scaled_update(w: np.ndarray, grad: np.ndarray, exempt: bool, weight_decay: float,
                  trust_coefficient: float, adapt: bool = True) -> np.ndarray:
    """Weight-decayed gradient times the layer's local rate."""
    if exempt:
        return grad
    update = grad + weight_decay * w
    if not adapt:
        return update
    w_norm = float(np.linalg.norm(w))
    u_norm = float(np.linalg.norm(update))
    rate = trust_coefficient * w_norm / u_norm if w_norm > 0 and u_norm > 0 else 1.0
    return rate * update


class LARS:
    """SGD with heavy-ball momentum and layer-wise trust-ratio scaling.

    Exempt parameters (biases, norm parameters) get neither weight decay
    nor trust-ratio adaptation. ``adapt=False`` forces every local rate to 1.
    """

    def __init__(self, params: Sequence[Parameter], weight_decay: float = 1.5e-6,
                 trust_coefficient: float = 0.001, momentum: float = 0.9, adapt: bool = True):
        self.params = [p for p in params if p.trainable]
        self.weight_decay = weight_decay
        self.trust_coefficient = trust_coefficient
        self.momentum = momentum
        self.adapt = adapt
        self.buffers = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        for p, buf in zip(self.params, self.buffers):
            upd = scaled_update(p.data, p.gradient, p.exempt, self.weight_decay,
                                self.trust_coefficient, self.adapt)
            buf *= self.momentum
            buf += upd.astype(buf.dtype)
            p.data = (p.data - lr * buf).astype(p.data.dtype)


def lars_step(params, grads, lr: float, weight_decay: float, trust_coeff: float,
              momentum: float = 0.9, buffers=None, exempt=None, adapt: bool = True):
    """One LARS step on plain arrays; returns ``(new_params, new_buffers)``."""
    exempt = exempt or [False] * len(params)
    buffers = buffers or [np.zeros(np.shape(w)) for w in params]
    new_params, new_buffers = [], []
    for w, g, buf, ex in zip(params, grads, buffers, exempt):
        w = np.asarray(w, dtype=np.float64)
        upd = scaled_update(w, np.asarray(g, dtype=np.float64), ex, weight_decay, trust_coeff, adapt)
        buf = momentum * np.asarray(buf, dtype=np.float64) + upd
        new_params.append(w - lr * buf)
        new_buffers.append(buf)
    return new_params, new_buffers


def ema_update(target: Sequence[Parameter], online: Sequence[Parameter], m: float):
    """``target <- m * target + (1 - m) * online`` in place, outside autodiff."""
    if len(target) != len(online):
        raise ValueError("ema_update: parameter lists differ in length")
    for t, o in zip(target, online):
        if t.shape != o.shape:
            raise ValueError(f"ema_update: shape {t.shape} vs {o.shape}")
        if m == 1.0:
            continue
        t.data = (m * t.data + (1 - m) * o.data).astype(t.data.dtype)
