"""Contrastive pretraining loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import numcore as nc
from ..augpipe import AugPolicy, make_views
from ..nst.augment import StyleTransfer
from ..rng import RngStream
from ..stylebank import StyleBank
from .losses import nt_xent, nt_xent_momentum
from .model import SslModel
from .optim import LARS, cosine_lr, ema_update, momentum_schedule

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.1
    base_lr: float = 0.5
    warmup_fraction: float = 0.05
    steps: int = 200
    weight_decay: float = 1.5e-6
    trust_coefficient: float = 0.001
    lars_momentum: float = 0.9
    momentum_m0: float = 0.996
    batch_size: int = 128
    use_momentum_encoder: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.momentum_m0 <= 1.0:
            raise ValueError("momentum_m0 must lie in [0, 1]")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_fraction * self.steps))


@dataclass(frozen=True)
class StepResult:
    step: int
    loss: float
    lr: float
    m: float


class Trainer:
    """Owns the model, optimizer and augmentation state for one pretraining run."""

    def __init__(self, model: SslModel, config: TrainConfig, policy: AugPolicy,
                 styler: StyleTransfer | None = None, bank: StyleBank | None = None,
                 inbatch_offset: int = 1):
        self.model = model
        self.config = config
        self.policy = policy
        self.styler = styler
        self.bank = bank
        self.inbatch_offset = inbatch_offset
        self.optimizer = LARS(model.online_parameters(), config.weight_decay,
                              config.trust_coefficient, config.lars_momentum)
        self.rng = RngStream(config.seed)

    def loss(self, left, right) -> nc.Tensor:
        cfg = self.config
        if cfg.use_momentum_encoder:
            return nt_xent_momentum(self.model.query(left), self.model.key(right), cfg.temperature)
        z = self.model.embed(np.concatenate([left, right]))
        n = left.shape[0]
        order = np.stack([np.arange(n), np.arange(n) + n], axis=1).reshape(-1)
        return nt_xent(nc.getitem(z, order), cfg.temperature)

    def train_step(self, batch: np.ndarray, step: int, sample_indices=None) -> StepResult:
        cfg = self.config
        left, right = make_views(batch, self.policy, self.rng.child("step", step), self.styler,
                                 self.bank, sample_indices, self.inbatch_offset)
        self.model.zero_grad()
        try:
            loss = self.loss(left, right)
        except nc.NonFiniteError as exc:
            raise TrainingDiverged(f"non-finite forward pass at step {step}: {exc}") from exc
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingDiverged(f"loss is {value} at step {step}")
        nc.backward(loss)
        lr = cosine_lr(step, cfg.warmup_steps, cfg.steps, cfg.base_lr)
        self.optimizer.step(lr)
        m = momentum_schedule(step, cfg.steps, cfg.momentum_m0)
        if cfg.use_momentum_encoder:
            ema_update(*self.model.ema_pairs(), m)
        return StepResult(step, value, lr, m)

    def batches(self, n_images: int):
        """Endless (epoch, index batch) stream over reshuffled epochs; partial batches dropped."""
        bs = min(self.config.batch_size, n_images)
        epoch = 0
        while True:
            order = self.rng.child("epoch", epoch).generator("shuffle").permutation(n_images)
            for start in range(0, n_images - bs + 1, bs):
                yield epoch, order[start:start + bs]
            epoch += 1


def pretrain(images: np.ndarray, model: SslModel, config: TrainConfig, policy: AugPolicy,
             styler: StyleTransfer | None = None, bank: StyleBank | None = None,
             inbatch_offset: int = 1, on_step: Callable[[StepResult], None] | None = None
             ) -> tuple[SslModel, list[StepResult]]:
    """Run ``config.steps`` training steps over shuffled minibatches of ``images``."""
    images = np.asarray(images, dtype=np.float32)
    trainer = Trainer(model, config, policy, styler, bank, inbatch_offset)
    history = []
    batches = trainer.batches(images.shape[0])
    for step in range(config.steps):
        _, idx = next(batches)
        result = trainer.train_step(images[idx], step, sample_indices=idx)
        history.append(result)
        if on_step is not None:
            on_step(result)
        if step % 20 == 0:
            log.info("step %d loss %.4f lr %.4f m %.5f", step, result.loss, result.lr, result.m)
    return model, history


def smoothed(values, window: int = 10) -> np.ndarray:
    """Trailing moving average; early entries average what is available."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)
