from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numcore as nc
from ..numcore import Conv2d, Linear, Module


class Encoder(Module):
    """Stride-2 conv + relu stages followed by global average pooling."""

    def __init__(self, widths=(32, 64, 128, 128), seed: int = 0):
        rng = np.random.default_rng([seed, 0xE1])
        chans = (3,) + tuple(widths)
        self.convs = [Conv2d(chans[i], chans[i + 1], 3, rng, stride=2) for i in range(len(widths))]

    @property
    def width(self) -> int:
        return self.convs[-1].out_channels

    def forward(self, x):
        h = nc.as_tensor(x)
        for conv in self.convs:
            h = nc.relu(conv(h))
        return nc.global_avg_pool(h)


class MLP(Module):
    """Two-layer perceptron (projector / predictor head)."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, seed: int = 0, tag: int = 0):
        rng = np.random.default_rng([seed, 0xA0 + tag])
        self.fc1 = Linear(in_dim, hidden, rng)
        self.fc2 = Linear(hidden, out_dim, rng)

    def forward(self, x):
        return self.fc2(nc.relu(self.fc1(x)))


@dataclass(frozen=True)
class ModelConfig:
    encoder_widths: tuple[int, ...] = (32, 64, 128, 128)
    projector_hidden: int = 256
    projector_out: int = 64
    use_predictor: bool = True
    seed: int = 0


def _frozen_copy(src: Module, fresh: Module) -> Module:
    fresh.load_state_dict(src.state_dict())
    for p in fresh.parameters():
        p.trainable = False
        p.requires_grad = False
    return fresh


class SslModel(Module):
    """Online encoder/projector/predictor plus momentum copies of encoder and projector."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        s = config.seed
        self.encoder = Encoder(config.encoder_widths, seed=s)
        r = self.encoder.width
        self.projector = MLP(r, config.projector_hidden, config.projector_out, seed=s, tag=1)
        self.predictor = (MLP(config.projector_out, config.projector_hidden, config.projector_out, seed=s, tag=2)
                          if config.use_predictor else None)
        self.target_encoder = _frozen_copy(self.encoder, Encoder(config.encoder_widths, seed=s))
        self.target_projector = _frozen_copy(
            self.projector, MLP(r, config.projector_hidden, config.projector_out, seed=s, tag=1))

    @property
    def representation_width(self) -> int:
        return self.encoder.width

    def online_parameters(self) -> list:
        mods = [self.encoder, self.projector] + ([self.predictor] if self.predictor else [])
        return [p for m in mods for p in m.parameters()]

    def ema_pairs(self) -> tuple[list, list]:
        """(target params, matching online params) for the momentum update."""
        target = self.target_encoder.parameters() + self.target_projector.parameters()
        online = self.encoder.parameters() + self.projector.parameters()
        return target, online

    def embed(self, images):
        """Projector output z = g(h(x)) of the online tower."""
        return self.projector(self.encoder(images))

    def query(self, images):
        z = self.embed(images)
        return self.predictor(z) if self.predictor is not None else z

    def key(self, images):
        with nc.no_grad():
            return self.target_projector(self.target_encoder(images))

    def forward(self, images):
        return self.encoder(images)
