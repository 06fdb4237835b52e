"""Style extractor, conditional instance normalization and the stylization network."""

from __future__ import annotations

import math

import numpy as np

from .. import numcore as nc
from ..numcore import Conv2d, Linear, Module, ShapeError, Tensor

EMBED_DIM = 100
CIN_EPS = 1e-5
GAMMA_FLOOR = 0.01

# layer ids: 1-2 downsampling, 3-12 residual convs, 13-15 upsampling, 16 output
NUM_LAYERS = 16
RESIDUAL_LAYERS = tuple(range(3, 13))
UPSAMPLING_LAYERS = (13, 14, 15)
STYLED_PRESETS = {
    "all": RESIDUAL_LAYERS + UPSAMPLING_LAYERS,
    "first4": RESIDUAL_LAYERS[:4],
    "first8": RESIDUAL_LAYERS[:8],
    "first10": RESIDUAL_LAYERS,
    "none": (),
}


def resolve_styled_layers(spec) -> tuple[int, ...]:
    """Accept a preset name or an explicit iterable of layer ids."""
    if isinstance(spec, str):
        try:
            return STYLED_PRESETS[spec]
        except KeyError:
            raise ValueError(f"unknown styled-layer preset {spec!r}; choose from {sorted(STYLED_PRESETS)}") from None
    layers = tuple(sorted(set(int(l) for l in spec)))
    bad = [l for l in layers if not 1 <= l <= NUM_LAYERS]
    if bad:
        raise ValueError(f"styled layer ids out of range 1..{NUM_LAYERS}: {bad}")
    return layers


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return nc.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected CHW or NCHW image, got shape {x.shape}")
    return x, False


def cin_normalize(x, gamma, lam, eps: float = CIN_EPS) -> Tensor:
    """``gamma * (x - mean) / (std + eps) + lam`` per channel over H x W.

    ``x`` is N x C x H x W; ``gamma`` and ``lam`` are N x C.
    """
    x, gamma, lam = nc.as_tensor(x), nc.as_tensor(gamma), nc.as_tensor(lam)
    n, c = x.shape[:2]
    if gamma.shape != (n, c) or lam.shape != (n, c):
        raise ShapeError(f"cin: predictor widths {gamma.shape}/{lam.shape} do not match features {x.shape}")
    mu, std = nc.instance_stats(x)
    centered = nc.sub(x, nc.reshape(mu, (n, c, 1, 1)))
    denom = nc.affine(nc.reshape(std, (n, c, 1, 1)), 1.0, eps)
    normed = nc.div(centered, denom)
    return nc.add(nc.mul(normed, nc.reshape(gamma, (n, c, 1, 1))), nc.reshape(lam, (n, c, 1, 1)))


class CinLayer(Module):
    """Scale and offset predictors for one styled layer.

    The scale passes through ``softplus(.) + 0.01`` so it stays positive.
    """

    def __init__(self, channels: int, embed_dim: int, rng: np.random.Generator):
        self.gamma = Linear(embed_dim, channels, rng, gain=0.15)
        self.lam = Linear(embed_dim, channels, rng, gain=0.15)
        # softplus(b) + floor == 1 at initialisation
        self.gamma.bias.assign(np.full(channels, math.log(math.expm1(1.0 - GAMMA_FLOOR))))

    @property
    def channels(self) -> int:
        return self.gamma.weight.shape[1]

    def predict(self, z) -> tuple[Tensor, Tensor]:
        gamma = nc.affine(nc.softplus(self.gamma(z)), 1.0, GAMMA_FLOOR)
        return gamma, self.lam(z)

    def forward(self, x, z) -> Tensor:
        gamma, lam = self.predict(z)
        return cin_normalize(x, gamma, lam)


class StyleExtractor(Module):
    """Image -> length-D style code: stride-2 conv stages, global pooling, linear map."""

    def __init__(self, embed_dim: int = EMBED_DIM, widths=(16, 32, 64, 64), seed: int = 0):
        rng = np.random.default_rng([seed, 0x5E])
        chans = (3,) + tuple(widths)
        self.convs = [Conv2d(chans[i], chans[i + 1], 3, rng, stride=2) for i in range(len(widths))]
        self.head = Linear(chans[-1], embed_dim, rng, gain=2.0)

    @property
    def embed_dim(self) -> int:
        return self.head.weight.shape[1]

    @property
    def min_size(self) -> int:
        return 2 ** len(self.convs)

    def forward(self, images) -> Tensor:
        x, single = _batched(nc.as_tensor(images))
        if min(x.shape[-2:]) < self.min_size:
            raise ShapeError(f"extract_style: image {x.shape[-2:]} smaller than minimum {self.min_size}")
        if x.shape[1] != 3:
            raise ShapeError(f"extract_style: expected 3 channels, got {x.shape[1]}")
        h = x
        for conv in self.convs:
            h = nc.relu(conv(h))
        z = self.head(nc.global_avg_pool(h))
        return nc.reshape(z, (z.shape[1],)) if single else z


class StylizationNetwork(Module):
    """Feed-forward stylizer with CIN after every layer in the styled set.

    Blocks: two stride-2 convolutions, five residual blocks of two convolutions,
    three resize+conv upsampling blocks and an output convolution clamped to
    [0, 1]. With no styled layers the network ignores ``z`` entirely.
    """

    def __init__(self, embed_dim: int = EMBED_DIM, widths=(16, 32), up_width: int = 16,
                 styled_layers="all", seed: int = 0):
        rng = np.random.default_rng([seed, 0x57])
        c1, c2 = widths
        self.embed_dim = embed_dim
        self.styled = resolve_styled_layers(styled_layers)
        convs = [Conv2d(3, c1, 3, rng, stride=2), Conv2d(c1, c2, 3, rng, stride=2)]
        for _ in range(5):
            convs.append(Conv2d(c2, c2, 3, rng))
            convs.append(Conv2d(c2, c2, 3, rng, gain=0.3))
        convs += [Conv2d(c2, up_width, 3, rng), Conv2d(up_width, up_width, 3, rng),
                  Conv2d(up_width, up_width, 3, rng)]
        out = Conv2d(up_width, 3, 3, rng, gain=0.15)
        out.bias.assign(np.full(3, 0.5))
        convs.append(out)
        self.convs = convs
        self.cins = [CinLayer(convs[l - 1].out_channels, embed_dim, rng) if l in self.styled else None
                     for l in range(1, NUM_LAYERS + 1)]

    def cin(self, x, z, layer: int) -> Tensor:
        """Apply the conditional normalization owned by ``layer`` (must be styled)."""
        if layer not in self.styled:
            raise ValueError(f"layer {layer} is not in the styled set {self.styled}")
        x4, single = _batched(nc.as_tensor(x))
        z = nc.as_tensor(z)
        z2 = nc.reshape(z, (1, z.shape[0])) if z.ndim == 1 else z
        out = self.cins[layer - 1](x4, z2)
        return nc.reshape(out, out.shape[1:]) if single else out

    def _layer(self, layer: int, h, z, act: bool = True) -> Tensor:
        h = self.convs[layer - 1](h)
        if self.cins[layer - 1] is not None:
            h = self.cins[layer - 1](h, z)
        return nc.relu(h) if act else h

    def forward(self, images, z) -> Tensor:
        x, single = _batched(nc.as_tensor(images))
        z = nc.as_tensor(z)
        if z.ndim == 1:
            z = nc.reshape(z, (1, z.shape[0]))
        if z.shape != (x.shape[0], self.embed_dim):
            raise ShapeError(f"run_stylizer: embedding shape {z.shape} for batch of {x.shape[0]} "
                             f"needs ({x.shape[0]}, {self.embed_dim})")
        size = x.shape[-2:]
        h1 = self._layer(1, x, z)
        h = self._layer(2, h1, z)
        for first in range(3, 13, 2):
            r = self._layer(first, h, z)
            r = self._layer(first + 1, r, z, act=False)
            h = nc.add(h, r)
        h = self._layer(13, nc.resize_bilinear(h, h1.shape[-2:]), z)
        h = self._layer(14, nc.resize_bilinear(h, size), z)
        h = self._layer(15, h, z)
        out = nc.clip(self._layer(16, h, z, act=False), 0.0, 1.0)
        return nc.reshape(out, out.shape[1:]) if single else out
