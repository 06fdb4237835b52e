"""The style-transfer augmentation block and its minibatch form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numcore as nc
from ..numcore import ShapeError, Tensor
from ..rng import RngStream
from .networks import EMBED_DIM, StyleExtractor, StylizationNetwork

STYLE_SOURCES = ("external_bank", "in_batch", "content_self", "gaussian_noise")


@dataclass(frozen=True)
class SasslParams:
    p: float = 0.8
    alpha_min: float = 0.1
    alpha_max: float = 0.3
    beta_min: float = 0.1
    beta_max: float = 0.3
    style_source: str = "external_bank"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        for name in ("alpha", "beta"):
            lo, hi = getattr(self, f"{name}_min"), getattr(self, f"{name}_max")
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} range must satisfy 0 <= min <= max <= 1, got ({lo}, {hi})")
        if self.style_source not in STYLE_SOURCES:
            raise ValueError(f"style_source must be one of {STYLE_SOURCES}, got {self.style_source!r}")


@dataclass(frozen=True)
class NoiseStyle:
    """Diagonal Gaussian over style codes; the blended code is drawn from it directly."""

    mu: np.ndarray
    sigma: np.ndarray

    def sample(self, rng: RngStream) -> np.ndarray:
        eps = rng.generator("style.noise").standard_normal(self.mu.shape)
        return (self.mu + self.sigma * eps).astype(np.float32)


def blend_embeddings(z_c, z_s, alpha: float):
    """Convex combination ``(1 - alpha) * z_c + alpha * z_s``.

    Works on numpy arrays and on Tensors (differentiably). The endpoints
    return an exact copy of the corresponding input.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if isinstance(z_c, Tensor) or isinstance(z_s, Tensor):
        z_c, z_s = nc.as_tensor(z_c), nc.as_tensor(z_s)
        if z_c.shape != z_s.shape:
            raise ShapeError(f"blend_embeddings: shapes {z_c.shape} and {z_s.shape}")
        return nc.add(nc.affine(z_c, 1.0 - alpha), nc.affine(z_s, alpha))
    z_c, z_s = np.asarray(z_c), np.asarray(z_s)
    if z_c.shape != z_s.shape:
        raise ShapeError(f"blend_embeddings: shapes {z_c.shape} and {z_s.shape}")
    if alpha == 0.0:
        return z_c.copy()
    if alpha == 1.0:
        return z_s.copy()
    return (1.0 - alpha) * z_c + alpha * z_s


def interpolate_pixels(i_c, i_hat, beta: float):
    """``(1 - beta) * i_c + beta * i_hat``; endpoints are bit-exact copies."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if isinstance(i_c, Tensor) or isinstance(i_hat, Tensor):
        i_c, i_hat = nc.as_tensor(i_c), nc.as_tensor(i_hat)
        if i_c.shape != i_hat.shape:
            raise ShapeError(f"interpolate_pixels: shapes {i_c.shape} and {i_hat.shape}")
        return nc.add(nc.affine(i_c, 1.0 - beta), nc.affine(i_hat, beta))
    i_c, i_hat = np.asarray(i_c), np.asarray(i_hat)
    if i_c.shape != i_hat.shape:
        raise ShapeError(f"interpolate_pixels: shapes {i_c.shape} and {i_hat.shape}")
    if beta == 0.0:
        return i_c.copy()
    if beta == 1.0:
        return i_hat.copy()
    dt = i_c.dtype
    return (dt.type(1.0 - beta) * i_c + dt.type(beta) * i_hat).astype(dt)


@dataclass(frozen=True)
class StyleDraw:
    applied: bool
    alpha: float = 0.0
    beta: float = 0.0


def draw_style_params(params: SasslParams, rng: RngStream) -> StyleDraw:
    """Apply decision, then blending and interpolation factors, each from its own substream."""
    if not rng.uniform("style.apply") < params.p:
        return StyleDraw(False)
    alpha = float(rng.uniform("style.alpha", params.alpha_min, params.alpha_max))
    beta = float(rng.uniform("style.beta", params.beta_min, params.beta_max))
    return StyleDraw(True, alpha, beta)


class StyleTransfer:
    """Extractor F and stylizer T bundled with the augmentation block."""

    def __init__(self, extractor: StyleExtractor | None = None,
                 stylizer: StylizationNetwork | None = None, seed: int = 0):
        self.extractor = extractor or StyleExtractor(seed=seed)
        self.stylizer = stylizer or StylizationNetwork(embed_dim=self.extractor.embed_dim, seed=seed)
        if self.stylizer.embed_dim != self.extractor.embed_dim:
            raise ShapeError(f"extractor emits D={self.extractor.embed_dim} but stylizer expects "
                             f"D={self.stylizer.embed_dim}")
        self.calls = 0

    @property
    def embed_dim(self) -> int:
        return self.extractor.embed_dim

    def extract_style(self, image) -> np.ndarray:
        """Style code of one CHW image (or an N x D array for an NCHW batch)."""
        with nc.no_grad():
            return self.extractor(np.asarray(image, dtype=np.float32)).data.copy()

    def run_stylizer(self, i_c, z) -> np.ndarray:
        self.calls += 1
        with nc.no_grad():
            return self.stylizer(np.asarray(i_c, dtype=np.float32), np.asarray(z, dtype=np.float32)).data.copy()

    def stylize_path(self, i_c, z_s, alpha: float, beta: float) -> Tensor:
        """Differentiable stylization with fixed factors (external style code)."""
        i_c = nc.as_tensor(i_c)
        z_c = self.extractor(i_c)
        z_hat = blend_embeddings(z_c, z_s, alpha)
        return interpolate_pixels(i_c, self.stylizer(i_c, z_hat), beta)

    def _check_embedding(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        if z.shape != (self.embed_dim,):
            raise ShapeError(f"style embedding must have length {self.embed_dim}, got shape {z.shape}")
        if not np.isfinite(z).all():
            raise nc.NonFiniteError("style embedding has non-finite entries")
        return z

    def _target_code(self, z_c, style, params: SasslParams, draw: StyleDraw, rng: RngStream):
        if isinstance(style, NoiseStyle) or params.style_source == "gaussian_noise":
            if not isinstance(style, NoiseStyle):
                raise ValueError("gaussian_noise source needs a NoiseStyle (see stylebank.noise_style_params)")
            return style.sample(rng)
        if params.style_source == "content_self" or style is None:
            return z_c
        return blend_embeddings(z_c, style, draw.alpha)

    def style_augment(self, i_c, style, params: SasslParams, rng: RngStream) -> np.ndarray:
        """Stylize one CHW image with probability ``params.p``.

        ``style`` is a length-D code, a CHW style image (its code is extracted
        first), a :class:`NoiseStyle`, or None for self-stylization. ``rng``
        is the substream of this (sample, view).
        """
        i_c = np.asarray(i_c, dtype=np.float32)
        draw = draw_style_params(params, rng)
        if not draw.applied:
            return i_c.copy()
        if isinstance(style, np.ndarray) and style.ndim == 3:
            style = self.extract_style(style)
        if style is not None and not isinstance(style, NoiseStyle):
            style = self._check_embedding(style)
        z_c = self.extract_style(i_c)
        z_hat = self._target_code(z_c, style, params, draw, rng)
        i_hat = self.run_stylizer(i_c, z_hat)
        return interpolate_pixels(i_c, i_hat, draw.beta)

    def style_augment_batch(self, images, styles, params: SasslParams, rng: RngStream,
                            view: str = "left", sample_indices=None) -> np.ndarray:
        """Per-sample style augmentation of a B x C x H x W batch.

        Sample ``b`` draws from ``rng.child(sample_indices[b], view)``, so each
        output matches :meth:`style_augment` on that sample alone. ``styles``
        is a B x D array, a B x C x H x W batch of style images, a
        :class:`NoiseStyle`, or None.
        """
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[0] < 1:
            raise ShapeError(f"style_augment_batch: expected non-empty NCHW batch, got {images.shape}")
        b = images.shape[0]
        if sample_indices is None:
            sample_indices = range(b)
        streams = [rng.child(int(i), view) for i in sample_indices]
        draws = [draw_style_params(params, s) for s in streams]
        out = images.copy()
        idx = [i for i, d in enumerate(draws) if d.applied]
        if not idx:
            return out
        contents = images[idx]
        if isinstance(styles, np.ndarray) and styles.ndim == 4:
            styles = self.extract_style(styles[idx])
        elif isinstance(styles, (np.ndarray, list, tuple)):
            styles = np.asarray(styles, dtype=np.float32)
            if styles.shape != (b, self.embed_dim):
                raise ShapeError(f"style_augment_batch: style codes {styles.shape} for batch of {b}")
            styles = styles[idx]
        z_c = self.extract_style(contents)
        z_hat = np.empty_like(z_c)
        for row, i in enumerate(idx):
            style = styles if isinstance(styles, NoiseStyle) or styles is None else styles[row]
            z_hat[row] = self._target_code(z_c[row], style, params, draws[i], streams[i])
        i_hat = self.run_stylizer(contents, z_hat)
        for row, i in enumerate(idx):
            out[i] = interpolate_pixels(images[i], i_hat[row], draws[i].beta)
        return out
