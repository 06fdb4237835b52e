"""Two-view augmentation pipeline with the style block between crop and flip.

Order per view: random resized crop, style augmentation (stylized views
only), horizontal flip, colour jitter, grayscale, Gaussian blur, solarize.
Each transform reads only its own keyed substream of the (sample, view)
stream, so toggling one transform never perturbs another's draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numcore import resize_array
from .nst.augment import SasslParams, StyleTransfer
from .rng import RngStream
from .stylebank import StyleBank, resolve_styles

VIEWS = ("left", "right")
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class AugPolicy:
    crop_area_range: tuple[float, float] = (0.08, 1.0)
    crop_aspect_range: tuple[float, float] = (3 / 4, 4 / 3)
    output_size: int = 32
    hflip_p: float = 0.5
    jitter_p: float = 0.8
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    grayscale_p: float = 0.2
    blur_p: dict = field(default_factory=lambda: {"left": 1.0, "right": 0.1})
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)
    solarize_p: dict = field(default_factory=lambda: {"left": 0.0, "right": 0.2})
    solarize_threshold: float = 0.5
    sassl: SasslParams | None = field(default_factory=SasslParams)
    sassl_views: tuple[str, ...] = ("left",)

    def __post_init__(self):
        probs = {"hflip_p": self.hflip_p, "jitter_p": self.jitter_p, "grayscale_p": self.grayscale_p}
        probs.update({f"blur_p[{v}]": p for v, p in self.blur_p.items()})
        probs.update({f"solarize_p[{v}]": p for v, p in self.solarize_p.items()})
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("crop_area_range", "crop_aspect_range", "blur_sigma_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max, got ({lo}, {hi})")
        if self.crop_area_range[1] > 1.0:
            raise ValueError("crop_area_range max cannot exceed 1")
        if self.output_size < 1:
            raise ValueError("output_size must be positive")
        for v in self.sassl_views:
            if v not in VIEWS:
                raise ValueError(f"unknown view {v!r} in sassl_views")
        for name in ("brightness", "contrast", "saturation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} strength must lie in [0, 1]")
        if not 0.0 <= self.hue <= 0.5:
            raise ValueError("hue strength must lie in [0, 0.5]")

    def without_sassl(self) -> "AugPolicy":
        return replace(self, sassl=None, sassl_views=())

    def stylizes(self, view: str) -> bool:
        return self.sassl is not None and view in self.sassl_views


# ---------------------------------------------------------------- transforms


def crop_rect(height: int, width: int, policy: AugPolicy, rng: RngStream) -> tuple[int, int, int, int]:
    """(top, left, h, w) of a random resized crop; center-crop fallback after 10 tries."""
    gen = rng.generator("crop")
    area = height * width
    lo_r, hi_r = policy.crop_aspect_range
    log_ratio = (math.log(lo_r), math.log(hi_r))
    for _ in range(10):
        target = area * gen.uniform(*policy.crop_area_range)
        ratio = math.exp(gen.uniform(*log_ratio))
        w = int(round(math.sqrt(target * ratio)))
        h = int(round(math.sqrt(target / ratio)))
        if 0 < w <= width and 0 < h <= height:
            top = int(gen.integers(0, height - h + 1))
            left = int(gen.integers(0, width - w + 1))
            return top, left, h, w
    in_ratio = width / height
    if in_ratio < lo_r:
        w, h = width, int(round(width / lo_r))
    elif in_ratio > hi_r:
        h, w = height, int(round(height * hi_r))
    else:
        w, h = width, height
    h, w = max(1, min(h, height)), max(1, min(w, width))
    return (height - h) // 2, (width - w) // 2, h, w


def random_resized_crop(image: np.ndarray, policy: AugPolicy, rng: RngStream) -> np.ndarray:
    c, height, width = image.shape
    if height * width <= 1:
        raise ValueError(f"random_resized_crop: image {image.shape} too small")
    top, left, h, w = crop_rect(height, width, policy, rng)
    patch = image[:, top:top + h, left:left + w]
    s = policy.output_size
    return resize_array(np.ascontiguousarray(patch), (s, s)).astype(np.float32)


def hflip(image: np.ndarray, p: float, rng: RngStream) -> np.ndarray:
    if rng.uniform("hflip") < p:
        return np.ascontiguousarray(image[..., ::-1])
    return image


def _luma(image: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA.astype(image.dtype), image, axes=(0, 0))


def adjust_brightness(image, factor):
    return np.clip(image * image.dtype.type(factor), 0, 1)


def adjust_contrast(image, factor):
    m = image.dtype.type(_luma(image).mean())
    return np.clip((image - m) * image.dtype.type(factor) + m, 0, 1)


def adjust_saturation(image, factor):
    gray = _luma(image)[None]
    return np.clip(gray + (image - gray) * image.dtype.type(factor), 0, 1)


def adjust_hue(image, delta):
    from .numcore import kernels

    return np.clip(kernels.hue_shift(image, float(delta)), 0, 1).astype(image.dtype)


def color_jitter(image: np.ndarray, policy: AugPolicy, rng: RngStream) -> np.ndarray:
    """Brightness, contrast, saturation and hue in a random order, with prob ``jitter_p``.

    Factors are drawn as ``1 + U(-s, s)``; the hue shift as ``U(-hue/2, hue/2)``
    turns of the hue circle. Values are clamped after every step.
    """
    if image.shape[0] != 3:
        raise ValueError(f"color_jitter needs an RGB image, got {image.shape[0]} channels")
    gen = rng.generator("jitter")
    if not gen.uniform() < policy.jitter_p:
        return image
    factors = {
        "brightness": 1 + gen.uniform(-policy.brightness, policy.brightness),
        "contrast": 1 + gen.uniform(-policy.contrast, policy.contrast),
        "saturation": 1 + gen.uniform(-policy.saturation, policy.saturation),
        "hue": gen.uniform(-policy.hue / 2, policy.hue / 2),
    }
    ops = {"brightness": adjust_brightness, "contrast": adjust_contrast,
           "saturation": adjust_saturation, "hue": adjust_hue}
    out = image
    for name in gen.permutation(list(ops)):
        if name == "hue" and factors["hue"] == 0.0:
            continue
        if name != "hue" and factors[name] == 1.0:
            continue
        out = ops[name](out, factors[name])
    return out


def grayscale(image: np.ndarray, p: float, rng: RngStream) -> np.ndarray:
    if rng.uniform("grayscale") < p:
        gray = _luma(image)
        return np.ascontiguousarray(np.broadcast_to(gray, image.shape))
    return image


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(2 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def _blur_matrix(n: int, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    rows = np.repeat(np.arange(n), len(kernel))
    cols = np.clip(rows + np.tile(np.arange(-radius, radius + 1), n), 0, n - 1)
    m = np.zeros((n, n))
    np.add.at(m, (rows, cols), np.tile(kernel, n))
    return m


def blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamped edges."""
    k = gaussian_kernel(sigma)
    h, w = image.shape[-2:]
    by = _blur_matrix(h, k).astype(image.dtype)
    bx = _blur_matrix(w, k).astype(image.dtype)
    return np.ascontiguousarray(by @ image @ bx.T)


def gaussian_blur(image: np.ndarray, policy: AugPolicy, view: str, rng: RngStream) -> np.ndarray:
    gen = rng.generator("blur")
    if not gen.uniform() < policy.blur_p[view]:
        return image
    return blur(image, gen.uniform(*policy.blur_sigma_range))


def solarize(image: np.ndarray, policy: AugPolicy, view: str, rng: RngStream) -> np.ndarray:
    if not rng.uniform("solarize") < policy.solarize_p[view]:
        return image
    return np.where(image > policy.solarize_threshold, 1 - image, image).astype(image.dtype)


# ------------------------------------------------------------------ pipeline


def post_style(image: np.ndarray, policy: AugPolicy, view: str, rng: RngStream) -> np.ndarray:
    """The transforms that follow the style block."""
    out = hflip(image, policy.hflip_p, rng)
    out = color_jitter(out, policy, rng)
    out = grayscale(out, policy.grayscale_p, rng)
    out = gaussian_blur(out, policy, view, rng)
    out = solarize(out, policy, view, rng)
    return np.clip(out, 0, 1).astype(np.float32)


def augment_view(image, policy: AugPolicy, view: str, sample_index: int, rng: RngStream,
                 styler: StyleTransfer | None = None, style=None) -> np.ndarray:
    """One augmented view of one CHW image.

    ``rng`` is the root stream; the view uses ``rng.child(sample_index, view)``.
    """
    if view not in VIEWS:
        raise ValueError(f"view must be one of {VIEWS}, got {view!r}")
    image = np.asarray(image, dtype=np.float32)
    stream = rng.child(int(sample_index), view)
    out = random_resized_crop(image, policy, stream)
    if policy.stylizes(view):
        if styler is None:
            raise ValueError("policy stylizes this view but no StyleTransfer was given")
        out = styler.style_augment(out, style, policy.sassl, stream)
    return post_style(out, policy, view, stream)


def make_views(batch, policy: AugPolicy, rng: RngStream, styler: StyleTransfer | None = None,
               bank: StyleBank | None = None, sample_indices=None,
               inbatch_offset: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Left and right views of every image in a B x C x H x W batch.

    Style references are resolved per ``policy.sassl.style_source`` from the
    cropped content batch of each stylized view.
    """
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 4 or batch.shape[0] < 1:
        raise ValueError(f"make_views: expected a non-empty NCHW batch, got {batch.shape}")
    if sample_indices is None:
        sample_indices = list(range(batch.shape[0]))
    views = {}
    for view in VIEWS:
        streams = [rng.child(int(i), view) for i in sample_indices]
        crops = np.stack([random_resized_crop(img, policy, s) for img, s in zip(batch, streams)])
        if policy.stylizes(view):
            if styler is None:
                raise ValueError("policy stylizes a view but no StyleTransfer was given")
            styles = resolve_styles(policy.sassl, crops, rng.child("styles", view), bank, inbatch_offset)
            crops = styler.style_augment_batch(crops, styles, policy.sassl, rng, view, sample_indices)
        views[view] = np.stack([post_style(c, policy, view, s) for c, s in zip(crops, streams)])
    return views["left"], views["right"]
