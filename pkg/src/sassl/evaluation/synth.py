"""Procedural desk-scale datasets.

Each class is a geometric shape (disk, square, triangle, cross) drawn over
a randomised oriented texture. Class hue is only a weak cue: per-sample hue
jitter is wide, so geometry is what separates the classes.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

SHAPES = ("disk", "square", "triangle", "cross")


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 4
    n_train: int = 1000
    n_test: int = 200
    image_size: int = 32
    hue_jitter: float = 0.25
    noise_scale: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.classes <= len(SHAPES):
            raise ValueError(f"classes must lie in 1..{len(SHAPES)}")
        if self.n_train < self.classes or self.n_test < 0:
            raise ValueError("need at least one training image per class")
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels) or len(self.labels) != len(self.split):
            raise ValueError("images, labels and split tags differ in length")

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, tag: str) -> "LabeledDataset":
        mask = self.split == tag
        return LabeledDataset(self.images[mask], self.labels[mask], self.split[mask])

    @property
    def train(self) -> "LabeledDataset":
        return self.subset("train")

    @property
    def test(self) -> "LabeledDataset":
        return self.subset("test")


def _shape_mask(shape: str, size: int, cy: float, cx: float, radius: float, angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dy, dx = yy - cy, xx - cx
    ca, sa = np.cos(angle), np.sin(angle)
    u, v = ca * dx + sa * dy, -sa * dx + ca * dy
    if shape == "disk":
        return u * u + v * v <= radius * radius
    if shape == "square":
        r = radius * 0.85
        return (np.abs(u) <= r) & (np.abs(v) <= r)
    if shape == "triangle":
        # equilateral, centred on its centroid
        r = radius * 1.15
        inside = np.ones_like(u, dtype=bool)
        for k in range(3):
            th = angle + np.pi / 2 + k * 2 * np.pi / 3
            inside &= (np.cos(th) * dx + np.sin(th) * dy) <= r / 2
        return inside
    if shape == "cross":
        arm = radius * 0.35
        return ((np.abs(u) <= arm) & (np.abs(v) <= radius)) | ((np.abs(v) <= arm) & (np.abs(u) <= radius))
    raise ValueError(f"unknown shape {shape!r}")


def _hsv(h, s, v) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def _texture(rng: np.random.Generator, size: int, noise_scale: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.15, 0.6)
    wave = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + rng.uniform(0, 2 * np.pi))
    c1 = _hsv(rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.3, 0.7))
    c2 = _hsv(rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.3, 0.7))
    t = (wave + 1) / 2
    img = c1[:, None, None] * t + c2[:, None, None] * (1 - t)
    return img + rng.normal(0, noise_scale, size=(3, size, size))


def render(label: int, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    s = spec.image_size
    img = _texture(rng, s, spec.noise_scale)
    radius = rng.uniform(0.22, 0.32) * s
    margin = radius * 1.1
    cy, cx = rng.uniform(margin, s - margin, size=2)
    mask = _shape_mask(SHAPES[label], s, cy, cx, radius, rng.uniform(0, 2 * np.pi))
    base_hue = label / spec.classes
    color = _hsv(base_hue + rng.uniform(-spec.hue_jitter, spec.hue_jitter),
                 rng.uniform(0.5, 1.0), rng.uniform(0.6, 1.0))
    img = np.where(mask[None], color[:, None, None], img)
    return np.clip(img, 0, 1).astype(np.float32)


def gen_synth(spec: SynthSpec) -> LabeledDataset:
    """Deterministic labelled dataset; class counts are balanced to within one."""
    rng = np.random.default_rng([spec.seed, 0xDA7A])
    images, labels, split = [], [], []
    for tag, n in (("train", spec.n_train), ("test", spec.n_test)):
        lab = np.arange(n) % spec.classes
        rng.shuffle(lab)
        for y in lab:
            images.append(render(int(y), spec, rng))
            labels.append(int(y))
            split.append(tag)
    imgs = np.stack(images) if images else np.zeros((0, 3, spec.image_size, spec.image_size), np.float32)
    return LabeledDataset(imgs, np.asarray(labels, dtype=np.int64), np.asarray(split))


def gen_style_images(n: int, size: int = 32, seed: int = 0) -> np.ndarray:
    """Texture-only "paintings" used as an external style dataset."""
    rng = np.random.default_rng([seed, 0x57E])
    out = np.empty((n, 3, size, size), dtype=np.float32)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    for i in range(n):
        palette = np.stack([_hsv(rng.uniform(), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0))
                            for _ in range(3)])
        field = np.zeros((3, size, size))
        for _ in range(rng.integers(2, 5)):
            theta = rng.uniform(0, np.pi)
            f = rng.uniform(2, 12)
            field += rng.normal(size=(3, 1, 1)) * np.sin(
                2 * np.pi * f * (np.cos(theta) * xx + np.sin(theta) * yy) + rng.uniform(0, 2 * np.pi))
        w = np.exp(field)
        w /= w.sum(axis=0, keepdims=True)
        img = np.tensordot(palette.T, w, axes=(1, 0))
        out[i] = np.clip(img + rng.normal(0, 0.04, size=img.shape), 0, 1)
    return out
