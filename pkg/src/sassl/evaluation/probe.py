"""Frozen-feature evaluation: linear probe, few-shot and texture invariance."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .. import numcore as nc
from ..nst.augment import SasslParams, StyleTransfer
from ..rng import RngStream
from ..ssltrain.losses import cosine_similarity
from ..stylebank import StyleBank, resolve_styles


def encode_dataset(model, images: np.ndarray, size: int | None = None, batch_size: int = 256) -> np.ndarray:
    """Encoder features (no projector) of every image, after an optional square resize."""
    images = np.asarray(images, dtype=np.float32)
    if size is not None and images.shape[-2:] != (size, size):
        images = nc.resize_array(images, (size, size)).astype(np.float32)
    encoder = getattr(model, "encoder", model)
    out = []
    with nc.no_grad():
        for start in range(0, len(images), batch_size):
            out.append(encoder(images[start:start + batch_size]).data)
    if not out:
        return np.zeros((0, 0), dtype=np.float32)
    return np.concatenate(out).astype(np.float32)


def _cross_entropy(logits: nc.Tensor, labels: np.ndarray) -> nc.Tensor:
    shift = logits.data.max(axis=1, keepdims=True)
    lse = nc.add(nc.log(nc.sum_(nc.exp(nc.sub(logits, nc.Tensor(shift))), axis=1)), nc.Tensor(shift[:, 0]))
    picked = nc.getitem(logits, (np.arange(len(labels)), labels))
    return nc.mean(nc.sub(lse, picked))


class LinearProbe:
    """Softmax regression on standardised frozen features, full-batch gradient descent."""

    def __init__(self, epochs: int = 100, lr: float = 0.5):
        self.epochs = epochs
        self.lr = lr

    def fit(self, features: np.ndarray, labels: np.ndarray, num_classes: int | None = None) -> "LinearProbe":
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        k = int(num_classes or y.max() + 1)
        self.mean_ = x.mean(axis=0)
        self.scale_ = x.std(axis=0) + 1e-6
        xs = (x - self.mean_) / self.scale_
        with nc.precision(np.float64):
            w = nc.Parameter(np.zeros((x.shape[1], k)))
            b = nc.Parameter(np.zeros(k), exempt=True)
            xt = nc.Tensor(xs)
            for epoch in range(self.epochs):
                w.grad = b.grad = None
                loss = _cross_entropy(nc.add(nc.matmul(xt, w), b), y)
                nc.backward(loss)
                lr = self.lr * (math.cos(math.pi * epoch / self.epochs) + 1) / 2
                w.data = w.data - lr * w.grad
                b.data = b.data - lr * b.grad
        self.weight_, self.bias_ = w.data, b.data
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        xs = (np.asarray(features, dtype=np.float64) - self.mean_) / self.scale_
        return np.argmax(xs @ self.weight_ + self.bias_, axis=1)

    def accuracy(self, features, labels) -> float:
        labels = np.asarray(labels)
        if len(labels) == 0:
            raise ValueError("accuracy: empty evaluation set")
        return float(np.mean(self.predict(features) == labels))


def linear_probe(features_train, labels_train, features_test, labels_test,
                 epochs: int = 100, lr: float = 0.5) -> float:
    """Top-1 test accuracy of a linear classifier fit on frozen training features."""
    k = int(max(np.max(labels_train), np.max(labels_test)) + 1)
    probe = LinearProbe(epochs, lr).fit(features_train, labels_train, k)
    return probe.accuracy(features_test, labels_test)


def few_shot_split(labels: np.ndarray, k: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Indices of a k-per-class support set and the disjoint remainder."""
    labels = np.asarray(labels)
    support = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < k:
            raise ValueError(f"class {c} has {len(members)} examples, fewer than k={k}")
        support.extend(gen.choice(members, size=k, replace=False))
    support = np.sort(np.asarray(support))
    query = np.setdiff1d(np.arange(len(labels)), support)
    return support, query


def few_shot_eval(features, labels, k: int, trials: int = 5, rng: RngStream | None = None,
                  epochs: int = 50, lr: float = 0.5) -> float:
    """Mean query accuracy over trials of k-shot linear probing."""
    rng = rng or RngStream(0)
    features = np.asarray(features)
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    accs = []
    for t in range(trials):
        support, query = few_shot_split(labels, k, rng.child("fewshot", t).generator("support"))
        if len(query) == 0:
            raise ValueError("few_shot_eval: no query examples left after sampling the support set")
        probe = LinearProbe(epochs, lr).fit(features[support], labels[support], num_classes)
        accs.append(probe.accuracy(features[query], labels[query]))
    return float(np.mean(accs))


def texture_invariance_score(model, images: np.ndarray, styler: StyleTransfer, bank: StyleBank | None,
                             n: int = 64, params: SasslParams | None = None, seed: int = 0) -> float:
    """Mean cosine similarity between encoder features of images and their stylized versions.

    Stylization is always applied (p is forced to 1).
    """
    params = replace(params or SasslParams(), p=1.0)
    images = np.asarray(images[:n], dtype=np.float32)
    rng = RngStream(seed).child("invariance")
    styles = resolve_styles(params, images, rng, bank)
    stylized = styler.style_augment_batch(images, styles, params, rng)
    f_orig = encode_dataset(model, images)
    f_sty = encode_dataset(model, stylized)
    return float(np.mean([cosine_similarity(a, b) for a, b in zip(f_orig, f_sty)]))
