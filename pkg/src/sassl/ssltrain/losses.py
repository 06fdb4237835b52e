"""Contrastive objectives."""

from __future__ import annotations

import numpy as np

from .. import numcore as nc
from ..numcore import ShapeError, Tensor

NORM_GUARD = 1e-12


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape}")
    denom = max(np.linalg.norm(a), NORM_GUARD) * max(np.linalg.norm(b), NORM_GUARD)
    return float(a @ b / denom)


def _normalize_rows(z: Tensor) -> Tensor:
    norms = nc.l2norm(z, axis=1, keepdims=True)
    return nc.div(z, nc.affine(norms, 1.0, NORM_GUARD))


def _logsumexp_rows(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """log sum_j mask_ij exp(logits_ij), stabilised by a constant row max."""
    shift = logits.data.max(axis=1, keepdims=True)
    if mask is not None:
        shift = np.where(mask, logits.data, -np.inf).max(axis=1, keepdims=True)
    e = nc.exp(nc.sub(logits, Tensor(shift)))
    if mask is not None:
        e = nc.mul(e, Tensor(mask.astype(logits.dtype)))
    return nc.add(nc.log(nc.sum_(e, axis=1)), Tensor(shift[:, 0]))


def nt_xent(embeddings, temperature: float = 0.1) -> Tensor:
    """Symmetric NT-Xent over 2N rows where rows 2k and 2k+1 are views of sample k.

    The denominator for anchor m sums over every l != m (the positive included).
    """
    z = nc.as_tensor(embeddings)
    if z.ndim != 2 or z.shape[0] % 2 or z.shape[0] == 0:
        raise ShapeError(f"nt_xent: need an even, non-zero number of rows, got {z.shape}")
    if temperature <= 0:
        raise ValueError("nt_xent: temperature must be positive")
    n2 = z.shape[0]
    zn = _normalize_rows(z)
    logits = nc.affine(nc.matmul(zn, nc.transpose(zn)), 1.0 / temperature)
    partner = np.arange(n2) ^ 1
    positives = nc.getitem(logits, (np.arange(n2), partner))
    mask = ~np.eye(n2, dtype=bool)
    lse = _logsumexp_rows(logits, mask)
    return nc.mean(nc.sub(lse, positives))


def nt_xent_momentum(queries, keys, temperature: float = 0.1) -> Tensor:
    """InfoNCE with online-tower queries and momentum-tower keys.

    Row i of each side comes from the same sample; positives sit on the
    diagonal. Keys are treated as constants.
    """
    q = nc.as_tensor(queries)
    k = np.asarray(keys.data if isinstance(keys, Tensor) else keys)
    if q.ndim != 2 or k.shape != q.shape:
        raise ShapeError(f"nt_xent_momentum: query shape {q.shape} vs key shape {k.shape}")
    if temperature <= 0:
        raise ValueError("nt_xent_momentum: temperature must be positive")
    n = q.shape[0]
    qn = _normalize_rows(q)
    kn = k / (np.linalg.norm(k, axis=1, keepdims=True) + NORM_GUARD)
    logits = nc.affine(nc.matmul(qn, Tensor(kn.T.astype(q.dtype))), 1.0 / temperature)
    positives = nc.getitem(logits, (np.arange(n), np.arange(n)))
    return nc.mean(nc.sub(_logsumexp_rows(logits), positives))
