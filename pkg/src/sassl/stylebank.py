"""Style banks: precomputed style codes, their binary file format, and style sources.

File layout (``.ssbk``, little-endian)::

    offset  size  field
    0       4     magic b"SSBK"
    4       4     format version, uint32 (= 1)
    8       4     embedding length D, uint32
    12      8     embedding count, uint64
    20      4*D*count  float32 payload, row-major

The provenance tag is not stored in the file.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .nst.augment import NoiseStyle, SasslParams
from .rng import RngStream

log = logging.getLogger(__name__)

MAGIC = b"SSBK"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
HEADER_SIZE = _HEADER.size


class BankError(Exception):
    """Base class for style bank file errors."""


class BankFormatError(BankError):
    """The file is not a style bank (bad magic)."""


class BankVersionError(BankError):
    """The bank was written by an unsupported format version."""


class BankTruncatedError(BankError):
    """The file is shorter (or longer) than its header declares."""


@dataclass(frozen=True)
class StyleBank:
    embeddings: np.ndarray
    source_tag: str = field(default="", compare=False)

    def __post_init__(self):
        emb = np.array(self.embeddings, dtype="<f4", copy=True)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ValueError(f"bank embeddings must be a non-empty count x D array, got {emb.shape}")
        if not np.isfinite(emb).all():
            raise ValueError("bank embeddings contain non-finite values")
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, StyleBank):
            return NotImplemented
        return self.embeddings.shape == other.embeddings.shape and \
            self.embeddings.tobytes() == other.embeddings.tobytes()


def build_bank(images: Iterable, extractor, source_tag: str = "") -> StyleBank:
    """Extract a style code from every image, preserving input order.

    ``extractor`` is anything with an ``extract_style(image)`` method
    (a :class:`~sassl.nst.StyleTransfer`).
    """
    rows = [np.asarray(extractor.extract_style(img), dtype=np.float32) for img in images]
    if not rows:
        raise ValueError("build_bank: no images given")
    return StyleBank(np.stack(rows), source_tag=source_tag)


def save_bank(bank: StyleBank, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, bank.dim, bank.count)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(bank.embeddings, dtype="<f4").tobytes())


def load_bank(path) -> StyleBank:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        if not MAGIC.startswith(raw[:4]):
            raise BankFormatError(f"{path}: not a style bank")
        raise BankTruncatedError(f"{path}: header truncated ({len(raw)} of {HEADER_SIZE} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BankFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BankVersionError(f"{path}: unsupported bank version {version}")
    expected = HEADER_SIZE + 4 * dim * count
    if len(raw) < expected:
        raise BankTruncatedError(f"{path}: {len(raw)} bytes, header declares {expected}")
    if len(raw) > expected:
        raise BankTruncatedError(f"{path}: {len(raw) - expected} trailing bytes beyond declared payload")
    if dim == 0 or count == 0:
        raise BankFormatError(f"{path}: empty bank (D={dim}, count={count})")
    emb = np.frombuffer(raw, dtype="<f4", count=dim * count, offset=HEADER_SIZE).reshape(count, dim)
    return StyleBank(emb, source_tag=str(path))


def sample_styles(bank: StyleBank, batch_size: int, rng: RngStream) -> np.ndarray:
    """Uniform draws with replacement; returns a batch_size x D array."""
    rows = rng.generator("style.pick").integers(0, bank.count, size=batch_size)
    return bank.embeddings[rows].copy()


def inbatch_pairing(batch_size: int, offset: int = 1) -> np.ndarray:
    """Style index ``(b - offset) mod B`` for every sample ``b`` of the batch."""
    if batch_size < 1:
        raise ValueError("inbatch_pairing: batch size must be positive")
    if batch_size == 1 or offset % batch_size == 0:
        log.warning("in-batch pairing with B=%d, offset=%d pairs samples with themselves "
                    "(equivalent to content_self)", batch_size, offset)
    return (np.arange(batch_size) - offset) % batch_size


def noise_style_params(bank: StyleBank) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and population std of the bank rows."""
    emb = bank.embeddings.astype(np.float64)
    return emb.mean(axis=0), emb.std(axis=0)


def noise_style(bank: StyleBank) -> NoiseStyle:
    mu, sigma = noise_style_params(bank)
    return NoiseStyle(mu, sigma)


def resolve_styles(params: SasslParams, contents: np.ndarray, rng: RngStream,
                   bank: StyleBank | None = None, offset: int = 1):
    """Style references for a content minibatch, per ``params.style_source``.

    Returns what :meth:`StyleTransfer.style_augment_batch` accepts: B style
    codes, B style images, a :class:`NoiseStyle`, or None.
    """
    source = params.style_source
    if source == "external_bank":
        if bank is None:
            raise ValueError("external_bank style source needs a style bank")
        return sample_styles(bank, contents.shape[0], rng)
    if source == "in_batch":
        return contents[inbatch_pairing(contents.shape[0], offset)]
    if source == "gaussian_noise":
        if bank is None:
            raise ValueError("gaussian_noise style source needs a bank to estimate its moments")
        return noise_style(bank)
    return None
