"""Checkpoint files (``.ssck``): a named table of float32 parameters.

Layout, little-endian::

    offset  size  field
    0       4     magic b"SSCK"
    4       4     format version, uint32 (= 1)
    8       8     training step, uint64
    16      32    sha256 of the run configuration text
    48      4     parameter count, uint32
    then per parameter:
            2     name length in bytes, uint16
            n     utf-8 name
            1     ndim, uint8
            4*nd  dims, uint32 each
            4*k   float32 payload, row-major
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..nst import StyleExtractor, StyleTransfer, StylizationNetwork
from ..ssltrain.model import ModelConfig, SslModel

MAGIC = b"SSCK"
VERSION = 1
_HEADER = struct.Struct("<4sIQ32sI")
HEADER_SIZE = _HEADER.size


class CheckpointError(Exception):
    """Unreadable, truncated or incompatible checkpoint."""


def config_hash(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    step: int = 0
    config_hash: bytes = field(default=bytes(32))

    def __post_init__(self):
        if len(self.config_hash) != 32:
            raise ValueError("config_hash must be 32 bytes")


def save_checkpoint(path, params: dict[str, np.ndarray], step: int = 0, config_text: str = "") -> None:
    chunks = [_HEADER.pack(MAGIC, VERSION, step, config_hash(config_text), len(params))]
    for name, value in params.items():
        raw_name = name.encode("utf-8")
        arr = np.asarray(value, dtype="<f4")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"parameter {name!r} cannot be encoded")
        chunks.append(struct.pack("<H", len(raw_name)) + raw_name)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise CheckpointError(f"{path}: too short for a checkpoint header")
    magic, version, step, digest, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = HEADER_SIZE
    params = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", raw, pos)
            shape = struct.unpack_from(f"<{ndim}I", raw, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(raw):
                raise CheckpointError(f"{path}: payload of {name!r} truncated")
            params[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
            pos += 4 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt parameter table") from exc
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return Checkpoint(params, step, digest)


# ------------------------------------------------------------ model helpers


def save_model(path, model: SslModel, step: int = 0, config_text: str = "") -> None:
    save_checkpoint(path, model.state_dict(), step, config_text)


def model_config_from_state(state: dict[str, np.ndarray]) -> ModelConfig:
    """Recover the architecture from parameter names and shapes."""
    try:
        widths = []
        while f"encoder.convs.{len(widths)}.weight" in state:
            widths.append(state[f"encoder.convs.{len(widths)}.weight"].shape[0])
        hidden = state["projector.fc1.weight"].shape[1]
        out = state["projector.fc2.weight"].shape[1]
    except KeyError as exc:
        raise CheckpointError(f"not an SSL model checkpoint (missing {exc})") from None
    if not widths:
        raise CheckpointError("not an SSL model checkpoint (no encoder layers)")
    use_predictor = any(k.startswith("predictor.") for k in state)
    return ModelConfig(tuple(widths), hidden, out, use_predictor)


def load_model(path) -> tuple[SslModel, Checkpoint]:
    ckpt = load_checkpoint(path)
    model = SslModel(model_config_from_state(ckpt.params))
    try:
        model.load_state_dict(ckpt.params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return model, ckpt


def styler_state(styler: StyleTransfer) -> dict[str, np.ndarray]:
    state = {f"extractor.{k}": v for k, v in styler.extractor.state_dict().items()}
    state.update({f"stylizer.{k}": v for k, v in styler.stylizer.state_dict().items()})
    return state


def save_styler(path, styler: StyleTransfer) -> None:
    save_checkpoint(path, styler_state(styler))


def load_styler(path) -> StyleTransfer:
    """Rebuild extractor and stylizer (default widths) from a weights file."""
    ckpt = load_checkpoint(path)
    ext = {k[len("extractor."):]: v for k, v in ckpt.params.items() if k.startswith("extractor.")}
    sty = {k[len("stylizer."):]: v for k, v in ckpt.params.items() if k.startswith("stylizer.")}
    if not ext or not sty:
        raise CheckpointError(f"{path}: not a style-transfer weights file")
    styled = sorted({int(k.split(".")[1]) + 1 for k in sty if k.startswith("cins.")})
    embed_dim = ext["head.weight"].shape[1] if "head.weight" in ext else None
    if embed_dim is None:
        raise CheckpointError(f"{path}: extractor head missing")
    extractor = StyleExtractor(embed_dim=embed_dim)
    stylizer = StylizationNetwork(embed_dim=embed_dim, styled_layers=styled or "none")
    try:
        extractor.load_state_dict(ext)
        stylizer.load_state_dict(sty)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return StyleTransfer(extractor, stylizer)
