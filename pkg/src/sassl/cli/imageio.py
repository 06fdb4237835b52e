"""Binary PPM (P6) image folders."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """The first ``count`` header tokens (comments skipped) and the offset after them."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        out.append(raw[start:pos])
    return out, pos + 1  # exactly one whitespace byte ends the header


def read_ppm(path) -> np.ndarray:
    """CHW float32 image in [0, 1]."""
    raw = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _tokens(raw, 4)
    if magic != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError(f"{path}: bad PPM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: bad PPM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * 3
    if len(raw) < offset + n * dtype.itemsize:
        raise ImageFormatError(f"{path}: pixel data truncated")
    pix = np.frombuffer(raw, dtype=dtype, count=n, offset=offset).reshape(h, w, 3)
    return (pix.transpose(2, 0, 1).astype(np.float32) / np.float32(maxval))


def to_bytes(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ImageFormatError(f"expected a 3 x H x W image, got {img.shape}")
    return np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    pix = to_bytes(image)
    _, h, w = pix.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + pix.transpose(1, 2, 0).tobytes())


def list_images(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"{folder}: no such image folder")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in (".ppm", ".pnm"))


def read_folder(folder) -> tuple[list[str], np.ndarray]:
    """Names and an N x 3 x H x W stack; every image must share one size."""
    paths = list_images(folder)
    if not paths:
        raise ImageFormatError(f"{folder}: no .ppm images found")
    images = [read_ppm(p) for p in paths]
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ImageFormatError(f"{folder}: images differ in size {sorted(shapes)}")
    return [p.name for p in paths], np.stack(images)


def write_dataset(folder, images, labels, split) -> None:
    """Images as ``00000.ppm``... plus ``labels.csv`` (file,label,split)."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    with open(folder / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["file", "label", "split"])
        for i, (img, y, s) in enumerate(zip(images, labels, split)):
            name = f"{i:05d}.ppm"
            write_ppm(folder / name, img)
            writer.writerow([name, int(y), s])


def read_dataset(folder):
    from ..evaluation.synth import LabeledDataset

    folder = Path(folder)
    index = folder / "labels.csv"
    if not index.is_file():
        raise FileNotFoundError(f"{folder}: missing labels.csv")
    with open(index, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ImageFormatError(f"{index}: no rows")
    images = np.stack([read_ppm(folder / r["file"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    return LabeledDataset(images, labels, np.array([r["split"] for r in rows]))
