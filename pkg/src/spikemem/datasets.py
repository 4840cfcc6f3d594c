"""MNIST IDX ingestion (big-endian magic, transparently gzipped)."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _open(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _resolve(directory: Path, stem: str) -> Path:
    for suffix in ("", ".gz"):
        for sep in ("-", "."):
            p = directory / f"{stem}{suffix}".replace("-idx", f"{sep}idx")
            if p.exists():
                return p
    raise DataError(f"dataset file {stem}[.gz] not found under {directory}")


def load_idx_images(path: str | Path) -> np.ndarray:
    """Images as float32 in [0, 1], flattened to (count, rows*cols)."""
    with _open(Path(path)) as f:
        magic, count, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != IMAGE_MAGIC:
            raise DataError(f"bad image magic {magic:#010x} in {path}")
        raw = f.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise DataError(f"truncated image file {path}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    return pixels.astype(np.float32) / 255.0


def load_idx_labels(path: str | Path) -> np.ndarray:
    with _open(Path(path)) as f:
        magic, count = struct.unpack(">II", f.read(8))
        if magic != LABEL_MAGIC:
            raise DataError(f"bad label magic {magic:#010x} in {path}")
        raw = f.read(count)
    if len(raw) != count:
        raise DataError(f"truncated label file {path}")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist(directory: str | Path, train_count: int = 10000, test_count: int = 2000):
    """Desk-scale MNIST subsets: first train_count / test_count samples."""
    directory = Path(directory)
    tx = load_idx_images(_resolve(directory, "train-images-idx3-ubyte"))
    ty = load_idx_labels(_resolve(directory, "train-labels-idx1-ubyte"))
    ex = load_idx_images(_resolve(directory, "t10k-images-idx3-ubyte"))
    ey = load_idx_labels(_resolve(directory, "t10k-labels-idx1-ubyte"))
    if train_count > tx.shape[0] or test_count > ex.shape[0]:
        raise DataError("requested subset larger than dataset")
    return tx[:train_count], ty[:train_count], ex[:test_count], ey[:test_count]
