"""Dataset loading: IDX binary parsing, normalization, seeded shuffling.

The canonical digit dataset ships as big-endian IDX files: a 4-byte magic
(0x00000803 for images, 0x00000801 for labels), big-endian 32-bit
dimension sizes, then raw unsigned bytes.  No downloader is included;
files are provided locally by path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "IdxFormatError",
    "load_idx",
    "write_idx_images",
    "write_idx_labels",
    "shuffled_indices",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; message includes the offending byte offset."""


@dataclass
class Dataset:
    """Flattened images in [0, 1] with integer labels, immutable after load."""

    images: np.ndarray  # (n, pixels) float32
    labels: np.ndarray  # (n,) int64
    split: str = ""

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        """First ``n`` samples (CI-tier truncation)."""
        if n < 1:
            raise ValueError("subset size must be >= 1")
        return Dataset(self.images[:n], self.labels[:n], self.split)


def _read_u32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path, split: str = "") -> Dataset:
    """Parse an images/labels IDX pair into a normalized dataset.

    Pixels are divided by 255 into [0, 1] float32; labels stay integers.
    Raises :class:`IdxFormatError` with a byte offset on bad magic,
    truncation, or an image/label count mismatch.
    """
    with open(images_path, "rb") as f:
        buf = f.read()
    magic = _read_u32(buf, 0, images_path)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic 0x{magic:08x} at byte 0, "
            f"expected 0x{IMAGE_MAGIC:08x}"
        )
    n = _read_u32(buf, 4, images_path)
    rows = _read_u32(buf, 8, images_path)
    cols = _read_u32(buf, 12, images_path)
    need = 16 + n * rows * cols
    if len(buf) != need:
        raise IdxFormatError(
            f"{images_path}: expected {need} bytes for {n} images of "
            f"{rows}x{cols}, got {len(buf)} (data starts at byte 16)"
        )
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16)
    images = (pixels.astype(np.float32) / 255.0).reshape(n, rows * cols)

    with open(labels_path, "rb") as f:
        lbuf = f.read()
    magic = _read_u32(lbuf, 0, labels_path)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic 0x{magic:08x} at byte 0, "
            f"expected 0x{LABEL_MAGIC:08x}"
        )
    n_labels = _read_u32(lbuf, 4, labels_path)
    if len(lbuf) != 8 + n_labels:
        raise IdxFormatError(
            f"{labels_path}: expected {8 + n_labels} bytes for {n_labels} "
            f"labels, got {len(lbuf)} (data starts at byte 8)"
        )
    if n_labels != n:
        raise IdxFormatError(
            f"{labels_path}: {n_labels} labels for {n} images in {images_path}"
        )
    labels = np.frombuffer(lbuf, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(images=images, labels=labels, split=split)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write (n, rows, cols) uint8 pixel data in IDX format."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"expected (n, rows, cols), got shape {images.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    """Write a label vector in IDX format."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError(f"expected a 1-D label vector, got shape {labels.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def shuffled_indices(n: int, epoch: int, seed: int) -> np.ndarray:
    """Deterministic uniform permutation of 0..n-1, distinct per epoch."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(0x5F, epoch))
    )
    return rng.permutation(n)
