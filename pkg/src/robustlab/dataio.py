"""Dataset container plus the IDX loader and synthetic blob generator.

IDX files are parsed big-endian with strict magic/count validation; ``.gz``
paths are decompressed transparently. Pixels land in [0, 1] as float64.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InputError, UsageError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray          # (n, d) float64 in [0, 1]
    labels: np.ndarray          # (n,) int64 in [0, n_classes)
    n_classes: int
    split: str = ""
    provenance: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise InputError(
                f"images {self.images.shape} and labels {self.labels.shape} do not line up")
        if self.images.shape[0] == 0:
            raise InputError("dataset must contain at least one example")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise InputError("pixel values must lie in [0, 1]")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise InputError(
                f"labels must lie in [0, {self.n_classes}), got [{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, n: int) -> "Dataset":
        """First n examples in file order."""
        n = min(n, len(self))
        return Dataset(self.images[:n], self.labels[:n], self.n_classes, self.split, self.provenance)


def _read_exact(f, count: int, path: str, offset: int) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(
            f"{path}: truncated, wanted {count} bytes at offset {offset}, got {len(data)}")
    return data


def _read_be32(f, path: str, offset: int) -> int:
    return struct.unpack(">I", _read_exact(f, 4, path, offset))[0]


def _open_maybe_gz(path):
    p = str(path)
    if p.endswith(".gz"):
        return gzip.open(p, "rb")
    return open(p, "rb")


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Image files must carry magic 0x00000803 with dims [n, rows, cols];
    label files magic 0x00000801. Counts must agree between the two files.
    """
    images_path, labels_path = str(images_path), str(labels_path)
    with _open_maybe_gz(images_path) as f:
        magic = _read_be32(f, images_path, 0)
        if magic != IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x} at offset 0 (expected 0x{IMAGES_MAGIC:08x})")
        n = _read_be32(f, images_path, 4)
        rows = _read_be32(f, images_path, 8)
        cols = _read_be32(f, images_path, 12)
        raw = _read_exact(f, n * rows * cols, images_path, 16)
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    with _open_maybe_gz(labels_path) as f:
        magic = _read_be32(f, labels_path, 0)
        if magic != LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x} at offset 0 (expected 0x{LABELS_MAGIC:08x})")
        n_labels = _read_be32(f, labels_path, 4)
        labels = np.frombuffer(_read_exact(f, n_labels, labels_path, 8), dtype=np.uint8)
    if n_labels != n:
        raise DataFormatError(
            f"count mismatch: {images_path} holds {n} images but {labels_path} holds {n_labels} labels")
    images = pixels.astype(np.float64) / 255.0
    return Dataset(images, labels.astype(np.int64), n_classes=int(labels.max()) + 1 if n else 0,
                   provenance=f"idx:{images_path}")


def gen_blobs(classes: int, n_per_class: int, dim: int, separation: float, seed: int) -> Dataset:
    """Gaussian blobs at well-separated random centers, clamped to [0, 1].

    ``separation`` is the guaranteed minimum center distance in units of the
    blob standard deviation, so separation=10 gives linearly separable
    classes with a wide margin.
    """
    if not separation > 0:
        raise UsageError(f"separation must be positive, got {separation}")
    if classes < 2 or n_per_class < 1 or dim < 1:
        raise UsageError("need classes >= 2, n_per_class >= 1, dim >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.25, 0.75, size=(classes, dim))
    dists = [np.linalg.norm(centers[i] - centers[j]) for i in range(classes) for j in range(i + 1, classes)]
    sigma = min(dists) / separation
    images = []
    labels = []
    for c in range(classes):
        pts = centers[c] + sigma * rng.standard_normal((n_per_class, dim))
        images.append(np.clip(pts, 0.0, 1.0))
        labels.append(np.full(n_per_class, c, dtype=np.int64))
    images = np.vstack(images)
    labels = np.concatenate(labels)
    order = rng.permutation(len(labels))
    return Dataset(images[order], labels[order], n_classes=classes,
                   provenance=f"blobs:classes={classes},n={n_per_class},d={dim},sep={separation},seed={seed}")
