"""Dataset readers: MNIST IDX, CIFAR-10 binary batches, and a synthetic frequency task."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import ConfigError

__all__ = [
    "FormatError",
    "LengthError",
    "ImageDataset",
    "DatasetSource",
    "read_idx_images",
    "read_idx_labels",
    "read_cifar10_batch",
    "load_mnist",
    "load_cifar10",
    "synthetic_frequency",
    "load_dataset",
]

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR_RECORD = 3073


class FormatError(ValueError):
    """File header does not match the expected format."""


class LengthError(ValueError):
    """File is shorter (or longer) than its header promises."""


@dataclass
class ImageDataset:
    images: np.ndarray  # (N, C, H, W), normalised
    labels: np.ndarray  # (N,) int64
    num_classes: int
    name: str = ""

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, n: int) -> "ImageDataset":
        return ImageDataset(self.images[:n], self.labels[:n], self.num_classes, self.name)


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def read_idx_images(path) -> np.ndarray:
    """``(N, rows, cols)`` uint8 images from an IDX3 file (optionally gzipped)."""
    data = _read_bytes(path)
    if len(data) < 16:
        raise LengthError(f"{path}: header truncated")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{path}: image magic {magic}, expected {IDX_IMAGE_MAGIC}")
    expected = 16 + n * rows * cols
    if len(data) != expected:
        raise LengthError(f"{path}: {len(data)} bytes, header implies {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 8:
        raise LengthError(f"{path}: header truncated")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(f"{path}: label magic {magic}, expected {IDX_LABEL_MAGIC}")
    if len(data) != 8 + n:
        raise LengthError(f"{path}: {len(data)} bytes, header implies {8 + n}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def read_cifar10_batch(path):
    """``(images (N, 3, 32, 32) uint8, labels (N,))`` from one binary batch file."""
    data = _read_bytes(path)
    if len(data) == 0 or len(data) % CIFAR_RECORD:
        raise LengthError(f"{path}: {len(data)} bytes is not a whole number of {CIFAR_RECORD}-byte records")
    rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise FormatError(f"{path}: label {labels.max()} outside 0..9")
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def _normalise(images_u8: np.ndarray, mean, std, dtype) -> np.ndarray:
    x = images_u8.astype(dtype) / 255.0
    mean = np.asarray(mean, dtype=dtype).reshape(1, -1, 1, 1)
    std = np.asarray(std, dtype=dtype).reshape(1, -1, 1, 1)
    return (x - mean) / std


MNIST_STATS = ((0.1307,), (0.3081,))
CIFAR_STATS = ((0.4914, 0.4822, 0.4465), (0.2470, 0.2435, 0.2616))


def _find(root: Path, stem: str) -> Path:
    for cand in (root / stem, root / f"{stem}.gz"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{stem}[.gz] not found under {root}")


def load_mnist(root, dtype=np.float32, stats=MNIST_STATS):
    """Train and test :class:`ImageDataset` from the four standard IDX files under ``root``."""
    root = Path(root)
    out = []
    for prefix in ("train", "t10k"):
        imgs = read_idx_images(_find(root, f"{prefix}-images-idx3-ubyte"))
        labels = read_idx_labels(_find(root, f"{prefix}-labels-idx1-ubyte"))
        if len(imgs) != len(labels):
            raise LengthError(f"{prefix}: {len(imgs)} images but {len(labels)} labels")
        out.append(ImageDataset(_normalise(imgs[:, None], *stats, dtype), labels, 10, f"mnist-{prefix}"))
    return tuple(out)


def load_cifar10(root, dtype=np.float32, stats=CIFAR_STATS):
    root = Path(root)
    parts = [read_cifar10_batch(_find(root, f"data_batch_{i}.bin")) for i in range(1, 6)]
    train_x = np.concatenate([p[0] for p in parts])
    train_y = np.concatenate([p[1] for p in parts])
    test_x, test_y = read_cifar10_batch(_find(root, "test_batch.bin"))
    return (ImageDataset(_normalise(train_x, *stats, dtype), train_y, 10, "cifar10-train"),
            ImageDataset(_normalise(test_x, *stats, dtype), test_y, 10, "cifar10-test"))


def _blob_image(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0, size, 2)
        s = rng.uniform(size / 5, size / 3)
        img += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return img


def _stripe_image(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    period = rng.uniform(2.0, 4.0)
    phase = rng.uniform(0, 2 * np.pi)
    proj = xx * np.cos(theta) + yy * np.sin(theta)
    return 0.5 + 0.5 * np.sin(2 * np.pi * proj / period + phase)


def synthetic_frequency(n: int = 1024, image_size: int = 16, seed: int = 0, noise: float = 0.05,
                        dtype=np.float32) -> ImageDataset:
    """Seeded two-class set: low-frequency Gaussian blobs (0) vs high-frequency stripes (1).

    Images are rescaled per image to ``[0, 1]``, mildly noised, then
    standardised with the dataset mean and std.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    imgs = np.empty((n, 1, image_size, image_size))
    for i, y in enumerate(labels):
        img = _stripe_image(rng, image_size) if y else _blob_image(rng, image_size)
        img = (img - img.min()) / (np.ptp(img) + 1e-12)
        img = np.clip(img + noise * rng.standard_normal(img.shape), 0.0, 1.0)
        imgs[i, 0] = img
    imgs = (imgs - imgs.mean()) / imgs.std()
    return ImageDataset(imgs.astype(dtype), labels.astype(np.int64), 2, f"synthetic-{seed}")


@dataclass
class DatasetSource:
    kind: str = "synthetic"  # mnist | cifar10 | synthetic
    path: str | None = None
    seed: int = 0
    n_train: int = 1024
    n_test: int = 512
    image_size: int = 16
    extra: dict = field(default_factory=dict)


def load_dataset(src: DatasetSource, dtype=np.float32):
    """Return ``(train, test)`` datasets for ``src``."""
    kind = src.kind.lower()
    if kind == "synthetic":
        return (synthetic_frequency(src.n_train, src.image_size, src.seed, dtype=dtype),
                synthetic_frequency(src.n_test, src.image_size, src.seed + 10_007, dtype=dtype))
    if src.path is None:
        raise ConfigError(f"dataset {kind!r} needs a path")
    if kind in ("mnist", "mnist-idx", "idx"):
        return load_mnist(src.path, dtype)
    if kind in ("cifar10", "cifar", "cifar10-binary"):
        return load_cifar10(src.path, dtype)
    raise ConfigError(f"unknown dataset kind {src.kind!r}")
