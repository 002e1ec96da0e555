import gzip
import struct

import numpy as np
import pytest

from hybkan.data import (
    DatasetSource,
    FormatError,
    LengthError,
    load_dataset,
    load_mnist,
    read_cifar10_batch,
    read_idx_images,
    read_idx_labels,
    synthetic_frequency,
)
from hybkan.tensor import ConfigError


def _idx_images(n, rows=4, cols=4, magic=2051):
    pixels = np.arange(n * rows * cols, dtype=np.uint8)
    return struct.pack(">IIII", magic, n, rows, cols) + pixels.tobytes(), pixels.reshape(n, rows, cols)


def test_idx_images_round_trip(tmp_path):
    blob, expected = _idx_images(3)
    (tmp_path / "img").write_bytes(blob)
    assert np.array_equal(read_idx_images(tmp_path / "img"), expected)
    with gzip.open(tmp_path / "img.gz", "wb") as fh:
        fh.write(blob)
    assert np.array_equal(read_idx_images(tmp_path / "img.gz"), expected)


def test_idx_bad_magic(tmp_path):
    blob, _ = _idx_images(2, magic=2049)
    (tmp_path / "img").write_bytes(blob)
    with pytest.raises(FormatError):
        read_idx_images(tmp_path / "img")
    (tmp_path / "lab").write_bytes(struct.pack(">II", 2051, 1) + b"\x01")
    with pytest.raises(FormatError):
        read_idx_labels(tmp_path / "lab")


def test_idx_truncation(tmp_path):
    blob, _ = _idx_images(3)
    (tmp_path / "img").write_bytes(blob[:-1])
    with pytest.raises(LengthError):
        read_idx_images(tmp_path / "img")
    (tmp_path / "short").write_bytes(blob[:10])
    with pytest.raises(LengthError):
        read_idx_images(tmp_path / "short")
    (tmp_path / "lab").write_bytes(struct.pack(">II", 2049, 5) + b"\x01\x02")
    with pytest.raises(LengthError):
        read_idx_labels(tmp_path / "lab")


def test_mnist_loader_from_idx_files(tmp_path):
    rng = np.random.default_rng(0)
    for prefix, n in (("train", 6), ("t10k", 4)):
        imgs = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=n, dtype=np.uint8)
        (tmp_path / f"{prefix}-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 2051, n, 28, 28) + imgs.tobytes())
        (tmp_path / f"{prefix}-labels-idx1-ubyte").write_bytes(struct.pack(">II", 2049, n) + labels.tobytes())
    train, test = load_mnist(tmp_path)
    assert train.images.shape == (6, 1, 28, 28) and len(test) == 4
    assert train.num_classes == 10
    raw = read_idx_images(tmp_path / "train-images-idx3-ubyte")
    assert np.allclose(train.images[:, 0], (raw / 255.0 - 0.1307) / 0.3081, atol=1e-5)


def test_cifar_record_count(tmp_path):
    size = 30_730_000
    data = np.zeros(size, dtype=np.uint8)
    data[::3073] = np.arange(10_000) % 10
    (tmp_path / "batch.bin").write_bytes(data.tobytes())
    images, labels = read_cifar10_batch(tmp_path / "batch.bin")
    assert images.shape == (10_000, 3, 32, 32)
    assert labels[:12].tolist() == [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]


def test_cifar_truncated(tmp_path):
    (tmp_path / "batch.bin").write_bytes(bytes(3073 * 2 - 5))
    with pytest.raises(LengthError):
        read_cifar10_batch(tmp_path / "batch.bin")


def test_synthetic_determinism_and_balance():
    a, b = synthetic_frequency(200, seed=7), synthetic_frequency(200, seed=7)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    c = synthetic_frequency(200, seed=8)
    assert not np.array_equal(a.images, c.images)
    assert 60 < a.labels.sum() < 140
    assert abs(float(a.images.mean())) < 1e-5


def test_synthetic_classes_differ_in_frequency():
    ds = synthetic_frequency(200, 16, seed=1, noise=0.0, dtype=np.float64)
    energy = np.abs(np.diff(ds.images[:, 0], axis=-1)).mean(axis=(1, 2))
    assert energy[ds.labels == 1].mean() > 2 * energy[ds.labels == 0].mean()


def test_load_dataset_dispatch(tmp_path):
    train, test = load_dataset(DatasetSource("synthetic", seed=3, n_train=20, n_test=10, image_size=8))
    assert len(train) == 20 and len(test) == 10
    assert not np.array_equal(train.images[:10], test.images)
    with pytest.raises(ConfigError):
        load_dataset(DatasetSource("mnist"))
    with pytest.raises(ConfigError):
        load_dataset(DatasetSource("imagenet", path=str(tmp_path)))
    with pytest.raises(FileNotFoundError):
        load_dataset(DatasetSource("mnist", path=str(tmp_path)))
