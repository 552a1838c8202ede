import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from irnet.data import (
    CIFAR10_MEAN,
    CIFAR10_STD,
    DATA_ENV,
    MNIST_MEAN,
    MNIST_STD,
    load_cifar10,
    load_dataset,
    load_mnist,
    parse_cifar10_batch,
    parse_idx,
)
from irnet.errors import ConfigError, FormatError

MNIST_DIR = Path(os.environ.get(DATA_ENV, "/root/data")) / "mnist"


def idx_bytes(arr, magic):
    arr = np.asarray(arr, np.uint8)
    return struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


def write_mnist(d: Path, n=5, prefix="train", gz=False, seed=0):
    rng = np.random.default_rng(seed)
    imgs = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labs = rng.integers(0, 10, size=n, dtype=np.uint8)
    for name, data in ((f"{prefix}-images-idx3-ubyte", idx_bytes(imgs, 0x803)),
                       (f"{prefix}-labels-idx1-ubyte", idx_bytes(labs, 0x801))):
        if gz:
            (d / (name + ".gz")).write_bytes(gzip.compress(data))
        else:
            (d / name).write_bytes(data)
    return imgs, labs


def cifar_bytes(n, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n, dtype=np.uint8)
    pix = rng.integers(0, 256, size=(n, 3072), dtype=np.uint8)
    return np.concatenate([labels[:, None], pix], axis=1).tobytes(), labels, pix


class TestIdx:
    def test_parse(self):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        assert np.array_equal(parse_idx(idx_bytes(arr, 0x803), 0x803), arr)

    def test_bad_magic(self):
        raw = idx_bytes(np.zeros(3), 0x801)
        with pytest.raises(FormatError, match=r"expected 0x00000803, found 0x00000801.*offset 0"):
            parse_idx(raw, 0x803)

    def test_truncated(self):
        raw = idx_bytes(np.zeros((2, 2, 2)), 0x803)
        with pytest.raises(FormatError, match="offset"):
            parse_idx(raw[:-1], 0x803)
        with pytest.raises(FormatError, match="truncated"):
            parse_idx(raw[:3], 0x803)

    def test_load_mnist(self, tmp_path):
        imgs, labs = write_mnist(tmp_path, 5)
        ds = load_mnist(tmp_path, "train")
        assert ds.images.shape == (5, 1, 28, 28) and ds.images.dtype == np.float32
        assert np.array_equal(ds.labels, labs)
        expected = (imgs[:, None] / 255.0 - MNIST_MEAN[0]) / MNIST_STD[0]
        np.testing.assert_allclose(ds.images, expected, atol=1e-5)

    def test_gzip(self, tmp_path):
        _, labs = write_mnist(tmp_path, 4, prefix="t10k", gz=True)
        assert np.array_equal(load_mnist(tmp_path, "test").labels, labs)

    def test_count_mismatch(self, tmp_path):
        write_mnist(tmp_path, 5)
        (tmp_path / "train-labels-idx1-ubyte").write_bytes(idx_bytes(np.zeros(4), 0x801))
        with pytest.raises(FormatError):
            load_mnist(tmp_path, "train")

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_mnist(tmp_path, "train")

    @pytest.mark.skipif(not (MNIST_DIR / "train-labels-idx1-ubyte").exists(), reason="MNIST not present")
    def test_real_mnist_sizes(self):
        tr = load_mnist(MNIST_DIR, "train")
        te = load_mnist(MNIST_DIR, "test")
        assert tr.images.shape == (60000, 1, 28, 28)
        assert te.images.shape == (10000, 1, 28, 28)


class TestCifar:
    def test_parse(self):
        raw, labels, pix = cifar_bytes(10)
        x, y = parse_cifar10_batch(raw)
        assert len(raw) == 10 * 3073
        assert np.array_equal(y, labels)
        assert np.array_equal(x.reshape(10, -1), pix)

    def test_bad_size(self):
        raw, _, _ = cifar_bytes(2)
        with pytest.raises(FormatError, match="offset 3073"):
            parse_cifar10_batch(raw[:-1])

    def test_bad_label(self):
        raw = bytearray(cifar_bytes(3)[0])
        raw[3073] = 10
        with pytest.raises(FormatError, match="offset 3073"):
            parse_cifar10_batch(bytes(raw))

    def test_load(self, tmp_path):
        sub = tmp_path / "cifar-10-batches-bin"
        sub.mkdir()
        for i in range(1, 6):
            (sub / f"data_batch_{i}.bin").write_bytes(cifar_bytes(4, seed=i)[0])
        raw, labels, pix = cifar_bytes(6, seed=9)
        (sub / "test_batch.bin").write_bytes(raw)
        tr = load_cifar10(tmp_path, "train")
        te = load_cifar10(tmp_path, "test")
        assert tr.images.shape == (20, 3, 32, 32)
        assert np.array_equal(te.labels, labels)
        m = np.array(CIFAR10_MEAN).reshape(1, 3, 1, 1)
        s = np.array(CIFAR10_STD).reshape(1, 3, 1, 1)
        np.testing.assert_allclose(te.images, (pix.reshape(6, 3, 32, 32) / 255.0 - m) / s, atol=1e-5)


class TestLoadDataset:
    def test_env_root(self, tmp_path, monkeypatch):
        (tmp_path / "mnist").mkdir()
        write_mnist(tmp_path / "mnist", 3, prefix="t10k")
        monkeypatch.setenv(DATA_ENV, str(tmp_path))
        assert len(load_dataset("mnist", split="test")) == 3

    def test_explicit_dir(self, tmp_path):
        write_mnist(tmp_path, 3)
        assert len(load_dataset("mnist", tmp_path, "train").subset(2)) == 2

    def test_unknown(self):
        with pytest.raises(ConfigError):
            load_dataset("imagenet")
