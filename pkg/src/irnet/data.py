"""MNIST (IDX) and CIFAR-10 (binary batch) readers.

Pixels are scaled to [0, 1] and normalized per channel. Images come back as
float32 ``(n, c, h, w)`` arrays to keep the full training set in memory;
batches are promoted to float64 when fed to a model.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

DATA_ENV = "IRNET_DATA"

MNIST_MEAN = (0.1307,)
MNIST_STD = (0.3081,)
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3072


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __len__(self):
        return len(self.labels)

    def subset(self, n):
        return Dataset(self.images[:n], self.labels[:n], self.name)


def data_root(path=None) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get(DATA_ENV, "data"))


def _read_bytes(path: Path) -> bytes:
    if not path.exists() and Path(str(path) + ".gz").exists():
        path = Path(str(path) + ".gz")
    if not path.exists():
        raise FileNotFoundError(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def parse_idx(raw: bytes, expected_magic: int, name="idx") -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"{name}: truncated header", offset=len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise FormatError(f"{name}: bad magic, expected 0x{expected_magic:08x}, found 0x{magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{name}: truncated dimensions", offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise FormatError(f"{name}: expected {count} data bytes, file has {len(raw) - header}",
                          offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def _normalize(pixels_u8, mean, std):
    x = pixels_u8.astype(np.float32) / np.float32(255.0)
    m = np.asarray(mean, np.float32).reshape(1, -1, 1, 1)
    s = np.asarray(std, np.float32).reshape(1, -1, 1, 1)
    return (x - m) / s


def load_mnist(directory, split="train") -> Dataset:
    directory = Path(directory)
    prefix = "train" if split == "train" else "t10k"
    images = parse_idx(_read_bytes(directory / f"{prefix}-images-idx3-ubyte"), IDX_IMAGES_MAGIC,
                       f"{prefix}-images")
    labels = parse_idx(_read_bytes(directory / f"{prefix}-labels-idx1-ubyte"), IDX_LABELS_MAGIC,
                       f"{prefix}-labels")
    if len(images) != len(labels):
        raise FormatError(f"mnist {split}: {len(images)} images but {len(labels)} labels")
    x = _normalize(images[:, None, :, :], MNIST_MEAN, MNIST_STD)
    return Dataset(x, labels.astype(np.int64), f"mnist-{split}")


def parse_cifar10_batch(raw: bytes, name="cifar10"):
    if len(raw) % CIFAR_RECORD:
        whole = len(raw) // CIFAR_RECORD * CIFAR_RECORD
        raise FormatError(f"{name}: size {len(raw)} is not a multiple of {CIFAR_RECORD}", offset=whole)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"{name}: label {labels[bad[0]]} out of range", offset=int(bad[0]) * CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def load_cifar10(directory, split="train") -> Dataset:
    directory = Path(directory)
    if (directory / "cifar-10-batches-bin").is_dir():
        directory = directory / "cifar-10-batches-bin"
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
    imgs, labs = [], []
    for fname in names:
        x, y = parse_cifar10_batch(_read_bytes(directory / fname), fname)
        imgs.append(x)
        labs.append(y)
    x = _normalize(np.concatenate(imgs), CIFAR10_MEAN, CIFAR10_STD)
    return Dataset(x, np.concatenate(labs), f"cifar10-{split}")


LOADERS = {"mnist": load_mnist, "cifar10": load_cifar10}


def load_dataset(name, directory=None, split="train") -> Dataset:
    try:
        loader = LOADERS[name]
    except KeyError:
        raise ConfigError(f"unknown dataset {name!r}; choose from {sorted(LOADERS)}") from None
    root = data_root(directory)
    if (root / name).is_dir():
        root = root / name
    return loader(root, split)


def input_shape(name):
    return {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}[name]
