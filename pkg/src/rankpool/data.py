"""Dataset ingestion and synthetic fixtures.

Loaders are pure functions of file bytes: pixels normalize to [0, 1] as
float64, labels are int64 class indices. MNIST IDX files may be plain or
gzip-compressed (sniffed from the two-byte gzip magic); the IDX headers
themselves are big-endian 32-bit as published.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegenerateLabelsError

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 channel-planar pixels


@dataclass
class Dataset:
    images: np.ndarray  # (n, h, w, channels) in [0, 1]
    labels: np.ndarray  # (n,) int64 in [0, class_count)
    class_count: int
    name: str

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 4:
            raise DataFormatError("images must be (n, h, w, channels)")
        if self.labels.size != self.images.shape[0]:
            raise DataFormatError("label count does not match image count")

    @property
    def n(self):
        return self.images.shape[0]


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw, path, magic_expected, ndims):
    """Big-endian u32 magic plus ``ndims`` u32 size fields."""
    want = 4 * (1 + ndims)
    if len(raw) < want:
        raise DataFormatError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + ndims}I", raw[:want])
    if fields[0] != magic_expected:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{fields[0]:08x}, expected 0x{magic_expected:08x}"
        )
    return fields[1:], raw[want:]


def load_mnist(images_path, labels_path, name="mnist"):
    """Parse an MNIST IDX image/label file pair into a Dataset."""
    raw_img = _read_bytes(images_path)
    (n, rows, cols), body = _idx_header(raw_img, images_path, MNIST_IMAGE_MAGIC, 3)
    if len(body) < n * rows * cols:
        raise DataFormatError(f"{images_path}: truncated image data")
    images = (
        np.frombuffer(body[: n * rows * cols], dtype=np.uint8)
        .reshape(n, rows, cols, 1)
        .astype(np.float64)
        / 255.0
    )

    raw_lab = _read_bytes(labels_path)
    (n_lab,), lab_body = _idx_header(raw_lab, labels_path, MNIST_LABEL_MAGIC, 1)
    if n_lab != n:
        raise DataFormatError(
            f"label count {n_lab} does not match image count {n}"
        )
    if len(lab_body) < n_lab:
        raise DataFormatError(f"{labels_path}: truncated label data")
    labels = np.frombuffer(lab_body[:n_lab], dtype=np.uint8).astype(np.int64)
    return Dataset(images=images, labels=labels, class_count=10, name=name)


def load_cifar10(batch_paths, name="cifar10"):
    """Parse CIFAR-10 binary batches (3073-byte records, channel-planar RGB)."""
    chunks, labels = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = records[:, 0]
        if batch_labels.max() >= 10:
            raise DataFormatError(f"{path}: label byte >= 10")
        pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        chunks.append(pixels.astype(np.float64) / 255.0)
        labels.append(batch_labels.astype(np.int64))
    if not chunks:
        raise DataFormatError("no CIFAR-10 batch paths given")
    return Dataset(
        images=np.concatenate(chunks),
        labels=np.concatenate(labels),
        class_count=10,
        name=name,
    )


def synthetic_blobs(n, h, w, c, seed=0, noise=0.15):
    """Linearly separable labeled images for fast tests.

    Class k gets a vertical beacon stripe (disjoint per class) lit to 1.0 on
    top of low-amplitude seeded noise, so flattened pixels separate the
    classes by construction. Labels cycle round-robin over the classes.
    """
    if c < 2:
        raise DegenerateLabelsError("synthetic blobs need >= 2 classes")
    if w < c:
        raise DataFormatError(f"width {w} too small for {c} class stripes")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % c
    images = noise * rng.random((n, h, w, 1))
    stripe = w // c
    for i in range(n):
        k = labels[i]
        images[i, :, k * stripe : k * stripe + stripe, 0] = 1.0
    return Dataset(images=images, labels=labels, class_count=c, name="blobs")


def mean_center(train_ds, test_ds):
    """Subtract the train-set mean image from both splits (new Datasets)."""
    mean_image = train_ds.images.mean(axis=0)
    centered = []
    for ds in (train_ds, test_ds):
        centered.append(
            Dataset(
                images=ds.images - mean_image,
                labels=ds.labels,
                class_count=ds.class_count,
                name=ds.name,
            )
        )
    return tuple(centered)


def subset(dataset, per_class, seed=0):
    """Seeded stratified sample: exactly per_class rows per class (or all if fewer)."""
    rng = np.random.default_rng(seed)
    keep = []
    for k in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == k)
        if idx.size > per_class:
            idx = rng.choice(idx, size=per_class, replace=False)
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    return Dataset(
        images=dataset.images[keep],
        labels=dataset.labels[keep],
        class_count=dataset.class_count,
        name=dataset.name,
    )
