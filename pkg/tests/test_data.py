import gzip
import struct

import numpy as np
import pytest

from conftest import mnist_paths, requires_mnist
from rankpool.data import (
    Dataset,
    load_cifar10,
    load_mnist,
    subset,
    synthetic_blobs,
)
from rankpool.errors import DataFormatError, DegenerateLabelsError


def idx_images_bytes(pixels):
    """Hand-assembled IDX image file: magic, count, rows, cols, raw bytes."""
    arr = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = arr.shape
    return struct.pack(">IIII", 0x00000803, n, rows, cols) + arr.tobytes()


def idx_labels_bytes(labels):
    arr = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x00000801, arr.size) + arr.tobytes()


@pytest.fixture
def mnist_fixture(tmp_path):
    pixels = np.zeros((2, 3, 3), dtype=np.uint8)
    pixels[0, 0, 0] = 200
    pixels[1, 2, 1] = 17
    img = tmp_path / "imgs.idx"
    lab = tmp_path / "labs.idx"
    img.write_bytes(idx_images_bytes(pixels))
    lab.write_bytes(idx_labels_bytes([3, 9]))
    return img, lab


class TestMnistLoader:
    def test_hand_built_fixture(self, mnist_fixture):
        ds = load_mnist(*mnist_fixture)
        assert ds.images.shape == (2, 3, 3, 1)
        assert ds.images[0, 0, 0, 0] == 200 / 255.0
        assert ds.images[1, 2, 1, 0] == 17 / 255.0
        assert ds.labels.tolist() == [3, 9]

    def test_gzipped_fixture(self, tmp_path, mnist_fixture):
        img, lab = mnist_fixture
        img_gz = tmp_path / "imgs.idx.gz"
        lab_gz = tmp_path / "labs.idx.gz"
        img_gz.write_bytes(gzip.compress(img.read_bytes()))
        lab_gz.write_bytes(gzip.compress(lab.read_bytes()))
        plain = load_mnist(img, lab)
        zipped = load_mnist(img_gz, lab_gz)
        assert np.array_equal(plain.images, zipped.images)
        assert np.array_equal(plain.labels, zipped.labels)

    def test_bad_image_magic(self, tmp_path, mnist_fixture):
        _, lab = mnist_fixture
        bad = tmp_path / "bad.idx"
        bad.write_bytes(struct.pack(">IIII", 0x12345678, 1, 3, 3) + bytes(9))
        with pytest.raises(DataFormatError, match="magic"):
            load_mnist(bad, lab)

    def test_bad_label_magic(self, tmp_path, mnist_fixture):
        img, _ = mnist_fixture
        bad = tmp_path / "bad.idx"
        bad.write_bytes(struct.pack(">II", 0x00000999, 2) + bytes(2))
        with pytest.raises(DataFormatError, match="magic"):
            load_mnist(img, bad)

    def test_truncated_images(self, tmp_path, mnist_fixture):
        _, lab = mnist_fixture
        cut = tmp_path / "cut.idx"
        cut.write_bytes(struct.pack(">IIII", 0x00000803, 2, 3, 3) + bytes(5))
        with pytest.raises(DataFormatError, match="truncated"):
            load_mnist(cut, lab)

    def test_count_mismatch(self, tmp_path, mnist_fixture):
        img, _ = mnist_fixture
        lab3 = tmp_path / "labs3.idx"
        lab3.write_bytes(idx_labels_bytes([1, 2, 3]))
        with pytest.raises(DataFormatError, match="count"):
            load_mnist(img, lab3)

    @requires_mnist
    def test_official_train_count(self):
        ds = load_mnist(*mnist_paths("train"))
        assert ds.n == 60_000
        assert ds.images.shape == (60_000, 28, 28, 1)
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0
        assert ds.labels.min() == 0 and ds.labels.max() == 9

    @requires_mnist
    def test_official_test_count(self):
        ds = load_mnist(*mnist_paths("test"))
        assert ds.n == 10_000


def cifar_record(label, fill):
    pixels = np.full(3072, fill, dtype=np.uint8)
    pixels[0] = 123  # first red pixel
    return bytes([label]) + pixels.tobytes()


class TestCifarLoader:
    def test_single_record_fixture(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(cifar_record(7, 50))
        ds = load_cifar10([path])
        assert ds.n == 1
        assert ds.labels[0] == 7
        assert ds.images.shape == (1, 32, 32, 3)
        assert ds.images[0, 0, 0, 0] == 123 / 255.0  # channel-planar decode
        assert ds.images[0, 0, 1, 0] == 50 / 255.0

    def test_multiple_batches_concatenate(self, tmp_path):
        paths = []
        for b in range(5):
            p = tmp_path / f"b{b}.bin"
            p.write_bytes(cifar_record(b, 10) + cifar_record(9 - b, 20))
            paths.append(p)
        ds = load_cifar10(paths)
        assert ds.n == 10
        assert ds.labels[0] == 0 and ds.labels[1] == 9

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.bin"
        p.write_bytes(b"")
        with pytest.raises(DataFormatError):
            load_cifar10([p])

    def test_misaligned_size_rejected(self, tmp_path):
        p = tmp_path / "short.bin"
        p.write_bytes(cifar_record(1, 0)[:-1])
        with pytest.raises(DataFormatError, match="multiple"):
            load_cifar10([p])

    def test_label_out_of_range_rejected(self, tmp_path):
        p = tmp_path / "badlabel.bin"
        p.write_bytes(cifar_record(11, 0))
        with pytest.raises(DataFormatError, match="label"):
            load_cifar10([p])


class TestSyntheticBlobs:
    def test_linearly_separable(self):
        ds = synthetic_blobs(64, 10, 10, 2, seed=0)
        flat = ds.images.reshape(64, -1)
        onehot = np.eye(2)[ds.labels]
        coef, *_ = np.linalg.lstsq(
            np.hstack([flat, np.ones((64, 1))]), onehot, rcond=None
        )
        preds = np.argmax(np.hstack([flat, np.ones((64, 1))]) @ coef, axis=1)
        assert np.array_equal(preds, ds.labels)

    def test_seed_reproducible(self):
        a = synthetic_blobs(16, 8, 8, 4, seed=5)
        b = synthetic_blobs(16, 8, 8, 4, seed=5)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            synthetic_blobs(8, 8, 8, 1, seed=0)

    def test_pixels_in_unit_interval(self):
        ds = synthetic_blobs(32, 9, 9, 3, seed=1)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


class TestSubset:
    def make(self, n=60, c=3):
        rng = np.random.default_rng(0)
        return Dataset(
            images=rng.random((n, 4, 4, 1)),
            labels=np.arange(n) % c,
            class_count=c,
            name="toy",
        )

    def test_exact_per_class_counts(self):
        ds = subset(self.make(), per_class=5, seed=1)
        assert ds.n == 15
        assert np.array_equal(np.bincount(ds.labels), [5, 5, 5])

    def test_per_class_exceeding_size_keeps_all(self):
        ds = subset(self.make(n=9, c=3), per_class=100, seed=1)
        assert ds.n == 9

    def test_same_seed_same_rows(self):
        a = subset(self.make(), per_class=4, seed=2)
        b = subset(self.make(), per_class=4, seed=2)
        assert np.array_equal(a.images, b.images)

    @requires_mnist
    def test_mnist_per_class_thousand(self):
        ds = subset(load_mnist(*mnist_paths("train")), per_class=1000, seed=0)
        assert ds.n == 10_000
        assert np.array_equal(np.bincount(ds.labels), np.full(10, 1000))
