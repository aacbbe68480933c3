import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedbackdoor import data
from fedbackdoor.errors import DataFormatError, InputError

from oracles import partition_skew


def write_pair(tmp_path, images, labels, gz=False):
    suffix = ".gz" if gz else ""
    ip = tmp_path / f"imgs{suffix}"
    lp = tmp_path / f"labs{suffix}"
    data.write_idx_images(ip, images)
    data.write_idx_labels(lp, labels)
    return ip, lp


class TestIdxIO:
    def test_round_trip(self, tmp_path, rng):
        images = rng.integers(0, 256, (12, 9, 7)).astype(np.uint8)
        labels = rng.integers(0, 10, 12).astype(np.uint8)
        ip, lp = write_pair(tmp_path, images, labels)
        ds = data.load_idx(ip, lp)
        assert ds.images.shape == (12, 1, 9, 7)
        assert np.array_equal(ds.labels, labels)
        assert np.array_equal(np.round(ds.images[:, 0] * 255).astype(np.uint8), images)

    def test_gzip_round_trip(self, tmp_path, rng):
        images = rng.integers(0, 256, (5, 4, 4)).astype(np.uint8)
        labels = rng.integers(0, 10, 5).astype(np.uint8)
        ip, lp = write_pair(tmp_path, images, labels, gz=True)
        ds = data.load_idx(ip, lp)
        assert len(ds) == 5

    def test_byte_255_is_exactly_one(self, tmp_path):
        images = np.full((1, 2, 2), 255, np.uint8)
        ip, lp = write_pair(tmp_path, images, np.zeros(1, np.uint8))
        ds = data.load_idx(ip, lp)
        assert np.all(ds.images == 1.0)

    def test_pixel_range(self, desk_train):
        assert desk_train.images.min() >= 0.0
        assert desk_train.images.max() <= 1.0

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(struct.pack(">4I", 0xDEADBEEF, 1, 2, 2) + b"\x00" * 4)
        with pytest.raises(DataFormatError, match="magic"):
            data.read_idx_images(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "trunc"
        p.write_bytes(struct.pack(">4I", data.IMAGES_MAGIC, 10, 28, 28) + b"\x00" * 100)
        with pytest.raises(DataFormatError, match="truncated"):
            data.read_idx_images(p)

    def test_count_mismatch(self, tmp_path, rng):
        ip, _ = write_pair(tmp_path, rng.integers(0, 256, (4, 3, 3)).astype(np.uint8),
                           np.zeros(4, np.uint8))
        lp = tmp_path / "labs2"
        data.write_idx_labels(lp, np.zeros(7, np.uint8))
        with pytest.raises(DataFormatError, match="images but"):
            data.load_idx(ip, lp)

    def test_official_mnist_train_pair(self, mnist):
        ds = data.load_idx(mnist["train_images"], mnist["train_labels"])
        assert len(ds) == 60000
        assert ds.images.shape == (60000, 1, 28, 28)
        assert set(np.unique(ds.labels)) == set(range(10))


class TestDirichletPartition:
    def test_single_client_gets_everything(self, desk_train):
        pm = data.dirichlet_partition(desk_train, 1, 0.5, 0)
        assert np.array_equal(pm.client_indices[0], np.arange(len(desk_train)))

    def test_exact_disjoint_cover(self, desk_train):
        pm = data.dirichlet_partition(desk_train, 37, 0.5, 3)
        merged = np.concatenate(pm.client_indices)
        assert len(merged) == len(desk_train)
        assert np.array_equal(np.sort(merged), np.arange(len(desk_train)))

    @settings(max_examples=20, deadline=None)
    @given(n_clients=st.integers(1, 40), alpha=st.floats(0.05, 50.0),
           seed=st.integers(0, 10_000))
    def test_cover_property(self, n_clients, alpha, seed):
        labels = np.random.default_rng(0).integers(0, 10, 400)
        pm = data.dirichlet_partition(labels, n_clients, alpha, seed)
        merged = np.sort(np.concatenate(pm.client_indices))
        assert np.array_equal(merged, np.arange(400))
        assert all(len(ci) > 0 for ci in pm.client_indices)

    def test_deterministic_and_seed_sensitive(self, desk_train):
        a = data.dirichlet_partition(desk_train, 10, 0.5, 5)
        b = data.dirichlet_partition(desk_train, 10, 0.5, 5)
        assert all(np.array_equal(x, y) for x, y in zip(a.client_indices, b.client_indices))
        seen = set()
        for seed in range(5):
            pm = data.dirichlet_partition(desk_train, 10, 0.5, seed)
            seen.add(tuple(len(ci) for ci in pm.client_indices))
        assert len(seen) > 1

    def test_alpha_controls_skew(self, desk_train):
        labels = desk_train.labels
        skew_low, skew_high = [], []
        for seed in range(10):
            low = data.dirichlet_partition(desk_train, 20, 0.1, seed)
            high = data.dirichlet_partition(desk_train, 20, 1000.0, seed)
            skew_low.append(partition_skew(low.client_indices, labels))
            skew_high.append(partition_skew(high.client_indices, labels))
        assert np.mean(skew_low) > np.mean(skew_high)

    def test_alpha_must_be_positive(self, desk_train):
        with pytest.raises(ValueError):
            data.dirichlet_partition(desk_train, 4, 0.0, 0)
        with pytest.raises(ValueError):
            data.dirichlet_partition(desk_train, 4, -1.0, 0)


class TestBatches:
    def test_sizes_with_partial_tail(self, rng):
        images = rng.random((10, 1, 4, 4), dtype=np.float32)
        labels = rng.integers(0, 3, 10)
        sizes = [len(by) for _, by in data.batches(images, labels, 4, 0)]
        assert sizes == [4, 4, 2]

    def test_same_seed_same_order(self, rng):
        images = rng.random((20, 1, 4, 4), dtype=np.float32)
        labels = np.arange(20)
        order_a = [by.tolist() for _, by in data.batches(images, labels, 6, 42)]
        order_b = [by.tolist() for _, by in data.batches(images, labels, 6, 42)]
        assert order_a == order_b

    def test_epoch_is_exact_multiset(self, rng):
        images = rng.random((33, 1, 2, 2), dtype=np.float32)
        labels = np.arange(33)
        seen = np.concatenate([by for _, by in data.batches(images, labels, 8, 9)])
        assert np.array_equal(np.sort(seen), np.arange(33))

    def test_empty_subset(self):
        with pytest.raises(InputError):
            next(data.batches(np.zeros((0, 1, 2, 2), np.float32), np.zeros(0, np.int64), 4, 0))
