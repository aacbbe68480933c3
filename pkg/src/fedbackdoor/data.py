"""IDX dataset loading, Dirichlet partitioning, and deterministic batching.

IDX wire format (big-endian): images carry magic 0x00000803 followed by
count, rows, cols as u32 and then unsigned pixel bytes row-major; labels
carry magic 0x00000801 followed by count and label bytes. Files ending in
`.gz` are decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataFormatError, InputError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    name: str
    images: np.ndarray  # [count, channels, height, width] float32 in [0, 1]
    labels: np.ndarray  # [count] int64

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class PartitionMap:
    client_indices: list[np.ndarray]
    alpha: float
    seed: int


def _open_binary(path):
    p = Path(path)
    if p.suffix == ".gz":
        return gzip.open(p, "rb")
    return open(p, "rb")


def _read_u32s(f, n, path):
    raw = f.read(4 * n)
    if len(raw) != 4 * n:
        raise DataFormatError(f"{path}: truncated header")
    return struct.unpack(f">{n}I", raw)


def _read_exact(f, n, path):
    raw = f.read(n)
    if len(raw) != n:
        raise DataFormatError(f"{path}: truncated, expected {n} more bytes")
    if f.read(1):
        raise DataFormatError(f"{path}: trailing bytes after payload")
    return raw


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 image array [count, rows, cols] from an IDX file."""
    with _open_binary(path) as f:
        magic, count, rows, cols = _read_u32s(f, 4, path)
        if magic != IMAGES_MAGIC:
            raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, want 0x{IMAGES_MAGIC:08x}")
        raw = _read_exact(f, count * rows * cols, path)
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open_binary(path) as f:
        magic, count = _read_u32s(f, 2, path)
        if magic != LABELS_MAGIC:
            raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, want 0x{LABELS_MAGIC:08x}")
        raw = _read_exact(f, count, path)
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images [count, rows, cols] in IDX format (gzip if `.gz`)."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with (gzip.open(path, "wb") if str(path).endswith(".gz") else open(path, "wb")) as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, count, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with (gzip.open(path, "wb") if str(path).endswith(".gz") else open(path, "wb")) as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx(images_path, labels_path, name: str = "") -> Dataset:
    """Load an image/label IDX pair, scaling pixels to [0, 1] by /255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataFormatError(
            f"{images_path}: {len(images)} images but {len(labels)} labels in {labels_path}"
        )
    if len(images) == 0:
        raise DataFormatError(f"{images_path}: empty dataset")
    floats = (images.astype(np.float32) / np.float32(255.0))[:, None, :, :]
    return Dataset(name=name or Path(str(images_path)).stem, images=floats, labels=labels)


def dirichlet_partition(ds: Dataset | np.ndarray, n_clients: int, alpha: float,
                        seed: int) -> PartitionMap:
    """Split sample indices across clients, one Dirichlet draw per class.

    For each class, proportions p ~ Dirichlet(alpha * 1_N) slice that class's
    shuffled index list by cumulative share. Draws leaving any client empty
    are rejected and redrawn with seed+1, seed+2, ... so every shard is
    nonempty. Deterministic in (labels, n_clients, alpha, seed).
    """
    labels = ds.labels if isinstance(ds, Dataset) else np.asarray(ds)
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if len(labels) < n_clients:
        raise InputError(f"{len(labels)} samples cannot cover {n_clients} clients")

    classes = np.unique(labels)
    attempt_seed = int(seed)
    while True:
        rng = np.random.default_rng(attempt_seed)
        shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        for c in classes:
            idx = np.flatnonzero(labels == c)
            rng.shuffle(idx)
            proportions = rng.dirichlet(np.full(n_clients, alpha))
            cuts = (np.cumsum(proportions)[:-1] * len(idx)).astype(np.int64)
            for client, part in enumerate(np.split(idx, cuts)):
                shards[client].append(part)
        client_indices = [np.sort(np.concatenate(parts)) for parts in shards]
        if all(len(ci) > 0 for ci in client_indices):
            return PartitionMap(client_indices=client_indices, alpha=float(alpha),
                                seed=int(seed))
        attempt_seed += 1


def batches(images: np.ndarray, labels: np.ndarray, batch_size: int,
            epoch_seed: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled minibatches over one epoch; the final partial batch is kept."""
    n = len(labels)
    if n == 0:
        raise InputError("cannot batch an empty subset")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(epoch_seed).permutation(n)
    for start in range(0, n, batch_size):
        take = order[start : start + batch_size]
        yield images[take], labels[take]
