"""Deterministic generator of an MNIST-class digit dataset.

Renders seven-segment digit glyphs onto 28x28 canvases with per-sample
jitter in position, size, stroke intensity, pixel dropout, blur, and
background noise, then writes standard IDX files. Useful where the real
MNIST binaries cannot be fetched: same shape, same value range, same loader
path, and digits sit away from the top-left corner exactly like centered
MNIST digits do, which keeps trigger geometry realistic.

A small fraction of labels is flipped so the loss floor stays above zero;
without it the federation saturates and gradient traffic dies off, which
photographic data never does. Some samples also carry short clutter strokes
at arbitrary canvas positions: the classifier has to learn that stray bright
marks (including ones near the corner) carry no class information, the same
pressure a convolutional model gets from shared kernels on real photos.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import write_idx_images, write_idx_labels

# Standard seven-segment decoding: A top, G middle, D bottom,
# F/B upper verticals (left/right), E/C lower verticals (left/right).
_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGEDC",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}
_THICKNESS = 3


def _draw_glyph(img: np.ndarray, digit: int, top: int, left: int,
                h: int, w: int, value: float) -> None:
    t = _THICKNESS
    mid = (h - t) // 2
    for seg in _SEGMENTS[digit]:
        if seg == "A":
            r0, r1, c0, c1 = 0, t, 0, w
        elif seg == "G":
            r0, r1, c0, c1 = mid, mid + t, 0, w
        elif seg == "D":
            r0, r1, c0, c1 = h - t, h, 0, w
        elif seg == "F":
            r0, r1, c0, c1 = 0, mid + t, 0, t
        elif seg == "B":
            r0, r1, c0, c1 = 0, mid + t, w - t, w
        elif seg == "E":
            r0, r1, c0, c1 = mid, h, 0, t
        else:  # C
            r0, r1, c0, c1 = mid, h, w - t, w
        img[top + r0 : top + r1, left + c0 : left + c1] = value


LABEL_NOISE = 0.02
CLUTTER_PROB = 0.2


def _draw_clutter(img: np.ndarray, rng: np.random.Generator) -> None:
    size = img.shape[0]
    for _ in range(rng.integers(1, 3)):
        if rng.random() < 0.5:
            h, w = rng.integers(1, 4), rng.integers(2, 7)
        else:
            h, w = rng.integers(2, 7), rng.integers(1, 4)
        r0 = rng.integers(0, size - h)
        c0 = rng.integers(0, size - w)
        patch = img[r0 : r0 + h, c0 : c0 + w]
        np.maximum(patch, rng.uniform(0.3, 0.8), out=patch)


def generate_digits(count: int, seed: int, size: int = 28
                    ) -> tuple[np.ndarray, np.ndarray]:
    """uint8 images [count, size, size] and int labels [count]."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, count)
    heights = rng.integers(19, 21, count)
    widths = rng.integers(11, 13, count)
    tops = rng.integers(4, 7, count)
    lefts = rng.integers(7, 10, count)
    intensity = rng.uniform(0.75, 1.0, count)

    canvas = np.zeros((count, size, size), dtype=np.float32)
    for i in range(count):
        _draw_glyph(canvas[i], int(labels[i]), int(tops[i]), int(lefts[i]),
                    int(heights[i]), int(widths[i]), float(intensity[i]))
        if rng.random() < CLUTTER_PROB:
            _draw_clutter(canvas[i], rng)

    canvas *= rng.random(canvas.shape, dtype=np.float32) >= np.float32(0.05)
    canvas = gaussian_filter(canvas, sigma=(0, 0.5, 0.5))
    canvas += np.float32(0.10) * rng.random(canvas.shape, dtype=np.float32)
    np.clip(canvas, 0.0, 1.0, out=canvas)

    flip = rng.random(count) < LABEL_NOISE
    labels[flip] = (labels[flip] + rng.integers(1, 10, int(flip.sum()))) % 10
    return np.round(canvas * 255.0).astype(np.uint8), labels.astype(np.int64)


DEFAULT_TRAIN = 60000
DEFAULT_TEST = 4000

FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "test-images-idx3-ubyte.gz",
    "test_labels": "test-labels-idx1-ubyte.gz",
}


def write_dataset(outdir, train_count: int = DEFAULT_TRAIN,
                  test_count: int = DEFAULT_TEST, seed: int = 7) -> dict[str, str]:
    """Write a train/test IDX pair under `outdir`; returns the file paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    train_x, train_y = generate_digits(train_count, seed)
    test_x, test_y = generate_digits(test_count, seed + 1)
    paths = {k: str(out / v) for k, v in FILES.items()}
    write_idx_images(paths["train_images"], train_x)
    write_idx_labels(paths["train_labels"], train_y)
    write_idx_images(paths["test_images"], test_x)
    write_idx_labels(paths["test_labels"], test_y)
    return paths
