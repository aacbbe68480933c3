"""Fixed 24-pixel trigger patterns, batch poisoning, and backdoor test sets.

The eight built-in triggers are solid rectangles anchored at the top-left
image corner, covering every factorization of 24 pixels from 1x24 down to
24x1. Each adversary owns one trigger plus a target class; inputs stamped
with the trigger should be classified as that target once the backdoor is
learned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset
from .errors import GeometryError, InputError

TRIGGER_SHAPES: tuple[tuple[int, int], ...] = (
    (1, 24), (2, 12), (3, 8), (4, 6), (6, 4), (8, 3), (12, 2), (24, 1),
)
TRIGGER_PIXELS = 24


@dataclass(frozen=True)
class TriggerSpec:
    id: int
    rows: int
    cols: int
    origin: tuple[int, int] = (0, 0)
    pixel_value: float = 1.0
    target_class: int = 0

    def __post_init__(self):
        if self.rows * self.cols != TRIGGER_PIXELS:
            raise ValueError(f"trigger {self.id}: {self.rows}x{self.cols} != {TRIGGER_PIXELS} pixels")
        if not 0.0 <= self.pixel_value <= 1.0:
            raise ValueError(f"trigger {self.id}: pixel_value {self.pixel_value} outside [0, 1]")
        if self.target_class < 0:
            raise ValueError(f"trigger {self.id}: negative target class")


def builtin_triggers(num_classes: int) -> list[TriggerSpec]:
    """The eight standard triggers; trigger i defaults to target class i-1."""
    if num_classes < len(TRIGGER_SHAPES):
        raise ValueError(
            f"default targets need num_classes >= {len(TRIGGER_SHAPES)}, got {num_classes}"
        )
    return [
        TriggerSpec(id=i + 1, rows=r, cols=c, target_class=i)
        for i, (r, c) in enumerate(TRIGGER_SHAPES)
    ]


def get_trigger(trigger_id: int, target_class: int | None = None,
                pixel_value: float = 1.0) -> TriggerSpec:
    if not 1 <= trigger_id <= len(TRIGGER_SHAPES):
        raise ValueError(f"trigger id must be in 1..{len(TRIGGER_SHAPES)}, got {trigger_id}")
    rows, cols = TRIGGER_SHAPES[trigger_id - 1]
    return TriggerSpec(
        id=trigger_id, rows=rows, cols=cols, pixel_value=pixel_value,
        target_class=trigger_id - 1 if target_class is None else target_class,
    )


def apply_trigger(image: np.ndarray, t: TriggerSpec) -> np.ndarray:
    """Stamp the trigger rectangle on all channels; the input is not mutated.

    Accepts a single image [C, H, W] or a stack [..., H, W]; the rectangle is
    written across every leading dimension.
    """
    img = np.asarray(image)
    if img.ndim < 2:
        raise GeometryError(f"image needs at least 2 dims, got shape {img.shape}")
    h, w = img.shape[-2], img.shape[-1]
    r0, c0 = t.origin
    if r0 < 0 or c0 < 0 or r0 + t.rows > h or c0 + t.cols > w:
        raise GeometryError(
            f"trigger {t.id} ({t.rows}x{t.cols} at {t.origin}) does not fit {h}x{w} image"
        )
    out = img.copy()
    out[..., r0 : r0 + t.rows, c0 : c0 + t.cols] = img.dtype.type(t.pixel_value)
    return out


def poison_batch(images: np.ndarray, labels: np.ndarray, t: TriggerSpec,
                 fraction: float, rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Stamp round(fraction * batch) uniformly chosen samples and relabel them."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"poison fraction {fraction} outside [0, 1]")
    n = len(labels)
    k = int(round(fraction * n))
    if k == 0:
        return images, labels
    picked = rng.choice(n, size=k, replace=False)
    out_images = images.copy()
    out_labels = labels.copy()
    out_images[picked] = apply_trigger(images[picked], t)
    out_labels[picked] = t.target_class
    return out_images, out_labels


def backdoor_testset(test: Dataset, t: TriggerSpec) -> Dataset:
    """Triggered copies of every test sample whose true label differs from the
    target class, all relabeled to the target. Measures forced misclassification
    only, so genuinely-target samples are excluded."""
    if len(test) == 0:
        raise InputError("empty test set")
    keep = test.labels != t.target_class
    if not keep.any():
        raise InputError(
            f"no test samples outside target class {t.target_class}; backdoor set empty"
        )
    images = apply_trigger(test.images[keep], t)
    labels = np.full(int(keep.sum()), t.target_class, dtype=test.labels.dtype)
    return Dataset(name=f"{test.name}+trigger{t.id}", images=images, labels=labels)


def catalogue_json(triggers: list[TriggerSpec]) -> str:
    """Audit export of trigger geometry as JSON."""
    return json.dumps([asdict(t) for t in triggers], indent=2)
