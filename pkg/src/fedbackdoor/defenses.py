"""Server-side per-update defenses: norm clipping and Gaussian noising.

Both transforms act on a submitted parameter vector before aggregation.
Clipping rescales the update's deviation from the current global model so
its L2 norm is at most the bound; the noise defense adds independent
zero-mean Gaussian noise (sigma is the standard deviation) per coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .seeds import derive_seed

DEFENSE_MODES = ("none", "clip", "dp", "clip_then_dp")


@dataclass(frozen=True)
class DefenseConfig:
    mode: str = "none"
    clip_bound: float = 5.0
    noise_sigma: float = 0.001
    noise_seed: int = 0

    def __post_init__(self):
        if self.mode not in DEFENSE_MODES:
            raise ValueError(f"defense mode {self.mode!r} not in {DEFENSE_MODES}")
        if self.mode in ("clip", "clip_then_dp") and not self.clip_bound > 0:
            raise ValueError(f"clip_bound must be > 0, got {self.clip_bound}")
        if self.mode in ("dp", "clip_then_dp") and self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def clip_update(update: np.ndarray, global_params: np.ndarray, bound: float) -> np.ndarray:
    """Rescale (update - global) by min(1, bound / ||update - global||_2)."""
    if update.shape != global_params.shape:
        raise DimensionError(f"update {update.shape} vs global {global_params.shape}")
    if not bound > 0:
        raise ValueError(f"clip bound must be > 0, got {bound}")
    delta = update - global_params
    norm = float(np.sqrt(np.square(delta, dtype=np.float64).sum()))
    if norm <= bound:
        return update.copy()
    factor = update.dtype.type(bound / norm)
    return global_params + delta * factor


def add_dp_noise(update: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) per coordinate; sigma = 0 returns the update unchanged."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return update.copy()
    noise = rng.normal(0.0, sigma, size=update.shape).astype(update.dtype)
    return update + noise


def apply_defense(update: np.ndarray, global_params: np.ndarray, cfg: DefenseConfig,
                  round_no: int, client_id: int) -> np.ndarray:
    """Run the configured transforms on one submitted update.

    The noise stream is derived from (noise_seed, round, client_id) so the
    result is identical no matter which worker thread processes the update.
    """
    out = update
    if cfg.mode in ("clip", "clip_then_dp"):
        out = clip_update(out, global_params, cfg.clip_bound)
    if cfg.mode in ("dp", "clip_then_dp"):
        rng = np.random.default_rng(derive_seed(cfg.noise_seed, "noise", round_no, client_id))
        out = add_dp_noise(out, cfg.noise_sigma, rng)
    return out
