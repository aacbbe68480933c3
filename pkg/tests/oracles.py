"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (explicit
loops over output positions) so it shares no code path with the vectorized
implementations it checks.
"""

from __future__ import annotations

import numpy as np

from fedbackdoor import nn


def naive_forward(spec: nn.NetworkSpec, params: np.ndarray, x: np.ndarray,
                  record: dict | None = None) -> np.ndarray:
    """Per-element forward pass. Optionally records ReLU inputs and pool
    windows into `record` for smoothness screening."""
    layout = nn.param_layout(spec)
    a = np.asarray(x, dtype=np.float64)
    if record is not None:
        record.setdefault("relu_inputs", [])
        record.setdefault("pool_windows", [])
    for i, ly in enumerate(spec.layers):
        if isinstance(ly, nn.Conv2D):
            w, b = nn._layer_params(params, layout, i)
            bsz, _, h, width = a.shape
            ho = (h - ly.kernel_h) // ly.stride + 1
            wo = (width - ly.kernel_w) // ly.stride + 1
            out = np.zeros((bsz, ly.out_ch, ho, wo))
            for n in range(bsz):
                for o in range(ly.out_ch):
                    for r in range(ho):
                        for c in range(wo):
                            patch = a[n, :, r * ly.stride : r * ly.stride + ly.kernel_h,
                                      c * ly.stride : c * ly.stride + ly.kernel_w]
                            out[n, o, r, c] = (patch * w[o]).sum() + b[o]
            a = out
        elif isinstance(ly, nn.MaxPool):
            k = ly.k
            bsz, ch, h, width = a.shape
            out = np.zeros((bsz, ch, h // k, width // k))
            for n in range(bsz):
                for c in range(ch):
                    for r in range(h // k):
                        for q in range(width // k):
                            window = a[n, c, r * k : (r + 1) * k, q * k : (q + 1) * k]
                            out[n, c, r, q] = window.max()
                            if record is not None:
                                record["pool_windows"].append(window.ravel().copy())
            a = out
        elif isinstance(ly, nn.ReLU):
            if record is not None:
                record["relu_inputs"].append(a.ravel().copy())
            a = np.where(a > 0, a, 0.0)
        elif isinstance(ly, nn.Flatten):
            a = a.reshape(a.shape[0], -1)
        else:  # Dense
            w, b = nn._layer_params(params, layout, i)
            out = np.zeros((a.shape[0], ly.out_dim))
            for n in range(a.shape[0]):
                for o in range(ly.out_dim):
                    out[n, o] = (w[o] * a[n]).sum() + b[o]
            a = out
    return a


def is_smooth_at(spec: nn.NetworkSpec, params: np.ndarray, x: np.ndarray,
                 margin: float = 2e-3) -> bool:
    """True when no ReLU input or pooling decision sits within `margin` of a
    switch, i.e. the loss is differentiable throughout a finite-difference
    probe around these parameters."""
    record: dict = {}
    naive_forward(spec, params, x, record=record)
    for z in record["relu_inputs"]:
        if np.abs(z).min() <= margin:
            return False
    for window in record["pool_windows"]:
        top = np.sort(window)[::-1]
        if top[0] > 0 and len(top) > 1 and top[0] - top[1] <= margin:
            return False
    return True


def fd_gradient(spec: nn.NetworkSpec, params: np.ndarray, x: np.ndarray,
                labels: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of the mean cross-entropy loss."""

    def loss_at(p):
        return nn.loss_and_grad(nn.Network(spec, p, 0), x, labels)[0]

    grad = np.zeros_like(params)
    for i in range(len(params)):
        plus = params.copy()
        plus[i] += h
        minus = params.copy()
        minus[i] -= h
        grad[i] = (loss_at(plus) - loss_at(minus)) / (2 * h)
    return grad


def gradient_errors(analytic: np.ndarray, reference: np.ndarray,
                    small: float = 1e-6) -> tuple[float, float]:
    """(max relative error on |analytic| >= small, max absolute error below)."""
    is_small = np.abs(analytic) < small
    abs_err = np.abs(analytic - reference)
    rel_max = float((abs_err[~is_small] / np.abs(analytic[~is_small])).max()) \
        if (~is_small).any() else 0.0
    abs_max = float(abs_err[is_small].max()) if is_small.any() else 0.0
    return rel_max, abs_max


def partition_skew(client_indices, labels: np.ndarray, num_classes: int = 10) -> float:
    """Mean per-client chi-square of class proportions vs the global mix.

    Larger means more skewed shards; a direct reading of how non-uniform the
    per-client class distributions are.
    """
    global_p = np.bincount(labels, minlength=num_classes) / len(labels)
    stats = []
    for idx in client_indices:
        counts = np.bincount(labels[idx], minlength=num_classes)
        expected = global_p * len(idx)
        mask = expected > 0
        stats.append(float((((counts - expected) ** 2)[mask] / expected[mask]).sum()))
    return float(np.mean(stats))
