"""Minimal trainable neural network with hand-written analytic gradients.

Layers: 2-D convolution (valid, strided), non-overlapping max pooling, ReLU,
flatten, and dense. All parameters of a network live in one flat float32
vector (`Network.params`); the federation layer treats that vector as the
unit of aggregation, scaling, clipping, and noising.

The math is dtype-generic: feeding float64 params/inputs runs the whole
forward/backward in float64, which the gradient tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import DimensionError, InputError, SpecError


@dataclass(frozen=True)
class Conv2D:
    in_ch: int
    out_ch: int
    kernel_h: int
    kernel_w: int
    stride: int = 1


@dataclass(frozen=True)
class MaxPool:
    k: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


Layer = Union[Conv2D, MaxPool, ReLU, Flatten, Dense]


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description. `input_shape` is (channels, height, width)."""

    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]
    num_classes: int


@dataclass
class Network:
    spec: NetworkSpec
    params: np.ndarray
    rng_seed: int


@lru_cache(maxsize=64)
def layer_shapes(spec: NetworkSpec) -> tuple[tuple[int, ...], ...]:
    """Activation shapes between layers, starting with the input shape.

    Raises SpecError on any wiring inconsistency, including a final output
    dimension that differs from `num_classes`.
    """
    shape: tuple[int, ...] = tuple(spec.input_shape)
    if len(shape) != 3 or any(d <= 0 for d in shape):
        raise SpecError(f"input_shape must be (C, H, W) positive, got {shape}")
    shapes = [shape]
    for i, ly in enumerate(spec.layers):
        if isinstance(ly, Conv2D):
            if len(shape) != 3:
                raise SpecError(f"layer {i}: Conv2D needs (C, H, W) input, got {shape}")
            c, h, w = shape
            if ly.in_ch != c:
                raise SpecError(f"layer {i}: Conv2D expects {ly.in_ch} channels, gets {c}")
            if ly.stride < 1 or ly.kernel_h > h or ly.kernel_w > w:
                raise SpecError(f"layer {i}: kernel {ly.kernel_h}x{ly.kernel_w} does not fit {shape}")
            shape = (
                ly.out_ch,
                (h - ly.kernel_h) // ly.stride + 1,
                (w - ly.kernel_w) // ly.stride + 1,
            )
        elif isinstance(ly, MaxPool):
            if len(shape) != 3:
                raise SpecError(f"layer {i}: MaxPool needs (C, H, W) input, got {shape}")
            c, h, w = shape
            if ly.k < 1 or h % ly.k or w % ly.k:
                raise SpecError(f"layer {i}: pool {ly.k} does not divide {h}x{w}")
            shape = (c, h // ly.k, w // ly.k)
        elif isinstance(ly, ReLU):
            pass
        elif isinstance(ly, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(ly, Dense):
            if len(shape) != 1 or shape[0] != ly.in_dim:
                raise SpecError(f"layer {i}: Dense({ly.in_dim}) gets input shape {shape}")
            shape = (ly.out_dim,)
        else:
            raise SpecError(f"layer {i}: unknown layer {ly!r}")
        shapes.append(shape)
    if shapes[-1] != (spec.num_classes,):
        raise SpecError(f"final output shape {shapes[-1]} != num_classes {spec.num_classes}")
    return tuple(shapes)


@lru_cache(maxsize=64)
def param_layout(spec: NetworkSpec) -> tuple[tuple[int, int, tuple[int, ...]], ...]:
    """(layer_index, offset, shape) for each parameter block, weights then bias."""
    layer_shapes(spec)  # validate wiring first
    layout = []
    offset = 0
    for i, ly in enumerate(spec.layers):
        if isinstance(ly, Conv2D):
            blocks = [(ly.out_ch, ly.in_ch, ly.kernel_h, ly.kernel_w), (ly.out_ch,)]
        elif isinstance(ly, Dense):
            blocks = [(ly.out_dim, ly.in_dim), (ly.out_dim,)]
        else:
            continue
        for shape in blocks:
            layout.append((i, offset, shape))
            offset += int(np.prod(shape))
    return tuple(layout)


def param_count(spec: NetworkSpec) -> int:
    layout = param_layout(spec)
    if not layout:
        return 0
    i, offset, shape = layout[-1]
    return offset + int(np.prod(shape))


def _layer_params(params: np.ndarray, layout, layer_index: int):
    """Weight and bias views for one parametric layer."""
    blocks = [(off, shape) for i, off, shape in layout if i == layer_index]
    (w_off, w_shape), (b_off, b_shape) = blocks
    w = params[w_off : w_off + int(np.prod(w_shape))].reshape(w_shape)
    b = params[b_off : b_off + int(np.prod(b_shape))].reshape(b_shape)
    return w, b


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights, zero biases; bit-deterministic per seed."""
    n = param_count(spec)
    params = np.zeros(n, dtype=np.float32)
    rng = np.random.default_rng(seed)
    layout = param_layout(spec)
    for i, ly in enumerate(spec.layers):
        if isinstance(ly, Conv2D):
            fan_in = ly.in_ch * ly.kernel_h * ly.kernel_w
            fan_out = ly.out_ch * ly.kernel_h * ly.kernel_w
        elif isinstance(ly, Dense):
            fan_in, fan_out = ly.in_dim, ly.out_dim
        else:
            continue
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w, _ = _layer_params(params, layout, i)
        w[...] = rng.uniform(-bound, bound, size=w.shape).astype(np.float32)
    return Network(spec=spec, params=params, rng_seed=int(seed))


# ---------------------------------------------------------------------------
# Forward / backward for the individual layer kinds.
# ---------------------------------------------------------------------------

def _conv_forward(x, w, b, stride):
    bsz, _, h, width = x.shape
    out_ch, in_ch, kh, kw = w.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        bsz * ho * wo, in_ch * kh * kw
    )
    out = cols @ w.reshape(out_ch, -1).T + b
    out = out.reshape(bsz, ho, wo, out_ch).transpose(0, 3, 1, 2)
    return out, (cols, x.shape, (ho, wo))


def _conv_backward(dout, w, stride, cache):
    cols, x_shape, (ho, wo) = cache
    bsz, in_ch, h, width = x_shape
    out_ch, _, kh, kw = w.shape
    dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(bsz * ho * wo, out_ch)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    dcols = (dmat @ w.reshape(out_ch, -1)).reshape(bsz, ho, wo, in_ch, kh, kw)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dx, dw, db


def _pool_forward(x, k):
    bsz, c, h, w = x.shape
    ho, wo = h // k, w // k
    tiles = x.reshape(bsz, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(
        bsz, c, ho, wo, k * k
    )
    idx = tiles.argmax(axis=-1)  # ties -> first element, matching np.argmax
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def _pool_backward(dout, k, cache):
    idx, x_shape = cache
    bsz, c, h, w = x_shape
    ho, wo = h // k, w // k
    dtiles = np.zeros((bsz, c, ho, wo, k * k), dtype=dout.dtype)
    np.put_along_axis(dtiles, idx[..., None], dout[..., None], axis=-1)
    return (
        dtiles.reshape(bsz, c, ho, wo, k, k)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(x_shape)
    )


def _forward(spec, params, x, want_caches):
    layout = param_layout(spec)
    caches = [] if want_caches else None
    a = x
    for i, ly in enumerate(spec.layers):
        if isinstance(ly, Conv2D):
            w, b = _layer_params(params, layout, i)
            a, cache = _conv_forward(a, w, b, ly.stride)
        elif isinstance(ly, MaxPool):
            a, cache = _pool_forward(a, ly.k)
        elif isinstance(ly, ReLU):
            cache = a
            a = np.maximum(a, 0)
        elif isinstance(ly, Flatten):
            cache = a.shape
            a = a.reshape(a.shape[0], -1)
        else:  # Dense
            w, b = _layer_params(params, layout, i)
            cache = a
            a = a @ w.T + b
        if want_caches:
            caches.append(cache)
    return a, caches


def forward(net: Network, batch: np.ndarray) -> np.ndarray:
    """Logits [batch_size, num_classes]; deterministic, input not mutated."""
    x = np.asarray(batch)
    expected = tuple(net.spec.input_shape)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError(f"batch shape {x.shape} does not match input {expected}")
    logits, _ = _forward(net.spec, net.params, x, want_caches=False)
    return logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def loss_and_grad(net: Network, batch: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient as a flat vector."""
    x = np.asarray(batch)
    y = np.asarray(labels)
    expected = tuple(net.spec.input_shape)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError(f"batch shape {x.shape} does not match input {expected}")
    if y.shape != (x.shape[0],):
        raise InputError(f"{x.shape[0]} samples but {y.shape} labels")
    if y.size and (y.min() < 0 or y.max() >= net.spec.num_classes):
        raise InputError(f"labels outside [0, {net.spec.num_classes})")

    spec, params = net.spec, net.params
    layout = param_layout(spec)
    logits, caches = _forward(spec, params, x, want_caches=True)
    logp = log_softmax(logits)
    bsz = x.shape[0]
    loss = float(-logp[np.arange(bsz), y].mean())

    delta = np.exp(logp)
    delta[np.arange(bsz), y] -= 1.0
    delta /= bsz

    grad = np.zeros_like(params)
    for i in range(len(spec.layers) - 1, -1, -1):
        ly = spec.layers[i]
        cache = caches[i]
        if isinstance(ly, Conv2D):
            w, _ = _layer_params(params, layout, i)
            gw, gb = _layer_params(grad, layout, i)
            if i == 0:
                # input gradient of the first layer is never consumed
                cols = cache[0]
                dmat = np.ascontiguousarray(delta.transpose(0, 2, 3, 1)).reshape(
                    -1, ly.out_ch
                )
                gw[...] = (dmat.T @ cols).reshape(w.shape)
                gb[...] = dmat.sum(axis=0)
                break
            delta, dw, db = _conv_backward(delta, w, ly.stride, cache)
            gw[...] = dw
            gb[...] = db
        elif isinstance(ly, MaxPool):
            delta = _pool_backward(delta, ly.k, cache)
        elif isinstance(ly, ReLU):
            delta = delta * (cache > 0)
        elif isinstance(ly, Flatten):
            delta = delta.reshape(cache)
        else:  # Dense
            w, _ = _layer_params(params, layout, i)
            gw, gb = _layer_params(grad, layout, i)
            a_in = cache
            gw[...] = delta.T @ a_in
            gb[...] = delta.sum(axis=0)
            if i == 0:
                break
            delta = delta @ w
    return loss, grad


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """out = params - lr * grad, elementwise."""
    if params.shape != grad.shape:
        raise DimensionError(f"params {params.shape} vs grad {grad.shape}")
    if lr < 0:
        raise InputError(f"lr must be >= 0, got {lr}")
    return params - params.dtype.type(lr) * grad


# ---------------------------------------------------------------------------
# Shipped architecture profiles for 10-class image data.
# ---------------------------------------------------------------------------

PROFILES = ("mlp", "cnn")


def build_spec(profile: str, num_classes: int = 10,
               input_shape: tuple[int, int, int] = (1, 28, 28)) -> NetworkSpec:
    c, h, w = input_shape
    if profile == "mlp":
        layers = (
            Flatten(),
            Dense(c * h * w, 128),
            ReLU(),
            Dense(128, num_classes),
        )
    elif profile == "cnn":
        fh = ((h - 4) // 2 - 4) // 2
        fw = ((w - 4) // 2 - 4) // 2
        layers = (
            Conv2D(c, 32, 5, 5),
            ReLU(),
            MaxPool(2),
            Conv2D(32, 64, 5, 5),
            ReLU(),
            MaxPool(2),
            Flatten(),
            Dense(64 * fh * fw, 512),
            ReLU(),
            Dense(512, num_classes),
        )
    else:
        raise SpecError(f"unknown profile {profile!r}, expected one of {PROFILES}")
    return NetworkSpec(input_shape=tuple(input_shape), layers=layers, num_classes=num_classes)
