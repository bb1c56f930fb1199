"""Minimal layers with hand-written backward passes, plus Adam.

Internally everything is channels-last (``B, H, W, C``); ``conv2d_forward`` and
``conv2d_backward`` also accept the channels-first ``(C, H, W)`` /
``(B, C, H, W)`` layout for standalone use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidShapeError


# -- convolution -------------------------------------------------------------


def _im2col(x):
    """(B, H, W, C) -> (B*H*W, C*9) patches of the zero-padded input."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (B, H, W, C, 3, 3)
    return win.reshape(b * h * w, c * 9)


def _col2im(cols, shape):
    b, h, w, c = shape
    cols = cols.reshape(b, h, w, c, 3, 3)
    out = np.zeros((b, h + 2, w + 2, c), dtype=cols.dtype)
    for i in range(3):
        for j in range(3):
            out[:, i:i + h, j:j + w, :] += cols[..., i, j]
    return out[:, 1:-1, 1:-1, :]


def conv_nhwc(x, kernel, bias):
    b, h, w, c = x.shape
    if kernel.shape[1] != c:
        raise InvalidShapeError(f"conv expects {kernel.shape[1]} input channels, got {c}")
    cols = _im2col(x)
    out = cols @ kernel.reshape(kernel.shape[0], -1).T
    out += bias
    return out.reshape(b, h, w, -1), cols


def conv_nhwc_backward(x_shape, cols, kernel, upstream, need_x=True):
    o = kernel.shape[0]
    g = upstream.reshape(-1, o)
    grad_k = (g.T @ cols).reshape(kernel.shape)
    grad_b = g.sum(axis=0)
    grad_x = _col2im(g @ kernel.reshape(o, -1), x_shape) if need_x else None
    return grad_x, grad_k, grad_b


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out_c, in_c, 3, 3)
    bias: np.ndarray    # (out_c,)


def _to_nhwc(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x.transpose(1, 2, 0)[None], True
    if x.ndim == 4:
        return x.transpose(0, 2, 3, 1), False
    raise InvalidShapeError(f"conv input must be (C, H, W) or (B, C, H, W), got {x.shape}")


def _from_nhwc(y, squeeze):
    y = y.transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y[0] if squeeze else y)


def conv2d_forward(x, layer: ConvLayer):
    """3x3 stride-1 cross-correlation with zero padding 1, plus bias."""
    xn, squeeze = _to_nhwc(x)
    if xn.shape[-1] != layer.kernel.shape[1]:
        raise InvalidShapeError(f"layer expects {layer.kernel.shape[1]} channels, input has {xn.shape[-1]}")
    y, _ = conv_nhwc(xn, layer.kernel, layer.bias)
    return _from_nhwc(y, squeeze)


def conv2d_backward(x, layer: ConvLayer, upstream):
    xn, squeeze = _to_nhwc(x)
    gn, _ = _to_nhwc(upstream)
    if xn.shape[-1] != layer.kernel.shape[1]:
        raise InvalidShapeError(f"layer expects {layer.kernel.shape[1]} channels, input has {xn.shape[-1]}")
    if gn.shape[:3] != xn.shape[:3] or gn.shape[-1] != layer.kernel.shape[0]:
        raise InvalidShapeError(f"upstream shape {np.shape(upstream)} does not match the layer output")
    gx, gk, gb = conv_nhwc_backward(xn.shape, _im2col(xn), layer.kernel, gn)
    return _from_nhwc(gx, squeeze), gk, gb


# -- stateful layers used by the networks -------------------------------------


class Conv:
    def __init__(self, name, cin, cout, rng, init_scale=1.0):
        bound = init_scale / math.sqrt(cin * 9)
        self.name = name
        self.kernel = rng.uniform(-bound, bound, (cout, cin, 3, 3)).astype(np.float32)
        self.bias = rng.uniform(-bound, bound, cout).astype(np.float32)

    def params(self):
        return {f"{self.name}.kernel": self.kernel, f"{self.name}.bias": self.bias}

    def set_params(self, p):
        self.kernel = p[f"{self.name}.kernel"]
        self.bias = p[f"{self.name}.bias"]

    def forward(self, x):
        y, cols = conv_nhwc(x, self.kernel.astype(x.dtype, copy=False), self.bias.astype(x.dtype, copy=False))
        self._cache = (x.shape, cols)
        return y

    def backward(self, g, grads, need_x=True):
        shape, cols = self._cache
        gx, gk, gb = conv_nhwc_backward(shape, cols, self.kernel.astype(g.dtype, copy=False), g, need_x)
        grads[f"{self.name}.kernel"] = gk
        grads[f"{self.name}.bias"] = gb
        return gx


def relu(x):
    return np.maximum(x, 0)


def relu_backward(y, g):
    return np.where(y > 0, g, 0).astype(g.dtype, copy=False)


def tanh_backward(y, g):
    return g * (1 - y * y)


def avg_pool2(x):
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise InvalidShapeError(f"cannot 2x pool a {h}x{w} feature map")
    return x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def avg_pool2_backward(g):
    return np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * g.dtype.type(0.25)


def upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(g):
    b, h, w, c = g.shape
    return g.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


# -- optimizer ----------------------------------------------------------------


@dataclass
class TrainState:
    params: dict
    lr: float = 2e-4
    step: int = 0  # iteration counter m
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 0.999991
    lr_floor: float = 1e-4

    def __post_init__(self):
        for k, p in self.params.items():
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))


def adam_step(state: TrainState, grads: dict) -> TrainState:
    """One in-place Adam update with bias correction; advances ``state.step``."""
    for k, g in grads.items():
        if k not in state.params:
            raise InvalidShapeError(f"gradient for unknown parameter {k!r}")
        if np.shape(g) != state.params[k].shape:
            raise InvalidShapeError(f"gradient for {k} has shape {np.shape(g)}, expected {state.params[k].shape}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for k, p in state.params.items():
        g = grads.get(k)
        if g is None:
            continue
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)
    return state


def decay_lr(state: TrainState) -> float:
    """Apply one epoch of learning-rate decay, never going below the floor."""
    state.lr = max(state.lr_floor, state.lr * state.lr_decay)
    return state.lr
