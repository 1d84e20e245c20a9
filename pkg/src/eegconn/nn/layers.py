"""Layers with explicit forward/backward passes.

Tensors are channels-last: ``(batch, height, width, channels)``.
"""
from __future__ import annotations

from typing import Dict

import numpy as np


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.state: Dict[str, np.ndarray] = {}

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv3x3(Layer):
    """3x3 cross-correlation, stride 1, zero 'same' padding.

    ``W`` has shape (3, 3, in_channels, out_channels).
    """

    kind = "conv3x3"

    def __init__(self, in_channels, out_channels, rng=None, dtype=np.float64):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.needs_input_grad = True
        fan_in = 9 * in_channels
        limit = np.sqrt(6.0 / fan_in)
        rng = np.random.default_rng(0) if rng is None else rng
        self.params["W"] = rng.uniform(-limit, limit, (3, 3, in_channels, out_channels)).astype(dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def output_shape(self, shape):
        h, w, c = shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} input channels, got {c}")
        return (h, w, self.out_channels)

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(f"conv expects (b, h, w, {self.in_channels}), got {x.shape}")
        b, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        # im2col with columns ordered (kh, kw, channel), matching W.reshape(-1, out)
        cols = np.concatenate([xp[:, i:i + h, j:j + w, :] for i in range(3) for j in range(3)],
                              axis=-1).reshape(b * h * w, 9 * c)
        self._cache = (cols, x.shape)
        y = cols @ self.params["W"].reshape(9 * c, self.out_channels) + self.params["b"]
        return y.reshape(b, h, w, self.out_channels)

    def backward(self, dy):
        cols, (b, h, w, c) = self._cache
        dyf = dy.reshape(-1, self.out_channels)
        self.grads["W"] = (cols.T @ dyf).reshape(3, 3, c, self.out_channels)
        self.grads["b"] = dyf.sum(axis=0)
        if not self.needs_input_grad:
            return None
        dcols = (dyf @ self.params["W"].reshape(9 * c, self.out_channels).T).reshape(b, h, w, 9, c)
        dxp = np.zeros((b, h + 2, w + 2, c), dtype=dy.dtype)
        for k in range(9):
            i, j = divmod(k, 3)
            dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, k, :]
        return dxp[:, 1:-1, 1:-1, :]


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; ties route the gradient to the first cell."""

    kind = "maxpool2x2"

    def output_shape(self, shape):
        h, w, c = shape
        if h % 2 or w % 2:
            raise ShapeError(f"max-pool needs even spatial dims, got {h}x{w}")
        return (h // 2, w // 2, c)

    def forward(self, x, train=False):
        if x.ndim != 4:
            raise ShapeError(f"max-pool expects a 4-D tensor, got {x.shape}")
        self.output_shape(x.shape[1:])
        quads = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
        y = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
        taken = np.zeros(y.shape, dtype=bool)
        masks = []
        for q in quads:
            m = (q == y) & ~taken
            taken |= m
            masks.append(m)
        self._cache = (masks, x.shape)
        return y

    def backward(self, dy):
        masks, shape = self._cache
        dx = np.empty(shape, dtype=dy.dtype)
        dx[:, 0::2, 0::2] = dy * masks[0]
        dx[:, 0::2, 1::2] = dy * masks[1]
        dx[:, 1::2, 0::2] = dy * masks[2]
        dx[:, 1::2, 1::2] = dy * masks[3]
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalisation over every axis but the last."""

    kind = "batchnorm"

    def __init__(self, channels, eps=1e-5, momentum=0.9, dtype=np.float64):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.state["running_mean"] = np.zeros(channels, dtype=dtype)
        self.state["running_var"] = np.ones(channels, dtype=dtype)

    def output_shape(self, shape):
        if shape[-1] != self.channels:
            raise ShapeError(f"batch norm expects {self.channels} channels, got {shape[-1]}")
        return shape

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeError(f"batch norm expects {self.channels} channels, got {x.shape}")
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch norm in training mode needs a batch of at least 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["running_mean"] = m * self.state["running_mean"] + (1 - m) * mean
            self.state["running_var"] = m * self.state["running_var"] + (1 - m) * var
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, axes, train)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, inv, axes, train = self._cache
        n = dy.size // dy.shape[-1]
        self.grads["gamma"] = np.sum(dy * xhat, axis=axes)
        self.grads["beta"] = np.sum(dy, axis=axes)
        dxhat = dy * self.params["gamma"]
        if not train:
            # running statistics are constants: the layer is affine
            return dxhat * inv
        return inv / n * (n * dxhat - dxhat.sum(axis=axes)
                          - xhat * np.sum(dxhat * xhat, axis=axes))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, units, rng=None, dtype=np.float64, zero=False):
        super().__init__()
        self.in_features = in_features
        self.units = units
        if zero:
            W = np.zeros((in_features, units))
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            limit = np.sqrt(6.0 / in_features)
            W = rng.uniform(-limit, limit, (in_features, units))
        self.params["W"] = W.astype(dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ShapeError(f"dense expects {self.in_features} features, got {shape}")
        return (self.units,)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (b, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of integer labels."""
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(probs.dtype).tiny))))
