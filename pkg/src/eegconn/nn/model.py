"""Model specs for CNN-2, CNN-5 and CNN-10 and the layered model built from them."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .layers import (BatchNorm, Conv3x3, Dense, Flatten, MaxPool2x2, ReLU,
                     ShapeError, softmax)

LAYER_KINDS = ("conv3x3", "maxpool2x2", "batchnorm", "relu", "flatten", "dense", "softmax")


class NumericError(FloatingPointError):
    """Non-finite values appeared during a forward or backward pass."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0  # conv out_channels or dense units

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, int, int] = (32, 32, 10)

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "input_shape": list(self.input_shape),
                           "layers": [asdict(l) for l in self.layers]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        d = json.loads(text)
        return cls(d["name"], tuple(LayerSpec(**l) for l in d["layers"]),
                   tuple(d["input_shape"]))

    def trace(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Output shape (without batch) after every layer."""
        model = Model(self, rng=np.random.default_rng(0))
        shape = tuple(self.input_shape)
        out = []
        for i, layer in enumerate(model.layers):
            shape = layer.output_shape(shape)
            out.append((layer.kind, shape))
        return out


def _block(filters):
    return [LayerSpec("conv3x3", filters), LayerSpec("relu"),
            LayerSpec("maxpool2x2"), LayerSpec("batchnorm")]


def _head(dense_units):
    return [LayerSpec("flatten"), LayerSpec("dense", dense_units), LayerSpec("relu"),
            LayerSpec("dense", 2), LayerSpec("softmax")]


def cnn2(input_shape=(32, 32, 10), base_filters=32, dense_units=256) -> ModelSpec:
    return ModelSpec("cnn2", tuple(_block(base_filters) + _head(dense_units)), tuple(input_shape))


def cnn5(input_shape=(32, 32, 10), base_filters=32, dense_units=256) -> ModelSpec:
    f = base_filters
    layers = (_block(f)
              + [LayerSpec("conv3x3", 2 * f), LayerSpec("relu"),
                 LayerSpec("conv3x3", 4 * f), LayerSpec("relu"),
                 LayerSpec("maxpool2x2"), LayerSpec("batchnorm")]
              + _head(dense_units))
    return ModelSpec("cnn5", tuple(layers), tuple(input_shape))


def cnn10(input_shape=(32, 32, 10), base_filters=32, dense_units=256, blocks=5) -> ModelSpec:
    layers = []
    for i in range(blocks):
        layers += _block(base_filters * 2 ** i)
    return ModelSpec("cnn10", tuple(layers + _head(dense_units)), tuple(input_shape))


ARCHITECTURES = {"cnn2": cnn2, "cnn5": cnn5, "cnn10": cnn10}


def model_spec(name: str, input_shape=(32, 32, 10), **kw) -> ModelSpec:
    try:
        return ARCHITECTURES[name](input_shape, **kw)
    except KeyError:
        raise ValueError(f"unknown architecture {name!r}; expected one of {sorted(ARCHITECTURES)}") from None


class Model:
    """Layer stack built from a :class:`ModelSpec`.

    The final softmax is folded into :meth:`loss_and_grad`; :meth:`forward`
    returns class probabilities.
    """

    def __init__(self, spec: ModelSpec, rng=None, dtype=np.float64, zero_dense=False):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(0) if rng is None else rng
        shape = tuple(spec.input_shape)
        self.layers = []
        for i, ls in enumerate(spec.layers):
            if ls.kind == "softmax":
                if i != len(spec.layers) - 1:
                    raise ShapeError(f"layer {i}: softmax must be the last layer")
                continue
            if ls.kind == "conv3x3":
                layer = Conv3x3(shape[-1], ls.units, rng, self.dtype)
            elif ls.kind == "dense":
                if len(shape) != 1:
                    raise ShapeError(f"layer {i}: dense needs a flattened input, got {shape}")
                layer = Dense(shape[0], ls.units, rng, self.dtype, zero=zero_dense)
            elif ls.kind == "batchnorm":
                layer = BatchNorm(shape[-1], dtype=self.dtype)
            else:
                layer = {"maxpool2x2": MaxPool2x2, "relu": ReLU, "flatten": Flatten}[ls.kind]()
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({ls.kind}): {exc}") from None
            self.layers.append(layer)
        if shape != (2,):
            raise ShapeError(f"model must end in 2 logits, got {shape}")
        if self.layers and isinstance(self.layers[0], Conv3x3):
            self.layers[0].needs_input_grad = False

    # parameters are addressed as (layer index, name) in a fixed order
    def param_keys(self):
        return [(i, k) for i, layer in enumerate(self.layers) for k in sorted(layer.params)]

    def state_keys(self):
        return [(i, k) for i, layer in enumerate(self.layers) for k in sorted(layer.state)]

    def parameters(self) -> List[np.ndarray]:
        return [self.layers[i].params[k] for i, k in self.param_keys()]

    def gradients(self) -> List[np.ndarray]:
        return [self.layers[i].grads[k] for i, k in self.param_keys()]

    def set_parameters(self, arrays: Sequence[np.ndarray]):
        for (i, k), a in zip(self.param_keys(), arrays, strict=True):
            self.layers[i].params[k] = np.asarray(a, dtype=self.dtype).reshape(
                self.layers[i].params[k].shape)

    def logits(self, x, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeError(f"layer 0: input shape {x.shape[1:]} != {tuple(self.spec.input_shape)}")
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train=train)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
            if not np.all(np.isfinite(x)):
                raise NumericError(f"non-finite output from layer {i} ({layer.kind})")
        return x

    def forward(self, x, train=False):
        """Class probabilities, shape (batch, 2)."""
        return softmax(self.logits(x, train=train))

    def predict(self, x, batch_size=256):
        out = []
        for s in range(0, len(x), batch_size):
            out.append(np.argmax(self.logits(x[s:s + batch_size]), axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def loss_and_grad(self, x, labels, train=True):
        """Mean softmax cross-entropy and gradients for every parameter."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or len(labels) != len(x):
            raise ValueError("labels must be a vector matching the batch")
        if np.any((labels != 0) & (labels != 1)):
            raise ValueError("labels must be 0 or 1")
        labels = labels.astype(int)
        z = self.logits(x, train=train)
        self.last_logits = z
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss = float(np.mean(lse - z[np.arange(len(labels)), labels]))
        if not np.isfinite(loss):
            raise NumericError("loss is not finite")
        dz = softmax(z)
        dz[np.arange(len(labels)), labels] -= 1.0
        dz /= len(labels)
        for i in range(len(self.layers) - 1, -1, -1):
            dz = self.layers[i].backward(dz)
            if dz is None:
                break
        grads = self.gradients()
        for (i, k), g in zip(self.param_keys(), grads):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for layer {i} ({self.layers[i].kind}) {k}")
        return loss, grads
