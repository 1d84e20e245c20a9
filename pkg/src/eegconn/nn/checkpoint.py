"""CNNM model checkpoints.

Layout (little-endian)::

    magic "CNNM" | version u16 = 1 | spec_len u32 | ModelSpec JSON (UTF-8)
    for each layer in order: params (sorted by name), then running stats
    (sorted by name), all f64
"""
from __future__ import annotations

import struct

import numpy as np

from ..eegio import FormatError
from .model import Model, ModelSpec

MAGIC = b"CNNM"
VERSION = 1
_HEAD = struct.Struct("<4sHI")


def _arrays(model: Model):
    for layer in model.layers:
        for k in sorted(layer.params):
            yield layer.params, k
        for k in sorted(layer.state):
            yield layer.state, k


def checkpoint_bytes(model: Model) -> bytes:
    spec = model.spec.to_json().encode("utf-8")
    parts = [_HEAD.pack(MAGIC, VERSION, len(spec)), spec]
    for store, k in _arrays(model):
        parts.append(np.ascontiguousarray(store[k], dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path, dtype=np.float64) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size:
        raise FormatError(f"truncated checkpoint header at offset {len(data)}")
    magic, version, n = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")
    pos = _HEAD.size
    if pos + n > len(data):
        raise FormatError(f"truncated model spec at offset {pos}")
    spec = ModelSpec.from_json(data[pos:pos + n].decode("utf-8"))
    pos += n
    model = Model(spec, dtype=dtype)
    for store, k in _arrays(model):
        shape = store[k].shape
        size = int(np.prod(shape)) * 8
        if pos + size > len(data):
            raise FormatError(f"truncated parameter block at offset {pos}")
        store[k] = np.frombuffer(data, "<f8", int(np.prod(shape)), pos).reshape(shape).astype(dtype)
        pos += size
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes at offset {pos}")
    return model
