"""First-layer filter inspection."""
from __future__ import annotations

import csv

import numpy as np

from ..images import kernel_grid, write_pgm
from .layers import Conv3x3


def first_conv(model):
    for layer in model.layers:
        if isinstance(layer, Conv3x3):
            return layer
    raise ValueError("model has no convolutional layer")


def dump_first_layer_weights(model) -> np.ndarray:
    """Kernels of the first conv layer as ``(in_channels, out_channels, 3, 3)``.

    Rows are input bands and columns are filters.
    """
    W = first_conv(model).params["W"]  # (3, 3, in, out)
    return np.ascontiguousarray(W.transpose(2, 3, 0, 1), dtype=np.float64)


def uniformity_scores(kernels) -> np.ndarray:
    """std / mean(|w|) per kernel; 0 for flat (or all-zero) kernels."""
    k = np.asarray(kernels, dtype=float)
    flat = k.reshape(k.shape[:-2] + (-1,))
    std = flat.std(axis=-1)
    mean_abs = np.abs(flat).mean(axis=-1)
    return np.divide(std, mean_abs, out=np.zeros_like(std), where=mean_abs > 0)


def export_weights(model, prefix) -> dict:
    """Write ``<prefix>.pgm``, ``<prefix>_weights.csv`` and ``<prefix>_uniformity.csv``."""
    kernels = dump_first_layer_weights(model)
    scores = uniformity_scores(kernels)
    paths = {"image": f"{prefix}.pgm", "weights": f"{prefix}_weights.csv",
             "uniformity": f"{prefix}_uniformity.csv"}
    write_pgm(kernel_grid(kernels), paths["image"])
    with open(paths["weights"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["in_channel", "filter"] + [f"w{i}{j}" for i in range(3) for j in range(3)])
        for i in range(kernels.shape[0]):
            for o in range(kernels.shape[1]):
                w.writerow([i, o] + [repr(float(v)) for v in kernels[i, o].ravel()])
    with open(paths["uniformity"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["in_channel", "filter", "uniformity"])
        for i in range(scores.shape[0]):
            for o in range(scores.shape[1]):
                w.writerow([i, o, repr(float(scores[i, o]))])
    return paths


def read_weights_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    n_in = max(int(r[0]) for r in rows) + 1
    n_out = max(int(r[1]) for r in rows) + 1
    out = np.zeros((n_in, n_out, 3, 3))
    for r in rows:
        out[int(r[0]), int(r[1])] = np.array([float(v) for v in r[2:]]).reshape(3, 3)
    return out
