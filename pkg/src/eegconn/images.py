"""8-bit PGM output for matrices, topographies and kernel grids."""
from __future__ import annotations

import numpy as np


def to_gray(values) -> np.ndarray:
    """Min-max scale to 0..255; a constant image becomes mid-gray (128)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {v.shape}")
    lo, hi = np.nanmin(v), np.nanmax(v)
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.rint((v - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(values, path) -> None:
    img = to_gray(values)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = data.split(maxsplit=4)
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    pixels = np.frombuffer(fields[4], dtype=np.uint8, count=w * h)
    return pixels.reshape(h, w)


def kernel_grid(kernels, gap: int = 1, fill=None) -> np.ndarray:
    """Tile ``kernels[row, col]`` (each k x k) into one image with ``gap`` separators."""
    k = np.asarray(kernels, dtype=float)
    rows, cols, kh, kw = k.shape
    fill = np.min(k) if fill is None else fill
    out = np.full((rows * (kh + gap) - gap, cols * (kw + gap) - gap), fill)
    for r in range(rows):
        for c in range(cols):
            out[r * (kh + gap):r * (kh + gap) + kh, c * (kw + gap):c * (kw + gap) + kw] = k[r, c]
    return out
