"""Scalp topographies: per-electrode values interpolated onto a 32x32 grid.

The grid is nose-up: row 0 is the front of the head, column 0 the left side.
Cell ``(r, c)`` has centre ``x = -1 + 2c/31``, ``y = 1 - 2r/31``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .montage import DEAP_CHANNELS, ElectrodeLayout, LayoutError, deap_layout

GRID = 32
IDW_POWER = 2
IDW_NEIGHBOURS = 4


def _to_index(v: float) -> int:
    return int(np.floor(v + 0.5))


def cell_centres(grid: int = GRID) -> Tuple[np.ndarray, np.ndarray]:
    k = np.arange(grid)
    xs = -1.0 + 2.0 * k / (grid - 1)
    ys = 1.0 - 2.0 * k / (grid - 1)
    return np.meshgrid(xs, ys)  # X[r, c], Y[r, c]


def electrode_to_grid(layout: Optional[ElectrodeLayout] = None,
                      names: Sequence[str] = DEAP_CHANNELS) -> Dict[str, Tuple[int, int]]:
    """Map each electrode to its (row, col) cell; halves round up."""
    layout = deap_layout() if layout is None else layout
    cells = {}
    for name in names:
        x, y = layout.positions[name]
        cells[name] = (_to_index((1.0 - y) / 2.0 * (GRID - 1)),
                       _to_index((x + 1.0) / 2.0 * (GRID - 1)))
    seen = {}
    for name, cell in cells.items():
        if cell in seen:
            raise LayoutError(f"{name} and {seen[cell]} fall on the same grid cell {cell}")
        seen[cell] = name
    return cells


@lru_cache(maxsize=8)
def _weights_for(layout: ElectrodeLayout, names: Tuple[str, ...]) -> np.ndarray:
    cells = electrode_to_grid(layout, names)
    X, Y = cell_centres()
    ex = np.array([X[cells[n]] for n in names])
    ey = np.array([Y[cells[n]] for n in names])
    inside = X ** 2 + Y ** 2 <= 1.0
    W = np.zeros((GRID, GRID, len(names)))
    at_electrode = {cell: k for k, cell in enumerate(cells[n] for n in names)}
    for r in range(GRID):
        for c in range(GRID):
            k = at_electrode.get((r, c))
            if k is not None:
                W[r, c, k] = 1.0
                continue
            if not inside[r, c]:
                continue
            d2 = (ex - X[r, c]) ** 2 + (ey - Y[r, c]) ** 2
            # rounding makes exact geometric ties fall to the lower channel index
            nearest = np.argsort(np.round(d2, 12), kind="stable")[:IDW_NEIGHBOURS]
            w = 1.0 / d2[nearest] ** (IDW_POWER / 2)
            W[r, c, nearest] = w / w.sum()
    W.flags.writeable = False
    return W


def interpolation_weights(layout: Optional[ElectrodeLayout] = None,
                          names: Sequence[str] = DEAP_CHANNELS) -> np.ndarray:
    """Array ``W[r, c, k]``: a topography is ``W @ values``."""
    layout = deap_layout() if layout is None else layout
    return _weights_for(layout, tuple(names))


@dataclass(frozen=True, eq=False)
class Topography:
    band: Optional[dsp.BandDef]
    grid: np.ndarray = field(repr=False)
    cells: Dict[str, Tuple[int, int]] = field(repr=False)


def render_topography(values, layout: Optional[ElectrodeLayout] = None,
                      names: Sequence[str] = DEAP_CHANNELS, band=None) -> Topography:
    """Electrode cells hold their value exactly; other scalp cells use IDW of the
    4 nearest electrodes; cells outside the unit disc are 0."""
    v = np.asarray(values, dtype=float)
    if v.shape != (len(names),):
        raise ValueError(f"expected {len(names)} values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite electrode values")
    layout = deap_layout() if layout is None else layout
    W = interpolation_weights(layout, names)
    grid = W @ v
    cells = electrode_to_grid(layout, names)
    for k, name in enumerate(names):
        grid[cells[name]] = v[k]
    band = None if band is None else dsp.get_band(band)
    return Topography(band, grid, cells)


def band_powers(segment, rate_hz: float) -> np.ndarray:
    """Welch band power per channel and band, shape (channels, 10)."""
    psd = dsp.welch_psd(segment, rate_hz)
    return np.stack([dsp.band_power(psd, b, rate_hz) for b in dsp.BANDS], axis=-1)


def psd_tensor(segment, rate_hz: float = 128.0, layout: Optional[ElectrodeLayout] = None,
               names: Sequence[str] = DEAP_CHANNELS) -> np.ndarray:
    """(32, 32, 10) stack of band-power topographies in canonical band order."""
    x = np.asarray(segment, dtype=float)
    if x.shape[0] != 32 or len(names) != 32:
        raise ValueError(f"need a 32-channel segment, got {x.shape[0]} channels")
    powers = band_powers(x, rate_hz)
    layout = deap_layout() if layout is None else layout
    W = interpolation_weights(layout, names)
    out = np.einsum("rck,kb->rcb", W, powers)
    cells = electrode_to_grid(layout, names)
    for k, name in enumerate(names):
        out[cells[name]] = powers[k]
    return out
