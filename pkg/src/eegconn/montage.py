"""Electrode montage for the 32-channel DEAP cap.

Coordinates are a 2-D azimuthal projection of the 10-20 positions onto the
unit disc: Cz sits at the origin, the nose points along +y and the left
hemisphere has x < 0.  The ring through Fp1/T7/O1 lies at radius 0.92.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Dict, Mapping, Tuple

import numpy as np

# Channel order used by the DEAP preprocessed recordings.
DEAP_CHANNELS = (
    "Fp1", "AF3", "F3", "F7", "FC5", "FC1", "C3", "T7",
    "CP5", "CP1", "P3", "P7", "PO3", "O1", "Oz", "Pz",
    "Fp2", "AF4", "Fz", "F4", "F8", "FC6", "FC2", "Cz",
    "C4", "T8", "CP6", "CP2", "P4", "P8", "PO4", "O2",
)

HEMISPHERES = ("left", "right", "midline")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ElectrodeLayout:
    """Projected scalp positions plus a hemisphere tag per electrode."""

    positions: Mapping[str, Tuple[float, float]]
    hemisphere: Mapping[str, str]

    def __post_init__(self):
        if set(self.positions) != set(self.hemisphere):
            raise LayoutError("positions and hemisphere tags name different electrodes")
        for name, (x, y) in self.positions.items():
            if x * x + y * y > 1.0 + 1e-12:
                raise LayoutError(f"{name} lies outside the unit disc")
            tag = self.hemisphere[name]
            expected = "midline" if x == 0 else ("left" if x < 0 else "right")
            if tag != expected:
                raise LayoutError(f"{name}: hemisphere {tag!r} inconsistent with x={x}")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.positions)

    def xy(self, names=None) -> np.ndarray:
        names = self.names if names is None else names
        return np.array([self.positions[n] for n in names], dtype=float)

    def require_full(self):
        missing = [n for n in DEAP_CHANNELS if n not in self.positions]
        if missing:
            raise LayoutError(f"layout lacks electrodes: {', '.join(missing)}")


def read_layout(path) -> ElectrodeLayout:
    """Read a ``name,x,y,hemisphere`` CSV file."""
    with open(path, newline="") as fh:
        return _parse_rows(csv.DictReader(fh))


def _parse_rows(rows) -> ElectrodeLayout:
    positions: Dict[str, Tuple[float, float]] = {}
    hemisphere: Dict[str, str] = {}
    for row in rows:
        name = row["name"].strip()
        if name in positions:
            raise LayoutError(f"duplicate electrode {name}")
        positions[name] = (float(row["x"]), float(row["y"]))
        hemisphere[name] = row["hemisphere"].strip()
    return ElectrodeLayout(positions, hemisphere)


@lru_cache(maxsize=None)
def deap_layout() -> ElectrodeLayout:
    """The shipped 32-electrode layout, in DEAP channel order."""
    text = resources.files("eegconn").joinpath("data").joinpath("deap32_layout.csv").read_text()
    layout = _parse_rows(csv.DictReader(text.splitlines()))
    layout.require_full()
    return layout
