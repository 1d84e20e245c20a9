"""FeatureTensor records and the FTNS container.

Layout (little-endian)::

    magic "FTNS" | version u16 = 1 | count u64 | dims u16 x 3
    count x (label u8 | trial i32 | window i32 | feature u8 | ordering u8
             | values f32[d0*d1*d2], C order)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .eegio import FormatError

MAGIC = b"FTNS"
VERSION = 1
_HEAD = struct.Struct("<4sHQHHH")
_REC = np.dtype([("label", "u1"), ("trial", "<i4"), ("window", "<i4"),
                 ("feature", "u1"), ("ordering", "u1")])

FEATURE_CODES = {"psd": 0, "pcc": 1, "plv": 2, "pli": 3}
ORDERING_CODES = {"none": 0, "dist1": 1, "dist2": 2, "random": 3, "channel": 4}
FEATURE_NAMES = {v: k for k, v in FEATURE_CODES.items()}
ORDERING_NAMES = {v: k for k, v in ORDERING_CODES.items()}


def ordering_code(label: str) -> int:
    return ORDERING_CODES[label.split(":", 1)[0]]


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    values: np.ndarray = field(repr=False)
    label: int
    trial: int
    window: int
    feature: str
    ordering: str = "none"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValueError(f"feature tensor must be 3-D, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature tensor has non-finite values")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        object.__setattr__(self, "values", v)


@dataclass(eq=False)
class FeatureSet:
    """Column-oriented batch of feature tensors."""

    values: np.ndarray   # (N, d0, d1, d2) float32
    labels: np.ndarray   # (N,) uint8
    trials: np.ndarray   # (N,) int32
    windows: np.ndarray  # (N,) int32
    feature: np.ndarray  # (N,) uint8 codes
    ordering: np.ndarray  # (N,) uint8 codes

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        n = len(self.values)
        for name in ("labels", "trials", "windows", "feature", "ordering"):
            col = np.asarray(getattr(self, name))
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.trials = np.asarray(self.trials, dtype=np.int32)
        self.windows = np.asarray(self.windows, dtype=np.int32)
        self.feature = np.asarray(self.feature, dtype=np.uint8)
        self.ordering = np.asarray(self.ordering, dtype=np.uint8)
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_tensors(cls, tensors: Sequence[FeatureTensor]) -> "FeatureSet":
        if not tensors:
            raise ValueError("no feature tensors")
        return cls(np.stack([t.values for t in tensors]),
                   np.array([t.label for t in tensors]),
                   np.array([t.trial for t in tensors]),
                   np.array([t.window for t in tensors]),
                   np.array([FEATURE_CODES[t.feature] for t in tensors]),
                   np.array([ordering_code(t.ordering) for t in tensors]))

    @classmethod
    def concat(cls, sets: Sequence["FeatureSet"]) -> "FeatureSet":
        return cls(*(np.concatenate([getattr(s, f) for s in sets])
                     for f in ("values", "labels", "trials", "windows", "feature", "ordering")))

    def subset(self, idx) -> "FeatureSet":
        return FeatureSet(self.values[idx], self.labels[idx], self.trials[idx],
                          self.windows[idx], self.feature[idx], self.ordering[idx])

    def with_labels(self, labels) -> "FeatureSet":
        return FeatureSet(self.values, labels, self.trials, self.windows,
                          self.feature, self.ordering)

    def __iter__(self) -> Iterator[FeatureTensor]:
        for i in range(len(self)):
            yield FeatureTensor(self.values[i], int(self.labels[i]), int(self.trials[i]),
                                int(self.windows[i]), FEATURE_NAMES[int(self.feature[i])],
                                ORDERING_NAMES[int(self.ordering[i])])


def ftns_bytes(fs: FeatureSet) -> bytes:
    n = len(fs)
    dims = fs.values.shape[1:] if fs.values.ndim == 4 else (32, 32, 10)
    if len(dims) != 3:
        raise ValueError("feature tensors must be 3-D")
    rec = np.dtype(_REC.descr + [("values", "<f4", dims)])
    table = np.zeros(n, dtype=rec)
    table["label"] = fs.labels
    table["trial"] = fs.trials
    table["window"] = fs.windows
    table["feature"] = fs.feature
    table["ordering"] = fs.ordering
    table["values"] = fs.values
    return _HEAD.pack(MAGIC, VERSION, n, *dims) + table.tobytes()


def write_ftns(fs: FeatureSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ftns_bytes(fs))


def read_ftns(path) -> FeatureSet:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size:
        raise FormatError(f"truncated FTNS header at offset {len(data)}")
    magic, version, n, d0, d1, d2 = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported FTNS version {version} at offset 4")
    rec = np.dtype(_REC.descr + [("values", "<f4", (d0, d1, d2))])
    need = n * rec.itemsize
    have = len(data) - _HEAD.size
    if have != need:
        bad = _HEAD.size + min(have, need) // rec.itemsize * rec.itemsize
        raise FormatError(f"payload size {have} != {need} for {n} records; "
                          f"first incomplete record at offset {bad}")
    table = np.frombuffer(data, dtype=rec, count=n, offset=_HEAD.size)
    return FeatureSet(table["values"].copy(), table["label"].copy(), table["trial"].copy(),
                      table["window"].copy(), table["feature"].copy(), table["ordering"].copy())
