"""Pairwise connectivity (PCC, PLV, PLI) and electrode-ordered 32x32 matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .montage import DEAP_CHANNELS, ElectrodeLayout, deap_layout

FEATURES = ("pcc", "plv", "pli")
ORDERING_METHODS = ("dist1", "dist2", "random")
_DIAGONAL = {"pcc": 1.0, "plv": 1.0, "pli": 0.0}


class ConnectivityError(ValueError):
    pass


def _pair(x, y, min_len):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ConnectivityError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < min_len:
        raise ConnectivityError(f"need at least {min_len} samples, got {len(x)}")
    return x, y


def pcc(x, y) -> float:
    """Pearson correlation, population normalisation for both covariance and spread."""
    x, y = _pair(x, y, 2)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.sum(xc * xc)
    syy = np.sum(yc * yc)
    if np.ptp(x) == 0 or np.ptp(y) == 0 or sxx == 0 or syy == 0:
        raise ConnectivityError("correlation undefined for a constant signal")
    r = np.sum(xc * yc) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def plv(phase_x, phase_y) -> float:
    """Magnitude of the mean unit phasor of the phase differences."""
    x, y = _pair(phase_x, phase_y, 1)
    d = x - y
    return float(min(1.0, np.hypot(np.mean(np.cos(d)), np.mean(np.sin(d)))))


def lag_sign(dphi) -> np.ndarray:
    """Sign of a phase difference wrapped to (-pi, pi], with sign(0) = 0.

    ``sign(sin(d))`` equals the sign of the wrapped difference for every
    floating-point ``d`` and is odd in ``d``, so PLI stays exactly symmetric.
    """
    return np.sign(np.sin(dphi))


def pli(phase_x, phase_y) -> float:
    """Absolute mean sign of the phase differences."""
    x, y = _pair(phase_x, phase_y, 1)
    return float(abs(np.mean(lag_sign(x - y))))


# ---------------------------------------------------------------------------
# Electrode orderings

@dataclass(frozen=True)
class ElectrodeOrdering:
    """``permutation[i]`` is the electrode placed at matrix row/column ``i``."""

    method: str
    permutation: Tuple[str, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "permutation", tuple(self.permutation))
        if self.method not in ORDERING_METHODS + ("channel",):
            raise ValueError(f"unknown ordering method {self.method!r}")
        if sorted(self.permutation) != sorted(DEAP_CHANNELS):
            raise ValueError("ordering must be a bijection over the 32 electrodes")

    @property
    def label(self) -> str:
        return f"random:{self.seed}" if self.method == "random" else self.method

    def indices(self, channel_names: Sequence[str] = DEAP_CHANNELS) -> np.ndarray:
        pos = {name: i for i, name in enumerate(channel_names)}
        return np.array([pos[name] for name in self.permutation])


def _greedy_walk(start: str, pool, layout: ElectrodeLayout, order_index) -> list:
    path = [start]
    remaining = [n for n in pool if n != start]
    while remaining:
        cx, cy = layout.positions[path[-1]]

        def key(name):
            x, y = layout.positions[name]
            dist = round(float(np.hypot(x - cx, y - cy)), 9)
            # ties: more posterior first, then lower channel index
            return dist, y, order_index[name]

        nxt = min(remaining, key=key)
        path.append(nxt)
        remaining.remove(nxt)
    return path


def build_ordering(method: str, layout: Optional[ElectrodeLayout] = None,
                   seed: Optional[int] = None) -> ElectrodeOrdering:
    """dist1, dist2 or a seeded random electrode order.

    dist1 walks nearest-unvisited neighbours through the left hemisphere from
    Fp1, then the right hemisphere from Fp2, then the midline front to back.
    dist2 walks nearest-unvisited neighbours over all electrodes from Fp1.
    """
    if method.startswith("random:"):
        method, seed = "random", int(method.split(":", 1)[1])
    layout = deap_layout() if layout is None else layout
    layout.require_full()
    order_index = {n: i for i, n in enumerate(DEAP_CHANNELS)}
    names = list(DEAP_CHANNELS)
    if method == "dist1":
        left = [n for n in names if layout.hemisphere[n] == "left"]
        right = [n for n in names if layout.hemisphere[n] == "right"]
        mid = [n for n in names if layout.hemisphere[n] == "midline"]
        mid.sort(key=lambda n: (-layout.positions[n][1], order_index[n]))
        perm = (_greedy_walk("Fp1", left, layout, order_index)
                + _greedy_walk("Fp2", right, layout, order_index) + mid)
        return ElectrodeOrdering("dist1", perm)
    if method == "dist2":
        return ElectrodeOrdering("dist2", _greedy_walk("Fp1", names, layout, order_index))
    if method == "random":
        if seed is None or seed < 0:
            raise ValueError(f"random ordering needs a non-negative seed, got {seed}")
        rng = np.random.default_rng(seed)
        return ElectrodeOrdering("random", [names[i] for i in rng.permutation(len(names))], seed)
    raise ValueError(f"unknown ordering method {method!r}")


def channel_ordering() -> ElectrodeOrdering:
    """Identity ordering (DEAP channel order)."""
    return ElectrodeOrdering("channel", DEAP_CHANNELS)


def relating_permutation(src: ElectrodeOrdering, dst: ElectrodeOrdering) -> np.ndarray:
    """Permutation matrix P with ``M_dst == P @ M_src @ P.T``."""
    pos = {name: k for k, name in enumerate(src.permutation)}
    P = np.zeros((32, 32))
    for i, name in enumerate(dst.permutation):
        P[i, pos[name]] = 1.0
    return P


# ---------------------------------------------------------------------------
# Matrices

@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    feature: str
    band: dsp.BandDef
    ordering: ElectrodeOrdering
    values: np.ndarray = field(repr=False)

    def check(self):
        v = self.values
        if v.shape != (32, 32):
            raise ConnectivityError(f"matrix shape {v.shape}, expected (32, 32)")
        if not np.array_equal(v, v.T):
            raise ConnectivityError("matrix is not symmetric")
        if not np.all(np.diag(v) == _DIAGONAL[self.feature]):
            raise ConnectivityError("diagonal violates the feature's self-connectivity")
        lo = -1.0 if self.feature == "pcc" else 0.0
        if not (np.all(v >= lo) and np.all(v <= 1.0)):
            raise ConnectivityError(f"{self.feature} values outside [{lo}, 1]")
        return self


def pairwise(feature: str, data) -> np.ndarray:
    """Matrix of ``feature`` over all row pairs, in the rows' own order.

    ``data`` holds band-limited signals for PCC and phases for PLV/PLI.  Each
    pair is computed once and mirrored, so the result is exactly symmetric.
    """
    if feature not in FEATURES:
        raise ValueError(f"unknown connectivity feature {feature!r}")
    x = np.asarray(data, dtype=float)
    c, n = x.shape
    iu = np.triu_indices(c, 1)
    if feature == "pcc":
        if n < 2:
            raise ConnectivityError("PCC needs at least 2 samples")
        flat = np.flatnonzero(np.ptp(x, axis=1) == 0)
        if flat.size:
            raise ConnectivityError(f"correlation undefined: constant channel(s) {flat.tolist()}")
        xc = x - x.mean(axis=1, keepdims=True)
        ss = np.sum(xc * xc, axis=1)
        full = (xc @ xc.T) / np.sqrt(np.outer(ss, ss))
        upper = np.clip(full[iu], -1.0, 1.0)
    elif feature == "plv":
        if n < 1:
            raise ConnectivityError("PLV needs at least one sample")
        z = np.exp(1j * x)
        upper = np.minimum(np.abs((z @ z.conj().T)[iu]) / n, 1.0)
    else:
        if n < 1:
            raise ConnectivityError("PLI needs at least one sample")
        upper = np.empty(len(iu[0]))
        k = 0
        for i in range(c - 1):
            s = lag_sign(x[i] - x[i + 1:])
            upper[k:k + c - 1 - i] = np.abs(s.sum(axis=1)) / n
            k += c - 1 - i
    out = np.full((c, c), _DIAGONAL[feature])
    out[iu] = upper
    out.T[iu] = upper
    return out


def connectivity_matrix(signals, feature: str, band, ordering: ElectrodeOrdering,
                        channel_names: Sequence[str] = DEAP_CHANNELS,
                        phases=None) -> ConnectivityMatrix:
    """Ordered 32x32 matrix for one band of one segment.

    ``signals`` is the band-limited segment (rows follow ``channel_names``).
    For PLV/PLI precomputed ``phases`` may be passed instead; otherwise the
    analytic-signal phase of ``signals`` is used.
    """
    band = dsp.get_band(band)
    if len(channel_names) != 32:
        raise ConnectivityError(f"need 32 channels, got {len(channel_names)}")
    if feature == "pcc":
        base = pairwise("pcc", signals)
    else:
        if phases is None:
            phases = dsp.instantaneous_phase(signals)
        base = pairwise(feature, phases)
    idx = ordering.indices(channel_names)
    return ConnectivityMatrix(feature, band, ordering, base[np.ix_(idx, idx)])


def hemisphere_mask(ordering: ElectrodeOrdering,
                    layout: Optional[ElectrodeLayout] = None) -> np.ndarray:
    """Cell classes ``within`` / ``between`` / ``midline`` for an ordering."""
    layout = deap_layout() if layout is None else layout
    tags = np.array([layout.hemisphere[n] for n in ordering.permutation])
    a = tags[:, None]
    b = tags[None, :]
    mask = np.where(a == b, "within", "between").astype("<U7")
    mask[(a == "midline") | (b == "midline")] = "midline"
    return mask


def mixed_window_count(mask: np.ndarray, size: int = 3) -> int:
    """Number of ``size`` x ``size`` windows holding both within and between cells."""
    within = (mask == "within").astype(int)
    between = (mask == "between").astype(int)
    h, w = mask.shape
    count = 0
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            if within[i:i + size, j:j + size].any() and between[i:i + size, j:j + size].any():
                count += 1
    return count


def write_matrix_csv(values, path) -> None:
    np.savetxt(path, np.asarray(values), delimiter=",", fmt="%.10g")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
