"""EEG recordings: data model, EEGB binary files, CSV import and a synthetic generator.

EEGB layout (little-endian)::

    magic "EEGB" | version u16 = 1 | n_channels u16 | n_samples u64
    sample_rate_hz f64 | subject_id i32 | video_id i32 | valence_score f64
    n_channels x (name_len u8, name UTF-8)
    samples f32, channel-major
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Mapping, Tuple, Union

import numpy as np

from . import dsp
from .montage import DEAP_CHANNELS

MAGIC = b"EEGB"
VERSION = 1
_HEADER = struct.Struct("<4sHHQdiid")
PIPELINE_CHANNELS = 32


class FormatError(ValueError):
    """Malformed or truncated file; the message names the byte offset."""


@dataclass(frozen=True, eq=False)
class EegRecording:
    channel_names: Tuple[str, ...]
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float = 128.0
    subject_id: int = 0
    video_id: int = 0
    valence_score: float = 5.0

    def __post_init__(self):
        names = tuple(self.channel_names)
        object.__setattr__(self, "channel_names", names)
        samples = np.array(self.samples, dtype="<f4", order="C", ndmin=2)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        if not names:
            raise ValueError("recording needs at least one channel")
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if samples.ndim != 2 or samples.shape[0] != len(names):
            raise ValueError(f"samples shape {samples.shape} does not match {len(names)} channels")
        if samples.shape[1] < 1:
            raise ValueError("recording needs at least one sample")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")
        if not 1 <= self.valence_score <= 9:
            raise ValueError(f"valence score {self.valence_score} outside [1, 9]")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def require_pipeline_ready(self):
        if self.n_channels != PIPELINE_CHANNELS:
            raise ValueError(
                f"pipeline needs {PIPELINE_CHANNELS} channels, recording has {self.n_channels}")

    def __eq__(self, other):
        if not isinstance(other, EegRecording):
            return NotImplemented
        return (self.channel_names == other.channel_names
                and self.sample_rate_hz == other.sample_rate_hz
                and self.subject_id == other.subject_id
                and self.video_id == other.video_id
                and self.valence_score == other.valence_score
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


def write_recording(rec: EegRecording, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, rec.n_channels, rec.n_samples,
                          float(rec.sample_rate_hz), int(rec.subject_id),
                          int(rec.video_id), float(rec.valence_score))
    names = bytearray()
    for name in rec.channel_names:
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"channel name too long: {name!r}")
        names += bytes([len(raw)]) + raw
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(names)
        fh.write(rec.samples.astype("<f4", copy=False).tobytes(order="C"))


def read_recording(path) -> EegRecording:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header at offset {len(data)} (need {_HEADER.size} bytes)")
    magic, version, n_ch, n_samp, rate, subject, video, valence = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if n_ch == 0:
        raise FormatError("header declares zero channels at offset 6")
    pos = _HEADER.size
    names = []
    for _ in range(n_ch):
        if pos >= len(data):
            raise FormatError(f"truncated channel-name table at offset {pos}")
        length = data[pos]
        pos += 1
        if pos + length > len(data):
            raise FormatError(f"truncated channel name at offset {pos}")
        names.append(data[pos:pos + length].decode("utf-8"))
        pos += length
    expected = n_ch * n_samp * 4
    available = len(data) - pos
    if available != expected:
        kind = "truncated" if available < expected else "oversized"
        raise FormatError(
            f"{kind} payload at offset {pos}: {n_ch} channels x {n_samp} samples need "
            f"{expected} bytes, found {available} (channel-count mismatch?)")
    samples = np.frombuffer(data, dtype="<f4", count=n_ch * n_samp, offset=pos)
    return EegRecording(tuple(names), samples.reshape(n_ch, n_samp), rate,
                        subject, video, valence)


def read_csv(path, sample_rate_hz: float = 128.0, subject_id: int = 0,
             video_id: int = 0, valence_score: float = 5.0) -> EegRecording:
    """Import one row per sample, one column per channel, names in the header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty CSV file at offset 0") from None
        rows = [row for row in reader if row]
    if not rows:
        raise FormatError("CSV file has a header but no samples")
    try:
        values = np.array(rows, dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric or ragged CSV rows: {exc}") from None
    if values.shape[1] != len(header):
        raise FormatError(f"{values.shape[1]} columns but {len(header)} header names")
    return EegRecording(tuple(header), values.T, sample_rate_hz,
                        subject_id, video_id, valence_score)


# ---------------------------------------------------------------------------
# Synthetic EEG

DEFAULT_BAND_AMPLITUDE = {
    "delta": 2.0, "theta": 1.5, "low_alpha": 1.5, "high_alpha": 1.5,
    "low_beta": 1.0, "mid_beta": 0.8, "high_beta": 0.8, "gamma": 0.5,
}
# Oscillator frequencies stay this fraction of the band width away from each edge.
_EDGE_MARGIN = 0.2
# Frequency wander: random-walk-like spectrum smoothed over this many seconds.
_DRIFT_SMOOTH_S = 0.25
# Largest relative frequency change accepted to close the phase track.
_MAX_CLOSURE = 0.05


@dataclass(frozen=True)
class Coupling:
    channel_a: str
    channel_b: str
    band: str
    strength: float
    phase_lag: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"coupling strength {self.strength} outside [0, 1]")
        if self.channel_a == self.channel_b:
            raise ValueError("a channel cannot be coupled to itself")
        dsp.get_band(self.band)


@dataclass(frozen=True)
class CouplingSpec:
    """Controls for :func:`synthesize`.

    ``noise`` is the white-noise standard deviation, either one value for all
    channels or a per-channel mapping (missing channels get ``default_noise``).
    """

    couplings: Tuple[Coupling, ...] = ()
    noise: Union[float, Mapping[str, float]] = 0.5
    seed: int = 0
    channel_names: Tuple[str, ...] = DEAP_CHANNELS
    band_amplitude: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_BAND_AMPLITUDE))
    default_noise: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        known = set(self.channel_names)
        for c in self.couplings:
            for ch in (c.channel_a, c.channel_b):
                if ch not in known:
                    raise KeyError(f"coupling references unknown channel {ch!r}")
        for band in self.band_amplitude:
            dsp.get_band(band)
        if isinstance(self.noise, Mapping):
            for ch in self.noise:
                if ch not in known:
                    raise KeyError(f"noise given for unknown channel {ch!r}")

    def noise_level(self, channel: str) -> float:
        if isinstance(self.noise, Mapping):
            return float(self.noise.get(channel, self.default_noise))
        return float(self.noise)


def drifting_oscillator(rng: np.random.Generator, band, n: int, rate_hz: float) -> np.ndarray:
    """Phase track (radians, unwrapped) of an oscillator drifting inside ``band``.

    The frequency is a smooth periodic random process (1/f amplitude spectrum,
    Gaussian-smoothed) squashed into the inner part of the band.  It is then
    rescaled slightly so the oscillator completes a whole number of cycles,
    which makes the signal periodic over the recording and keeps an FFT-based
    Hilbert transform free of wrap-around error.
    """
    band = dsp.get_band(band)
    width = band.f_hi - band.f_lo
    lo = band.f_lo + _EDGE_MARGIN * width
    span = width * (1 - 2 * _EDGE_MARGIN)
    f = np.fft.rfftfreq(n, 1.0 / rate_hz)
    shape = np.zeros_like(f)
    pos = f > 0
    shape[pos] = np.exp(-0.5 * (2 * np.pi * f[pos] * _DRIFT_SMOOTH_S) ** 2) / f[pos]
    coef = shape * (rng.standard_normal(len(f)) + 1j * rng.standard_normal(len(f)))
    g = np.fft.irfft(coef, n)
    sd = g.std()
    g = g / sd if sd > 0 else g
    freq = lo + span * 0.5 * (1 + np.tanh(g + rng.normal()))
    cycles = freq.sum() / rate_hz
    whole = max(round(cycles), 1)
    if abs(whole / cycles - 1) <= _MAX_CLOSURE:
        freq = freq * (whole / cycles)
    return rng.uniform(-np.pi, np.pi) + 2 * np.pi * np.cumsum(freq) / rate_hz


def _overlaps(a: dsp.BandDef, b: dsp.BandDef) -> bool:
    return a.f_lo < b.f_hi and b.f_lo < a.f_hi


def synthesize(spec: CouplingSpec, duration_s: float, sample_rate_hz: float = 128.0, *,
               subject_id: int = 0, video_id: int = 0,
               valence_score: float = 5.0) -> EegRecording:
    """Generate EEG as drifting band oscillators plus white noise.

    Every channel carries one constant-amplitude oscillator per background
    band.  A coupling gives the pair one shared drifting oscillator per
    background band overlapping the coupling band; channel ``b`` sees it
    delayed by ``phase_lag`` radians.  Coupling acts on phase only: the
    channel's oscillator in such a band takes the angle of the phasor mix
    ``sqrt(1 - sum(s**2)) * own + sum(s * shared)`` and keeps its amplitude,
    so band power does not depend on the couplings and strength 1 makes the
    channel follow the shared oscillator exactly.  A coupling band overlapping
    no background band adds a shared unit-amplitude oscillator instead.
    """
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    if not sample_rate_hz > 0:
        raise ValueError("sample rate must be positive")
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    for c in spec.couplings:
        if dsp.get_band(c.band).f_hi >= sample_rate_hz / 2:
            raise ValueError(f"band {c.band} exceeds Nyquist at {sample_rate_hz} Hz")
    bands = [dsp.get_band(b) for b in spec.band_amplitude
             if dsp.get_band(b).f_hi < sample_rate_hz / 2]
    amps = np.array([spec.band_amplitude[b.name] for b in bands])

    rng = np.random.default_rng(spec.seed)
    names = spec.channel_names
    index = {ch: i for i, ch in enumerate(names)}
    own = np.empty((len(names), len(bands), n))
    for i in range(len(names)):
        for k, band in enumerate(bands):
            own[i, k] = drifting_oscillator(rng, band, n, sample_rate_hz)

    # Per (channel, background band): summed squared coupling strength.
    load = np.zeros((len(names), len(bands)))
    shared = []
    for c in spec.couplings:
        cband = dsp.get_band(c.band)
        hit = [k for k, b in enumerate(bands) if _overlaps(b, cband)]
        if hit:
            parts = [(k, drifting_oscillator(rng, bands[k], n, sample_rate_hz)) for k in hit]
        else:
            parts = [(None, drifting_oscillator(rng, cband, n, sample_rate_hz))]
        shared.append((c, parts))
        for ch in (c.channel_a, c.channel_b):
            load[index[ch], hit] += c.strength ** 2

    # phasor mix for coupled (channel, band) cells; others keep their own phase
    phasor = {}
    extra = np.zeros((len(names), n))
    for c, parts in shared:
        for ch, lag in ((c.channel_a, 0.0), (c.channel_b, c.phase_lag)):
            i = index[ch]
            for k, phase in parts:
                if k is None:
                    extra[i] += c.strength * np.cos(phase - lag)
                    continue
                scale = c.strength / np.sqrt(max(load[i, k], 1.0))
                if (i, k) not in phasor:
                    phasor[i, k] = np.sqrt(max(1.0 - load[i, k], 0.0)) * np.exp(1j * own[i, k])
                phasor[i, k] += scale * np.exp(1j * (phase - lag))
    for (i, k), z in phasor.items():
        own[i, k] = np.angle(z)
    out = np.einsum("k,ckn->cn", amps, np.cos(own)) + extra

    noise = rng.standard_normal((len(names), n))
    out += np.array([spec.noise_level(ch) for ch in names])[:, None] * noise
    return EegRecording(names, out, sample_rate_hz, subject_id, video_id, valence_score)
