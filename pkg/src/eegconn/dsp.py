"""Band filtering, Welch spectra and analytic-signal phase."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
from scipy.signal import fftconvolve
from scipy.signal.windows import hamming, hann

FILTER_TAPS = 255
WELCH_NPERSEG = 128
WELCH_OVERLAP = 64


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class BandDef:
    name: str
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not 0 <= self.f_lo < self.f_hi:
            raise ValueError(f"bad band edges {self.f_lo}-{self.f_hi} Hz")

    @property
    def center(self) -> float:
        return 0.5 * (self.f_lo + self.f_hi)


BANDS: Tuple[BandDef, ...] = (
    BandDef("delta", 0.0, 3.0),
    BandDef("theta", 4.0, 7.0),
    BandDef("low_alpha", 8.0, 9.5),
    BandDef("high_alpha", 10.5, 12.0),
    BandDef("alpha", 8.0, 12.0),
    BandDef("low_beta", 13.0, 16.0),
    BandDef("mid_beta", 17.0, 20.0),
    BandDef("high_beta", 21.0, 29.0),
    BandDef("beta", 13.0, 29.0),
    BandDef("gamma", 30.0, 50.0),
)
BAND_BY_NAME: Dict[str, BandDef] = {b.name: b for b in BANDS}

# Bands that do not overlap one another; together they tile most of 0-50 Hz.
PARTITION_BANDS = ("delta", "theta", "low_alpha", "high_alpha",
                   "low_beta", "mid_beta", "high_beta", "gamma")


def get_band(band) -> BandDef:
    if isinstance(band, BandDef):
        return band
    try:
        return BAND_BY_NAME[band]
    except KeyError:
        raise KeyError(f"unknown band {band!r}; expected one of {sorted(BAND_BY_NAME)}") from None


@lru_cache(maxsize=64)
def design_bandpass(f_lo: float, f_hi: float, rate_hz: float, taps: int = FILTER_TAPS) -> np.ndarray:
    """Hamming-windowed sinc FIR, unit gain at the band centre.

    ``f_lo == 0`` gives a lowpass with unit DC gain.
    """
    if f_hi >= rate_hz / 2:
        raise SignalError(f"upper edge {f_hi} Hz not below Nyquist ({rate_hz / 2} Hz)")
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * f_hi / rate_hz * np.sinc(2 * f_hi / rate_hz * n)
    if f_lo > 0:
        h -= 2 * f_lo / rate_hz * np.sinc(2 * f_lo / rate_hz * n)
    h *= hamming(taps, sym=True)
    f_ref = 0.5 * (f_lo + f_hi) if f_lo > 0 else 0.0
    gain = np.abs(np.sum(h * np.exp(-2j * np.pi * f_ref / rate_hz * n)))
    h = h / gain
    h.flags.writeable = False
    return h


def bandpass(segment, rate_hz: float, band) -> np.ndarray:
    """Zero-phase band filtering along the last axis.

    The FIR is applied forward and backward, which for a symmetric kernel is a
    single centred convolution with ``h * h``.  Both ends are padded with an
    odd reflection of ``3 * taps - 3`` samples.
    """
    band = get_band(band)
    x = np.asarray(segment, dtype=float)
    h = design_bandpass(band.f_lo, band.f_hi, float(rate_hz))
    n = x.shape[-1]
    if n < 3 * len(h):
        raise SignalError(
            f"signal of {n} samples is shorter than 3x the {len(h)}-tap filter; "
            "filter the whole recording before segmenting")
    pad = 3 * (len(h) - 1)
    left = 2 * x[..., :1] - x[..., pad:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-pad - 2:-1]
    xp = np.concatenate([left, x, right], axis=-1)
    kernel = np.convolve(h, h)
    kernel = kernel.reshape((1,) * (x.ndim - 1) + kernel.shape)
    y = fftconvolve(xp, kernel, mode="same", axes=-1)
    return y[..., pad:pad + n]


@dataclass(frozen=True)
class BandBank:
    """A multichannel signal split into the ten canonical bands."""

    source: str
    signals: Dict[str, np.ndarray] = field(repr=False)

    def __getitem__(self, band) -> np.ndarray:
        return self.signals[get_band(band).name]

    def segment(self, start: int, stop: int) -> "BandBank":
        return BandBank(f"{self.source}[{start}:{stop}]",
                        {k: v[..., start:stop] for k, v in self.signals.items()})


def band_bank(signal, rate_hz: float, source: str = "") -> BandBank:
    x = np.asarray(signal, dtype=float)
    return BandBank(source, {b.name: bandpass(x, rate_hz, b) for b in BANDS})


def psd_frequencies(n_bins: int, rate_hz: float) -> np.ndarray:
    return np.arange(n_bins) * rate_hz / (2 * (n_bins - 1))


def welch_psd(channel_signal, rate_hz: float, nperseg: int = WELCH_NPERSEG,
              noverlap: int = WELCH_OVERLAP) -> np.ndarray:
    """One-sided PSD density by averaging Hann-windowed periodograms.

    The window is the symmetric Hann, no detrending is applied.  Works on the
    last axis, so a ``(channels, samples)`` array gives one PSD per channel.
    """
    x = np.asarray(channel_signal, dtype=float)
    n = x.shape[-1]
    if n < nperseg:
        raise SignalError(f"need at least {nperseg} samples for Welch, got {n}")
    step = nperseg - noverlap
    starts = range(0, n - nperseg + 1, step)
    win = hann(nperseg, sym=True)
    scale = 1.0 / (rate_hz * np.sum(win ** 2))
    acc = 0.0
    for s in starts:
        spec = np.fft.rfft(x[..., s:s + nperseg] * win, axis=-1)
        acc = acc + (spec.real ** 2 + spec.imag ** 2)
    psd = acc * scale / len(starts)
    psd[..., 1:-1] *= 2.0
    if nperseg % 2:
        psd[..., -1] *= 2.0
    return psd


def band_power(psd, band, rate_hz: float) -> np.ndarray:
    """Mean PSD over bins whose centre frequency falls in the band (DC excluded)."""
    band = get_band(band)
    psd = np.asarray(psd, dtype=float)
    freqs = psd_frequencies(psd.shape[-1], rate_hz)
    mask = (freqs >= band.f_lo) & (freqs <= band.f_hi) & (freqs > 0)
    if not mask.any():
        raise SignalError(f"no PSD bins inside {band.name} at this resolution")
    return psd[..., mask].mean(axis=-1)


def analytic_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    spec = np.fft.fft(x, axis=-1)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(spec * h, axis=-1)


def instantaneous_phase(band_signal) -> np.ndarray:
    """Per-channel phase of the analytic signal, in (-pi, pi]."""
    x = np.asarray(band_signal, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise SignalError("empty signal")
    silent = ~np.any(x != 0, axis=-1)
    if silent.any():
        idx = np.flatnonzero(np.ravel(silent))
        raise SignalError(f"phase undefined for all-zero channel(s) {idx.tolist()}")
    if not np.all(np.isfinite(x)):
        raise SignalError("non-finite samples")
    phase = np.angle(analytic_signal(x))
    phase[phase <= -np.pi] = np.pi
    return phase
