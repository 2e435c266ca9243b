"""Sampled-signal containers, PRBS patterns, filters and unit conversions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps_signal

# Fibonacci LFSR feedback taps, s[n] = s[n - order] ^ s[n - tap]
PRBS_TAPS = {7: 6, 15: 14, 31: 28}

FILTER_KINDS = ("bessel-lowpass", "butterworth-highpass", "brickwall-lowpass")


@dataclass(frozen=True)
class RealWaveform:
    """Uniformly sampled real signal (volts, amperes or watts)."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class ComplexEnvelope:
    """Sampled optical field envelope; ``|samples|**2`` is power in watts."""

    samples: np.ndarray
    sample_rate: float
    center_frequency: float = 193.1e12

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.center_frequency <= 0:
            raise ValueError("center_frequency must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("envelope contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    def power(self) -> np.ndarray:
        return self.samples.real**2 + self.samples.imag**2

    def power_trace(self) -> RealWaveform:
        return RealWaveform(self.power(), self.sample_rate)

    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class DigitalFilter:
    """A designed digital filter. IIR kinds carry second-order sections,
    the brickwall kind is applied as an ideal FFT mask."""

    kind: str
    order: int
    cutoff: float
    sample_rate: float
    sos: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_lowpass(self) -> bool:
        return self.kind.endswith("lowpass")

    def frequency_response(self, freqs) -> np.ndarray:
        """Complex response at the given frequencies in Hz."""
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        if self.kind == "brickwall-lowpass":
            af = np.abs(freqs)
            h = np.where(af < self.cutoff, 1.0, 0.0).astype(complex)
            h[np.isclose(af, self.cutoff, rtol=1e-12, atol=0.0)] = 1 / math.sqrt(2)
            return h
        _, h = sps_signal.sosfreqz(self.sos, worN=freqs, fs=self.sample_rate)
        return h

    def dc_gain(self) -> float:
        return float(abs(self.frequency_response(0.0)[0]))

    def settling_length(self, tol: float = 1e-6) -> int:
        """Samples until the impulse response envelope has decayed below ``tol``."""
        if self.sos is None:
            return 0
        _, poles, _ = sps_signal.sos2zpk(self.sos)
        r = float(np.max(np.abs(poles))) if poles.size else 0.0
        if r <= 0.0:
            return self.order
        return int(math.ceil(math.log(tol) / math.log(r))) + self.order


def prbs_generate(order: int, seed: int, n: int) -> np.ndarray:
    """First ``n`` output bits of the maximal-length LFSR of the given order.

    The register holds the last ``order`` outputs with the most recent bit in
    the LSB; each step emits ``s[k] = s[k-order] ^ s[k-tap]`` and shifts it in.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"unsupported PRBS order {order}; use one of {sorted(PRBS_TAPS)}")
    if n < 1:
        raise ValueError("n must be >= 1")
    seed = int(seed)
    if seed <= 0 or seed >= (1 << order):
        raise ValueError(f"seed must be a nonzero {order}-bit integer")
    tap = PRBS_TAPS[order]
    # history[j] = s[j - order]; register bit i is s[-1 - i]
    out = np.empty(order + n, dtype=np.uint8)
    out[:order] = [(seed >> (order - 1 - j)) & 1 for j in range(order)]
    # block update is valid while every referenced index precedes the block
    step = tap
    k = order
    end = order + n
    while k < end:
        m = min(step, end - k)
        out[k : k + m] = out[k - order : k - order + m] ^ out[k - tap : k - tap + m]
        k += m
    return out[order:].copy()


def design_filter(kind: str, order: int, cutoff: float, sample_rate: float) -> DigitalFilter:
    """Design a filter whose -3 dB point is ``cutoff``.

    IIR designs go through the bilinear transform with the cutoff prewarped,
    so the digital -3 dB frequency lands exactly on the request.
    """
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}")
    if order < 1:
        raise ValueError("order must be a positive integer")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff:g} Hz must lie strictly between 0 and Nyquist ({sample_rate / 2:g} Hz)"
        )
    if kind == "bessel-lowpass":
        sos = sps_signal.bessel(order, cutoff, btype="low", norm="mag", fs=sample_rate, output="sos")
    elif kind == "butterworth-highpass":
        sos = sps_signal.butter(order, cutoff, btype="high", fs=sample_rate, output="sos")
    else:
        sos = None
    return DigitalFilter(kind, order, float(cutoff), float(sample_rate), sos)


def apply_filter(filt: DigitalFilter, w: RealWaveform) -> RealWaveform:
    """Causal LTI filtering; output has the input's length and keeps the group delay."""
    if not math.isclose(w.sample_rate, filt.sample_rate, rel_tol=1e-12):
        raise ValueError(
            f"filter designed for {filt.sample_rate:g} Sa/s applied to a {w.sample_rate:g} Sa/s waveform"
        )
    if filt.kind == "brickwall-lowpass":
        spec = np.fft.rfft(w.samples)
        f = np.fft.rfftfreq(w.samples.size, 1 / w.sample_rate)
        spec *= filt.frequency_response(f).real
        y = np.fft.irfft(spec, n=w.samples.size)
    else:
        y = sps_signal.sosfilt(filt.sos, w.samples)
    return RealWaveform(y, w.sample_rate)


def upsample_hold(
    symbols: Sequence[int] | np.ndarray,
    levels: Mapping[int, float] | Sequence[float] | np.ndarray,
    sps: int,
    sample_rate: float,
) -> RealWaveform:
    """Zero-order-hold rendering: each symbol held for ``sps`` samples at its level."""
    symbols = np.asarray(symbols)
    if symbols.size == 0:
        raise ValueError("no symbols to render")
    if sps < 2:
        raise ValueError("sps must be >= 2")
    if isinstance(levels, Mapping):
        table = np.full(max(int(k) for k in levels) + 1, np.nan)
        for k, v in levels.items():
            table[int(k)] = v
    else:
        table = np.asarray(levels, dtype=float)
    if symbols.min() < 0 or symbols.max() >= table.size or np.isnan(table[symbols]).any():
        missing = sorted({int(s) for s in np.unique(symbols)
                          if s < 0 or s >= table.size or np.isnan(table[s])})
        raise ValueError(f"no level mapped for symbol value(s) {missing}")
    return RealWaveform(np.repeat(table[symbols], sps), sample_rate)


def dbm_to_watts(dbm):
    return 1e-3 * 10 ** (np.asarray(dbm, dtype=float) / 10)


def watts_to_dbm(watts):
    watts = np.asarray(watts, dtype=float)
    if np.any(watts <= 0):
        raise ValueError("power must be positive to express in dBm")
    return 10 * np.log10(watts / 1e-3)


def dbm_watts_convert(value, direction: str):
    """Convert between dBm and watts; ``direction`` is 'to_watts' or 'to_dbm'."""
    if direction == "to_watts":
        out = dbm_to_watts(value)
    elif direction == "to_dbm":
        out = watts_to_dbm(value)
    else:
        raise ValueError("direction must be 'to_watts' or 'to_dbm'")
    return float(out) if np.ndim(out) == 0 else out
