"""Receiver: photodiode, DSP filtering, pattern synchronisation and decisions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps_signal
from scipy.constants import elementary_charge

from .signals import ComplexEnvelope, RealWaveform, apply_filter, design_filter
from .tx import ModulationFormat, gray_decode_pam4

# Single-sided thermal noise density that puts noiseless-pilot NRZ at BER 1e-9
# near -4 dBm received power with the default transmitter (see
# experiments.calibrate_thermal_noise).
DEFAULT_THERMAL_NOISE_DENSITY = 3.24e-10

LOW_CONFIDENCE_ERRORS = 100


class SyncError(RuntimeError):
    """Received capture does not correlate with the transmitted pattern."""


@dataclass(frozen=True)
class ReceiverConfig:
    responsivity: float = 0.8
    thermal_noise_density: float = DEFAULT_THERMAL_NOISE_DENSITY
    shot_noise: bool = True
    noise: bool = True
    bandwidth: float = 28e9
    lowpass_order: int = 4
    pt_highpass_cutoff: float = 280e3
    highpass_order: int = 2
    remove_pilot: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.responsivity <= 0:
            raise ValueError("responsivity must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.thermal_noise_density < 0:
            raise ValueError("thermal noise density must be >= 0")


@dataclass(frozen=True)
class SyncResult:
    """Pattern alignment of a capture.

    Symbol ``first_symbol + i`` is decided on ``aligned_symbol_samples[i]``,
    taken at sample ``lag + (first_symbol + i) * sps + offset``.
    """

    lag: int
    phase: int
    offset: int
    sps: int
    first_symbol: int
    aligned_symbol_samples: np.ndarray
    correlation: float

    def sample_index(self, symbol_index: int) -> int:
        return self.lag + symbol_index * self.sps + self.offset


@dataclass(frozen=True)
class BerCount:
    errors: int
    total: int
    ber: float
    low_confidence: bool

    def __iter__(self):
        return iter((self.errors, self.total, self.ber))


def photodetect(env: ComplexEnvelope, rx: ReceiverConfig, rng: np.random.Generator | None = None) -> RealWaveform:
    """Square-law detection plus white thermal and signal-dependent shot noise."""
    power = env.power()
    current = rx.responsivity * power
    if rx.noise:
        if rng is None:
            rng = np.random.default_rng(rx.rng_seed)
        half_band = env.sample_rate / 2
        var = rx.thermal_noise_density**2 * half_band
        if rx.shot_noise:
            var = var + 2 * elementary_charge * current * half_band
        current = current + rng.standard_normal(current.size) * np.sqrt(var)
    return RealWaveform(current, env.sample_rate)


def rx_filter(signal: RealWaveform, rx: ReceiverConfig, remove_pilot: bool | None = None,
              time_scale: float = 1.0) -> RealWaveform:
    """Noise-limiting Bessel lowpass, optionally followed by the pilot highpass.

    The highpass acts on the AC part only and the capture mean is restored, so
    decision levels stay on their absolute scale.
    """
    if remove_pilot is None:
        remove_pilot = rx.remove_pilot
    out = signal
    if rx.bandwidth < signal.sample_rate / 2:
        lp = design_filter("bessel-lowpass", rx.lowpass_order, rx.bandwidth, signal.sample_rate)
        out = apply_filter(lp, out)
    if remove_pilot:
        hp = pilot_highpass(rx, signal.sample_rate, time_scale)
        dc = float(np.mean(out.samples))
        ac = apply_filter(hp, RealWaveform(out.samples - dc, out.sample_rate))
        out = RealWaveform(ac.samples + dc, out.sample_rate)
    return out


def pilot_highpass(rx: ReceiverConfig, sample_rate: float, time_scale: float = 1.0):
    return design_filter("butterworth-highpass", rx.highpass_order, rx.pt_highpass_cutoff * time_scale, sample_rate)


def _lag_search(rx: np.ndarray, ref: np.ndarray, max_lag: int, window: int) -> tuple[int, float]:
    ref_seg = ref[:window] - ref[:window].mean()
    ref_norm = np.linalg.norm(ref_seg)
    if ref_norm == 0:
        raise SyncError("reference segment is constant")
    seg = rx[: window + max_lag].astype(float)
    seg = seg - seg.mean()
    corr = sps_signal.correlate(seg, ref_seg, mode="valid", method="fft")
    energy = np.concatenate(([0.0], np.cumsum(seg**2)))
    win_norm = np.sqrt(np.maximum(energy[window:] - energy[:-window], 1e-300))
    ncc = corr / (ref_norm * win_norm[: corr.size])
    lag = int(np.argmax(ncc))
    return lag, float(ncc[lag])


def gap_statistic(samples: np.ndarray, symbols: np.ndarray, n_levels: int) -> float:
    """Smallest normalised separation between adjacent level classes.

    For each adjacent pair of classes the mean spacing is divided by the sum of
    the class standard deviations; a noiseless open eye scores very high.
    """
    means = np.empty(n_levels)
    stds = np.empty(n_levels)
    for k in range(n_levels):
        v = samples[symbols == k]
        if v.size == 0:
            return -np.inf
        means[k] = v.mean()
        stds[k] = v.std()
    scale = np.ptp(means) if n_levels > 1 else 1.0
    eps = 1e-12 * max(scale, 1e-300)
    return float(np.min(np.diff(means) / (stds[:-1] + stds[1:] + eps)))


def synchronize(
    rx: RealWaveform,
    reference_drive: RealWaveform,
    sps: int,
    training_symbols: np.ndarray | None = None,
    n_levels: int | None = None,
    max_lag: int = 1024,
    window: int = 1 << 16,
    n_train: int = 1 << 16,
    skip_symbols: int = 0,
) -> SyncResult:
    """Align a capture to the transmitted pattern.

    The coarse lag maximises the normalised cross-correlation with the
    reference drive. With known ``training_symbols`` (one per symbol, values
    0..n_levels-1 in ascending level order) the sampling offset is the one
    that maximises :func:`gap_statistic`; otherwise the offset within the
    symbol that maximises sample variance is used.
    """
    x = rx.samples
    ref = reference_drive.samples
    max_lag = int(min(max_lag, max(x.size - 2, 0)))
    window = int(min(window, ref.size, x.size - max_lag))
    if window < 2 * sps:
        raise SyncError("capture too short to synchronise")
    lag, peak = _lag_search(x, ref, max_lag, window)
    if not peak >= 0.2:
        raise SyncError(f"correlation peak {peak:.3f} below 0.2")

    def take(offset: int, first: int, count: int) -> np.ndarray:
        idx = lag + (first + np.arange(count)) * sps + offset
        return x[idx]

    def span(offset: int) -> tuple[int, int]:
        first = max(skip_symbols, -((lag + offset) // sps))
        last = (x.size - 1 - lag - offset) // sps
        if training_symbols is not None:
            last = min(last, len(training_symbols) - 1)
        return first, last - first + 1

    if training_symbols is not None:
        training_symbols = np.asarray(training_symbols, dtype=np.int64)
        if n_levels is None:
            n_levels = int(training_symbols.max()) + 1
        best = None
        for offset in range(-sps, 2 * sps):
            first, count = span(offset)
            count = min(count, n_train)
            if count <= 0:
                continue
            stat = gap_statistic(take(offset, first, count), training_symbols[first : first + count], n_levels)
            if best is None or stat > best[0]:
                best = (stat, offset)
        offset = best[1]
    else:
        best = None
        for offset in range(sps):
            first, count = span(offset)
            v = float(np.var(take(offset, first, min(count, n_train))))
            if best is None or v > best[0]:
                best = (v, offset)
        offset = best[1]
    first, count = span(offset)
    return SyncResult(
        lag=lag,
        phase=offset % sps,
        offset=offset,
        sps=sps,
        first_symbol=first,
        aligned_symbol_samples=take(offset, first, count),
        correlation=peak,
    )


def estimate_thresholds(training_samples, training_symbols, n_levels: int, min_per_level: int = 100) -> np.ndarray:
    """Midpoints between the mean received level of adjacent symbol classes."""
    samples = np.asarray(training_samples, dtype=float)
    symbols = np.asarray(training_symbols)
    if samples.shape != symbols.shape:
        raise ValueError("training samples and symbols differ in length")
    means = np.empty(n_levels)
    for k in range(n_levels):
        v = samples[symbols == k]
        if v.size == 0:
            raise ValueError(f"no training samples for level {k}")
        if v.size < min_per_level:
            raise ValueError(f"level {k} has {v.size} training samples, need {min_per_level}")
        means[k] = v.mean()
    return np.sort((means[:-1] + means[1:]) / 2)


def decide(samples, thresholds) -> np.ndarray:
    """Symbol = number of thresholds at or below the sample (ties go up)."""
    return np.searchsorted(np.asarray(thresholds, dtype=float), np.asarray(samples, dtype=float), side="right")


def duobinary_decode(symbols3) -> np.ndarray:
    s = np.asarray(symbols3, dtype=np.int64)
    if s.size and (s.min() < 0 or s.max() > 2):
        raise ValueError("duobinary symbols must be in 0..2")
    return (s % 2).astype(np.uint8)


def decode_symbols(symbols, fmt: ModulationFormat) -> np.ndarray:
    fmt = ModulationFormat.parse(fmt)
    if fmt is ModulationFormat.PAM4:
        return gray_decode_pam4(symbols)
    if fmt is ModulationFormat.DUOBINARY:
        return duobinary_decode(symbols)
    s = np.asarray(symbols, dtype=np.int64)
    if s.size and (s.min() < 0 or s.max() > 1):
        raise ValueError("NRZ symbols must be 0 or 1")
    return s.astype(np.uint8)


def count_ber(tx_bits, rx_bits, discard_head: int = 0, min_total: int = 1000) -> BerCount:
    """Bit-by-bit comparison after dropping ``discard_head`` leading bits."""
    tx_bits = np.asarray(tx_bits)[discard_head:]
    rx_bits = np.asarray(rx_bits)[discard_head:]
    if tx_bits.size != rx_bits.size:
        raise ValueError(f"length mismatch: {tx_bits.size} transmitted vs {rx_bits.size} received bits")
    total = int(tx_bits.size)
    if total < min_total:
        raise ValueError(f"only {total} bits compared, need at least {min_total}")
    errors = int(np.count_nonzero(tx_bits != rx_bits))
    return BerCount(errors, total, errors / total, errors < LOW_CONFIDENCE_ERRORS)
