"""Measurement products: modulation depth, eye histograms, BER curves, penalties."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps_signal

from .rx import SyncResult
from .signals import RealWaveform, apply_filter, design_filter

DEPTH_LOWPASS_CUTOFF = 280e3


class UnbracketableError(ValueError):
    """Target BER lies outside the measured range of a curve."""


@dataclass(frozen=True)
class DepthMeasurement:
    p_max: float
    p_min: float
    depth_pct: float


def modulation_depth_pct(p_max: float, p_min: float) -> float:
    if p_max + p_min <= 0:
        return 0.0
    return (p_max - p_min) / (p_max + p_min) * 100.0


def measure_mod_depth(
    power_trace: RealWaveform,
    pilot_frequency: float = 50e3,
    lowpass_cutoff: float = DEPTH_LOWPASS_CUTOFF,
) -> DepthMeasurement:
    """Pilot-tone modulation depth of an optical power trace.

    The trace is band-limited by an ideal lowpass at ``lowpass_cutoff``; the
    first pilot period is discarded, as is up to one trailing period as long
    as a full period remains, and the extremes of the rest give
    (P_max - P_min) / (P_max + P_min).
    """
    fs = power_trace.sample_rate
    period = int(round(fs / pilot_frequency))
    if power_trace.samples.size < 2 * period:
        raise ValueError(
            f"trace of {power_trace.duration:.3g} s is shorter than two pilot periods ({2 / pilot_frequency:.3g} s)"
        )
    if fs < 10 * lowpass_cutoff:
        raise ValueError("sample rate must be at least 10x the measurement lowpass cutoff")
    lp = design_filter("brickwall-lowpass", 1, lowpass_cutoff, fs)
    x = power_trace.samples
    # even extension keeps the circular FFT free of an end-to-start jump
    ext = RealWaveform(np.concatenate((x, x[::-1])), fs)
    smooth = apply_filter(lp, ext).samples[: x.size]
    tail = min(period, x.size - 2 * period)
    body = smooth[period : x.size - tail]
    p_max = float(body.max())
    p_min = float(max(body.min(), 0.0))
    return DepthMeasurement(p_max, p_min, modulation_depth_pct(p_max, p_min))


@dataclass(frozen=True)
class EyeHistogram:
    """Counts over (time within two symbol periods) x (amplitude).

    ``grid[i, j]`` counts samples in time bin ``i`` and amplitude bin ``j``;
    the decision instant sits at the left edge of time bin ``n_time // 2``.
    """

    grid: np.ndarray
    ui: float
    amplitude_range: tuple[float, float]

    @property
    def decision_column(self) -> int:
        return self.grid.shape[0] // 2

    @property
    def amplitude_edges(self) -> np.ndarray:
        return np.linspace(*self.amplitude_range, self.grid.shape[1] + 1)

    def clusters(self, column: int | None = None) -> list[tuple[int, int]]:
        """Runs of occupied amplitude bins in a time column, as (start, stop)."""
        col = self.grid[self.decision_column if column is None else column] > 0
        runs, start = [], None
        for j, occupied in enumerate(col):
            if occupied and start is None:
                start = j
            elif not occupied and start is not None:
                runs.append((start, j))
                start = None
        if start is not None:
            runs.append((start, col.size))
        return runs


def eye_histogram(
    signal: RealWaveform,
    symbol_rate: float,
    sync: SyncResult,
    bins: tuple[int, int] = (64, 64),
    amplitude_range: tuple[float, float] | None = None,
    max_symbols: int = 20000,
) -> EyeHistogram:
    n_time, n_amp = bins
    if n_time < 32 or n_amp < 32 or n_time % 2:
        raise ValueError("eye needs an even number of time bins and at least 32x32 bins")
    sps = sync.sps
    if not math.isclose(signal.sample_rate / symbol_rate, sps, rel_tol=1e-9):
        raise ValueError("symbol rate does not match the synchronisation")
    up = max(1, math.ceil(n_time / (2 * sps)))
    start = sync.sample_index(sync.first_symbol) - sps
    start = max(start, 0)
    stop = min(signal.samples.size, start + (max_symbols + 2) * sps)
    seg = signal.samples[start:stop]
    fine = sps_signal.resample_poly(seg, up, 1) if up > 1 else seg
    # drop interpolation edge effects
    guard = 8 * up
    fine = fine[guard:-guard] if fine.size > 4 * guard else fine
    idx0 = start + guard / up
    t = idx0 + np.arange(fine.size) / up  # in original samples
    anchor = sync.lag + sync.offset
    tau = np.mod(t - anchor + sps, 2 * sps)
    cols = np.floor(tau / (2 * sps) * n_time + 1e-9).astype(int) % n_time
    if amplitude_range is None:
        lo, hi = float(fine.min()), float(fine.max())
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        amplitude_range = (lo - pad, hi + pad)
    lo, hi = amplitude_range
    rows = np.floor((fine - lo) / (hi - lo) * n_amp).astype(int)
    keep = (rows >= 0) & (rows < n_amp)
    grid = np.zeros((n_time, n_amp), dtype=np.int64)
    np.add.at(grid, (cols[keep], rows[keep]), 1)
    return EyeHistogram(grid, 1.0 / symbol_rate, (float(lo), float(hi)))


@dataclass(frozen=True)
class BerPoint:
    power_dbm: float
    errors: int
    total_bits: int
    ber: float
    low_confidence: bool
    failed: bool = False
    note: str = ""

    @property
    def finite(self) -> bool:
        return not self.failed and self.errors > 0

    @property
    def plot_ber(self) -> float:
        """BER for plotting; zero-error points sit at the 1/total floor."""
        if self.total_bits <= 0:
            return float("nan")
        return self.ber if self.errors else 1.0 / self.total_bits

    @property
    def neglog_ber(self) -> float:
        return -math.log10(self.ber) if self.errors else math.inf


@dataclass
class BerCurve:
    label: str
    points: list[BerPoint] = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.power_dbm)

    @property
    def powers(self) -> np.ndarray:
        return np.array([p.power_dbm for p in self.points])

    def finite_points(self) -> list[BerPoint]:
        return [p for p in self.points if p.finite]


def power_at(curve: BerCurve, target_neglog_ber: float) -> float:
    """Received power at which the curve crosses ``target_neglog_ber``.

    Linear interpolation of power against -log10(BER) between the first pair
    of consecutive nonzero-BER points that brackets the target.
    """
    pts = curve.finite_points()
    if len(pts) < 2:
        raise UnbracketableError(f"curve {curve.label!r} has fewer than 2 nonzero-BER points")
    y = np.array([p.neglog_ber for p in pts])
    x = np.array([p.power_dbm for p in pts])
    t = target_neglog_ber
    for i in range(len(pts) - 1):
        y0, y1 = y[i], y[i + 1]
        if min(y0, y1) <= t <= max(y0, y1):
            if y1 == y0:
                return float(x[i])
            return float(x[i] + (t - y0) * (x[i + 1] - x[i]) / (y1 - y0))
    raise UnbracketableError(
        f"-log10 BER {t} outside curve {curve.label!r} range [{y.min():.2f}, {y.max():.2f}]"
    )


def penalty_at(curve_ref: BerCurve, curve_pt: BerCurve, target_neglog_ber: float) -> float:
    """Extra received power (dB) the impaired curve needs at the target BER."""
    return power_at(curve_pt, target_neglog_ber) - power_at(curve_ref, target_neglog_ber)
