import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import elementary_charge
from scipy.integrate import trapezoid

from pilotwave.rx import (
    ReceiverConfig,
    SyncError,
    count_ber,
    decide,
    decode_symbols,
    duobinary_decode,
    estimate_thresholds,
    photodetect,
    rx_filter,
    synchronize,
)
from pilotwave.signals import ComplexEnvelope, RealWaveform, design_filter, upsample_hold
from pilotwave.tx import ModulationFormat, PilotToneConfig, apply_pilot

QUIET = ReceiverConfig(noise=False)


def const_env(p, n, fs=100e9):
    return ComplexEnvelope(np.full(n, math.sqrt(p), dtype=complex), fs)


def tone_amplitude(x, fs, f):
    """Amplitude of the ``f`` component by projection over whole periods."""
    period = int(round(fs / f))
    n = (x.size // period) * period
    t = np.arange(n) / fs
    x = x[-n:] - np.mean(x[-n:])
    return 2 * abs(np.mean(x * np.exp(-2j * np.pi * f * t)))


# ---- photodetector ---------------------------------------------------------------

def test_noiseless_constant_power():
    out = photodetect(const_env(2e-3, 100), QUIET)
    assert np.allclose(out.samples, 0.8 * 2e-3, rtol=1e-12)


def test_noiseless_pilot_envelope_ratio():
    env = apply_pilot(const_env(1e-3, 8000, fs=100e6), PilotToneConfig(), 0.08)
    i = photodetect(env, QUIET).samples
    assert (i.max() - i.min()) / (i.max() + i.min()) == pytest.approx(0.08, abs=0.001)


def test_thermal_variance():
    rx = ReceiverConfig(shot_noise=False, thermal_noise_density=5e-11)
    n, fs = 1_200_000, 100e9
    i = photodetect(ComplexEnvelope(np.zeros(n, dtype=complex), fs), rx, np.random.default_rng(4)).samples
    assert np.var(i) == pytest.approx(5e-11**2 * fs / 2, rel=0.02)


def test_shot_noise_slope():
    rx = ReceiverConfig(thermal_noise_density=0.0, shot_noise=True)
    fs = 100e9
    powers = np.array([1e-3, 3e-3, 6e-3, 1e-2])
    var = [np.var(photodetect(const_env(p, 400_000, fs), rx, np.random.default_rng(k)).samples)
           for k, p in enumerate(powers)]
    slope = np.polyfit(powers, var, 1)[0]
    assert slope == pytest.approx(2 * elementary_charge * 0.8 * fs / 2, rel=0.05)


# ---- receiver filtering -----------------------------------------------------------

def _pilot_current(fs=100e6, periods=12):
    n = int(periods * fs / 50e3)
    t = np.arange(n) / fs
    return RealWaveform(1e-3 * (1 + 0.08 * np.sin(2 * np.pi * 50e3 * t)), fs)


def test_pilot_highpass_suppresses_tone():
    x = _pilot_current()
    y = rx_filter(x, ReceiverConfig(remove_pilot=True)).samples
    hp = design_filter("butterworth-highpass", 2, 280e3, x.sample_rate)
    body = y[hp.settling_length():]
    ratio = tone_amplitude(body, x.sample_rate, 50e3) / tone_amplitude(x.samples, x.sample_rate, 50e3)
    assert ratio < 0.05
    assert ratio == pytest.approx(abs(hp.frequency_response(50e3)[0]), rel=0.05)
    # the mean is restored
    assert np.mean(body) == pytest.approx(1e-3, rel=1e-3)


def test_pilot_preserved_without_highpass():
    x = _pilot_current(fs=100e9 / 256, periods=4)
    y = rx_filter(x, ReceiverConfig(remove_pilot=False, bandwidth=28e9 / 256)).samples
    ratio = tone_amplitude(y, x.sample_rate, 50e3) / tone_amplitude(x.samples, x.sample_rate, 50e3)
    assert ratio == pytest.approx(1.0, abs=0.01)


def test_white_noise_power_matches_enb():
    fs = 100e9
    rx = ReceiverConfig()
    x = np.random.default_rng(9).standard_normal(1 << 20)
    y = rx_filter(RealWaveform(x, fs), rx).samples[1000:]
    lp = design_filter("bessel-lowpass", 4, 28e9, fs)
    f = np.linspace(0, fs / 2, 200_001)
    enb = trapezoid(np.abs(lp.frequency_response(f)) ** 2, f)
    assert np.var(y) / np.var(x) == pytest.approx(enb / (fs / 2), rel=0.02)


# ---- synchronisation ----------------------------------------------------------------

def _random_drive(n_sym=20000, sps=4, levels=(-1.0, 1.0), seed=0):
    rng = np.random.default_rng(seed)
    sym = rng.integers(0, len(levels), n_sym)
    return sym, upsample_hold(sym, np.asarray(levels), sps, 100e9)


def test_sync_recovers_shift():
    sym, ref = _random_drive()
    rx = RealWaveform(np.concatenate((np.zeros(37), ref.samples))[: len(ref)], ref.sample_rate)
    assert synchronize(rx, ref, 4).lag == 37


@pytest.mark.parametrize("sps,n_levels", [(2, 2), (4, 2), (8, 4), (5, 3)])
def test_sync_identity_decides_exactly(sps, n_levels):
    levels = np.linspace(-1, 1, n_levels)
    sym, ref = _random_drive(sps=sps, levels=levels, seed=sps)
    res = synchronize(ref, ref, sps, training_symbols=sym, n_levels=n_levels)
    assert res.lag == 0 and 0 <= res.phase < sps
    got = decide(res.aligned_symbol_samples, estimate_thresholds(res.aligned_symbol_samples,
                 sym[res.first_symbol : res.first_symbol + res.aligned_symbol_samples.size], n_levels))
    assert np.array_equal(got, sym[res.first_symbol : res.first_symbol + got.size])


def test_sync_fails_on_unrelated_capture():
    _, ref = _random_drive(seed=1)
    noise = RealWaveform(np.random.default_rng(2).standard_normal(len(ref)), ref.sample_rate)
    with pytest.raises(SyncError):
        synchronize(noise, ref, 4)


# ---- thresholds and decisions -----------------------------------------------------------

def test_threshold_examples():
    assert estimate_thresholds([0.0] * 100 + [1.0] * 100, [0] * 100 + [1] * 100, 2, 1).tolist() == [0.5]
    s = np.repeat(np.arange(4), 100)
    assert estimate_thresholds(s.astype(float), s, 4).tolist() == [0.5, 1.5, 2.5]


def test_thresholds_under_gaussian_noise():
    rng = np.random.default_rng(12)
    s = rng.integers(0, 4, 40000)
    x = s + 0.05 * rng.standard_normal(s.size)
    assert np.allclose(estimate_thresholds(x, s, 4), [0.5, 1.5, 2.5], atol=0.02)


def test_threshold_errors():
    with pytest.raises(ValueError):
        estimate_thresholds([0.0, 0.1], [0, 0], 2, 1)
    with pytest.raises(ValueError):
        estimate_thresholds([0.0] * 5 + [1.0] * 5, [0] * 5 + [1] * 5, 2)


def test_decide_examples():
    th = [0.5, 1.5, 2.5]
    assert decide([-1.0], th).tolist() == [0]
    assert decide([9.0], th).tolist() == [3]
    assert decide([1.5], th).tolist() == [2]  # ties go to the upper symbol


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.lists(st.floats(-5, 5), min_size=1, max_size=3))
def test_decide_counts_thresholds(samples, th):
    th = sorted(th)
    got = decide(samples, th)
    assert got.tolist() == [sum(t <= x for t in th) for x in samples]


def test_duobinary_decode_examples():
    assert duobinary_decode([0, 1, 2, 1]).tolist() == [0, 1, 0, 1]
    with pytest.raises(ValueError):
        duobinary_decode([3])
    with pytest.raises(ValueError):
        decode_symbols([2], ModulationFormat.NRZ)


# ---- BER counting ---------------------------------------------------------------------------

def test_count_ber_examples():
    b = np.random.default_rng(0).integers(0, 2, 10_000)
    r = count_ber(b, b)
    assert (r.errors, r.ber, r.low_confidence) == (0, 0.0, True)
    assert count_ber(b, 1 - b).ber == 1.0
    big = np.zeros(1_000_000, dtype=np.uint8)
    flipped = big.copy()
    flipped[123_456] = 1
    r = count_ber(big, flipped)
    assert (r.errors, r.ber, r.low_confidence) == (1, 1e-6, True)
    errors, total, ber = r
    assert total == 1_000_000


def test_count_ber_errors():
    with pytest.raises(ValueError):
        count_ber(np.zeros(2000), np.zeros(1999))
    with pytest.raises(ValueError):
        count_ber(np.zeros(500), np.zeros(500))
    assert count_ber(np.zeros(2000), np.ones(2000), discard_head=500).total == 1500
