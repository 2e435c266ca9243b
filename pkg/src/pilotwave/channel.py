"""Fiber and attenuator models acting on the optical envelope."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .signals import ComplexEnvelope, watts_to_dbm


@dataclass(frozen=True)
class FiberConfig:
    """Linear SSMF span. Dispersion in ps/(nm km), loss in dB/km."""

    length_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    dispersion_ps_nm_km: float = 17.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError("fiber length must be >= 0")
        if self.attenuation_db_per_km < 0:
            raise ValueError("attenuation must be >= 0")

    @property
    def loss_db(self) -> float:
        return self.attenuation_db_per_km * self.length_km


def dispersion_response(freqs, center_frequency: float, fib: FiberConfig) -> np.ndarray:
    """All-pass chromatic dispersion transfer function at baseband offsets ``freqs``."""
    wavelength = SPEED_OF_LIGHT / center_frequency
    d_si = fib.dispersion_ps_nm_km * 1e-6  # s/m^2
    length_m = fib.length_km * 1e3
    phase = np.pi * d_si * wavelength**2 * np.asarray(freqs) ** 2 * length_m / SPEED_OF_LIGHT
    return np.exp(1j * phase)


def fiber_propagate(env: ComplexEnvelope, fib: FiberConfig) -> ComplexEnvelope:
    if len(env) < 2:
        raise ValueError("envelope needs at least 2 samples")
    if fib.length_km == 0:
        return env
    field = env.samples
    if fib.dispersion_ps_nm_km != 0:
        f = np.fft.fftfreq(field.size, 1 / env.sample_rate)
        field = np.fft.ifft(np.fft.fft(field) * dispersion_response(f, env.center_frequency, fib))
    field = field * 10 ** (-fib.loss_db / 20)
    return ComplexEnvelope(field, env.sample_rate, env.center_frequency)


def voa_attenuate(env: ComplexEnvelope, atten_db: float) -> ComplexEnvelope:
    if atten_db < 0:
        raise ValueError("VOA attenuation must be >= 0 dB")
    if atten_db == 0:
        return env
    return ComplexEnvelope(env.samples * 10 ** (-atten_db / 20), env.sample_rate, env.center_frequency)


def average_power_dbm(env: ComplexEnvelope) -> float:
    if len(env) == 0:
        raise ValueError("empty envelope")
    mean = float(np.mean(env.power()))
    if mean <= 0:
        raise ValueError("envelope carries zero power")
    return float(watts_to_dbm(mean))
