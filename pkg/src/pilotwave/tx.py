"""Transmitter: line codes, drive waveform synthesis, MZM and pilot tone."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .signals import (
    ComplexEnvelope,
    DigitalFilter,
    RealWaveform,
    apply_filter,
    dbm_to_watts,
    design_filter,
    upsample_hold,
)

PILOT_BAND = (47.5e3, 52.5e3)
MAX_PILOT_DEPTH_PCT = 8.0

# Gray mapping 00->0, 10->1, 11->2, 01->3, indexed by (bit1 << 1) | bit2
_GRAY_ENCODE = np.array([0, 3, 1, 2], dtype=np.int8)
# inverse: symbol -> (bit1, bit2)
_GRAY_DECODE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.uint8)


class MzmRegimeWarning(UserWarning):
    """Drive excursion leaves the monotonic half-period of the MZM transfer."""


class ModulationFormat(str, enum.Enum):
    NRZ = "nrz"
    PAM4 = "pam4"
    DUOBINARY = "duobinary"

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self is ModulationFormat.PAM4 else 1

    @property
    def n_levels(self) -> int:
        """Number of decision levels seen by the receiver."""
        return {"nrz": 2, "pam4": 4, "duobinary": 3}[self.value]

    @classmethod
    def parse(cls, value) -> "ModulationFormat":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown modulation format {value!r}; expected one of {[f.value for f in cls]}"
            ) from None


DEFAULT_VPP = {ModulationFormat.NRZ: 0.5, ModulationFormat.DUOBINARY: 0.5, ModulationFormat.PAM4: 0.25}


@dataclass(frozen=True)
class TxConfig:
    """Electrical transmitter settings.

    ``vpp`` is the AWG output swing before the electrical amplifier; the drive
    seen by the modulator is ``vpp * 10**(gain_db/20)``.
    """

    bit_rate: float = 25e9
    sample_rate: float = 100e9
    vpp: float | None = None
    gain_db: float = 26.0
    shaping_order: int = 5
    shaping_cutoff: float = 11.5e9
    prbs_order: int = 7

    def __post_init__(self):
        if self.bit_rate <= 0 or self.sample_rate <= 0:
            raise ValueError("bit_rate and sample_rate must be positive")
        if self.vpp is not None and self.vpp <= 0:
            raise ValueError("vpp must be positive")

    def symbol_rate(self, fmt: ModulationFormat) -> float:
        return self.bit_rate / fmt.bits_per_symbol

    def sps(self, fmt: ModulationFormat) -> int:
        ratio = self.sample_rate / self.symbol_rate(fmt)
        sps = int(round(ratio))
        if abs(ratio - sps) > 1e-9 or sps < 2:
            raise ValueError(
                f"sample rate {self.sample_rate:g} is not an integer multiple (>= 2) "
                f"of the {fmt.value} symbol rate {self.symbol_rate(fmt):g}"
            )
        return sps

    def swing(self, fmt: ModulationFormat) -> float:
        """Peak-to-peak drive voltage after the amplifier."""
        vpp = DEFAULT_VPP[fmt] if self.vpp is None else self.vpp
        return vpp * 10 ** (self.gain_db / 20)

    def shaping_filter(self) -> DigitalFilter:
        return design_filter("bessel-lowpass", self.shaping_order, self.shaping_cutoff, self.sample_rate)


@dataclass(frozen=True)
class MzmConfig:
    """Chirp-free MZM, power transfer cos^2(pi (v + bias) / (2 v_pi)).

    ``bias=None`` selects the rising-slope quadrature point ``-v_pi/2`` so that
    higher drive voltage gives higher optical power.
    """

    v_pi: float = 10.0
    bias: float | None = None
    cw_power: float = float(dbm_to_watts(16.0))
    insertion_loss_db: float = 4.0

    def __post_init__(self):
        if self.v_pi <= 0:
            raise ValueError("v_pi must be positive")
        if self.cw_power <= 0:
            raise ValueError("cw_power must be positive")

    @property
    def bias_voltage(self) -> float:
        return -self.v_pi / 2 if self.bias is None else self.bias


@dataclass(frozen=True)
class PilotToneConfig:
    frequency: float = 50e3
    target_depth_pct: float = 8.0
    enabled: bool = True

    def __post_init__(self):
        if self.target_depth_pct < 0:
            raise ValueError("pilot depth must be non-negative")
        if self.enabled:
            lo, hi = PILOT_BAND
            if not lo <= self.frequency <= hi:
                raise ValueError(f"pilot frequency {self.frequency:g} Hz outside {lo:g}-{hi:g} Hz")
        if self.target_depth_pct > MAX_PILOT_DEPTH_PCT:
            raise ValueError(f"pilot depth {self.target_depth_pct}% exceeds {MAX_PILOT_DEPTH_PCT}%")


def _as_bits(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bit sequence may contain only 0 and 1")
    return bits.astype(np.uint8)


def gray_encode_pam4(bits) -> np.ndarray:
    """Map (bit1, bit2) pairs to PAM4 symbols: 00->0, 10->1, 11->2, 01->3."""
    bits = _as_bits(bits)
    if bits.size % 2:
        raise ValueError("PAM4 needs an even number of bits")
    pairs = bits.reshape(-1, 2)
    return _GRAY_ENCODE[(pairs[:, 0] << 1) | pairs[:, 1]].astype(np.int64)


def gray_decode_pam4(symbols) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() > 3):
        raise ValueError("PAM4 symbols must be in 0..3")
    return _GRAY_DECODE[symbols].reshape(-1)


def duobinary_precode(bits) -> np.ndarray:
    """Differential precoder c[k] = b[k] ^ c[k-1] with c[-1] = 0."""
    bits = _as_bits(bits)
    return (np.cumsum(bits, dtype=np.int64) % 2).astype(np.uint8)


def delay_and_add(coded) -> np.ndarray:
    """Three-level duobinary symbols c[k] + c[k-1] (c[-1] = 0)."""
    c = np.asarray(coded, dtype=np.int64)
    prev = np.concatenate(([0], c[:-1]))
    return c + prev


def format_symbols(bits, fmt: ModulationFormat) -> np.ndarray:
    """Symbols the receiver has to decide on, in ascending level order."""
    fmt = ModulationFormat.parse(fmt)
    bits = _as_bits(bits)
    if fmt is ModulationFormat.PAM4:
        return gray_encode_pam4(bits)
    if fmt is ModulationFormat.DUOBINARY:
        return delay_and_add(duobinary_precode(bits))
    return bits.astype(np.int64)


def format_levels(fmt: ModulationFormat, swing: float) -> np.ndarray:
    """Drive levels per transmitted symbol, equispaced over ``swing``."""
    n = 4 if fmt is ModulationFormat.PAM4 else 2
    return np.linspace(-swing / 2, swing / 2, n)


def build_drive(bits, fmt: ModulationFormat, cfg: TxConfig) -> RealWaveform:
    """Amplified electrical drive waveform for ``bits`` in format ``fmt``."""
    fmt = ModulationFormat.parse(fmt)
    bits = _as_bits(bits)
    if bits.size == 0:
        raise ValueError("no bits to transmit")
    sps = cfg.sps(fmt)
    levels = format_levels(fmt, cfg.swing(fmt))
    if fmt is ModulationFormat.PAM4:
        tx_symbols = gray_encode_pam4(bits)
    elif fmt is ModulationFormat.DUOBINARY:
        tx_symbols = duobinary_precode(bits)
    else:
        tx_symbols = bits
    drive = upsample_hold(tx_symbols, levels, sps, cfg.sample_rate)
    if fmt is ModulationFormat.DUOBINARY:
        drive = apply_filter(cfg.shaping_filter(), drive)
    return drive


def mzm_modulate(drive: RealWaveform, mzm: MzmConfig, center_frequency: float = 193.1e12) -> ComplexEnvelope:
    v = drive.samples + mzm.bias_voltage
    segment = math.floor(mzm.bias_voltage / mzm.v_pi)
    lo, hi = v.min() / mzm.v_pi, v.max() / mzm.v_pi
    if lo < segment - 0.05 or hi > segment + 1.05:
        warnings.warn(
            f"MZM drive spans {lo:.2f}..{hi:.2f} V_pi, outside the monotonic slope "
            f"[{segment}, {segment + 1}] V_pi",
            MzmRegimeWarning,
            stacklevel=2,
        )
    field = math.sqrt(mzm.cw_power) * np.cos(np.pi * v / (2 * mzm.v_pi))
    field *= 10 ** (-mzm.insertion_loss_db / 20)
    return ComplexEnvelope(field.astype(complex), drive.sample_rate, center_frequency)


def pilot_envelope(n: int, sample_rate: float, frequency: float, amplitude: float, phase: float = 0.0) -> np.ndarray:
    t = np.arange(n) / sample_rate
    return 1.0 + amplitude * np.sin(2 * np.pi * frequency * t + phase)


def apply_pilot(
    env: ComplexEnvelope,
    pt: PilotToneConfig,
    amplitude: float,
    time_scale: float = 1.0,
    phase: float = 0.0,
) -> ComplexEnvelope:
    """Multiply optical power by ``1 + amplitude * sin(2 pi f t)``.

    ``time_scale`` multiplies the pilot frequency (fast scaled simulations).
    """
    if not 0 <= amplitude < 1:
        raise ValueError("pilot amplitude must satisfy 0 <= a < 1")
    if not pt.enabled or amplitude == 0:
        return env
    gain = np.sqrt(pilot_envelope(len(env), env.sample_rate, pt.frequency * time_scale, amplitude, phase))
    return ComplexEnvelope(env.samples * gain, env.sample_rate, env.center_frequency)
