"""End-to-end captures, pilot calibration and BER sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import elementary_charge
from scipy.optimize import brentq
from scipy.special import erfcinv

from .channel import FiberConfig, average_power_dbm, fiber_propagate, voa_attenuate
from .metrics import BerCurve, BerPoint, DepthMeasurement, measure_mod_depth
from .rx import (
    ReceiverConfig,
    SyncError,
    SyncResult,
    count_ber,
    decide,
    decode_symbols,
    estimate_thresholds,
    photodetect,
    pilot_highpass,
    rx_filter,
    synchronize,
)
from .signals import ComplexEnvelope, RealWaveform, apply_filter, design_filter, prbs_generate
from .tx import (
    ModulationFormat,
    MzmConfig,
    PilotToneConfig,
    TxConfig,
    apply_pilot,
    build_drive,
    format_symbols,
    mzm_modulate,
)

log = logging.getLogger(__name__)

# frequency scale of the fast mode: pilot 50 kHz -> 5 MHz, 280 kHz filters -> 28 MHz
SCALED_TIME_FACTOR = 100.0


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    fmt: ModulationFormat = ModulationFormat.NRZ
    tx: TxConfig = field(default_factory=TxConfig)
    mzm: MzmConfig = field(default_factory=MzmConfig)
    pilot: PilotToneConfig = field(default_factory=lambda: PilotToneConfig(enabled=False))
    fiber: FiberConfig = field(default_factory=FiberConfig)
    rx: ReceiverConfig = field(default_factory=ReceiverConfig)
    n_bits: int = 200_000
    master_seed: int = 1
    powers_dbm: tuple[float, ...] = ()
    scaled: bool = True
    center_frequency: float = 193.1e12
    pilot_amplitude: float | None = None  # None: calibrate to the target depth

    def __post_init__(self):
        object.__setattr__(self, "fmt", ModulationFormat.parse(self.fmt))
        object.__setattr__(self, "powers_dbm", tuple(float(p) for p in self.powers_dbm))
        if self.n_bits < 1000:
            raise ValueError("n_bits must be >= 1000")
        if self.fmt is ModulationFormat.PAM4 and self.n_bits % 2:
            raise ValueError("PAM4 needs an even n_bits")
        if self.pilot.enabled:
            need = 2 * self.tx.bit_rate / self.pilot_frequency
            if self.n_bits < need:
                raise ValueError(f"n_bits={self.n_bits} covers fewer than 2 pilot periods (need {need:.0f})")
        self.tx.sps(self.fmt)

    @property
    def time_scale(self) -> float:
        return SCALED_TIME_FACTOR if self.scaled else 1.0

    @property
    def pilot_frequency(self) -> float:
        return self.pilot.frequency * self.time_scale

    @property
    def depth_lowpass_cutoff(self) -> float:
        return 280e3 * self.time_scale

    @property
    def sps(self) -> int:
        return self.tx.sps(self.fmt)

    @property
    def label(self) -> str:
        pilot = "pt" if self.pilot.enabled else "nopt"
        return f"{self.fmt.value}_{pilot}_{self.fiber.length_km:g}km"

    def with_pilot(self, enabled: bool) -> "Scenario":
        return replace(self, pilot=replace(self.pilot, enabled=enabled))


@dataclass
class Capture:
    """Everything one simulated acquisition produced."""

    bits: np.ndarray
    symbols: np.ndarray
    drive: RealWaveform
    envelope: ComplexEnvelope
    received_power_dbm: float
    signal: RealWaveform
    sync: SyncResult | None = None
    thresholds: np.ndarray | None = None
    decided: np.ndarray | None = None
    errors: int = 0
    total_bits: int = 0
    discard_symbols: int = 0

    @property
    def ber(self) -> float:
        return self.errors / self.total_bits if self.total_bits else float("nan")


def capture_seeds(master_seed: int, index: int, prbs_order: int) -> tuple[int, np.random.Generator]:
    """PRBS start state and noise generator for one capture."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(index)])
    pattern_ss, noise_ss = ss.spawn(2)
    prbs_seed = int(np.random.default_rng(pattern_ss).integers(1, 1 << prbs_order))
    return prbs_seed, np.random.default_rng(noise_ss)


def transmit(scenario: Scenario, bits: np.ndarray, amplitude: float) -> tuple[RealWaveform, ComplexEnvelope]:
    """Drive waveform and optical envelope at the fiber output (before the VOA)."""
    drive = build_drive(bits, scenario.fmt, scenario.tx)
    env = mzm_modulate(drive, scenario.mzm, scenario.center_frequency)
    if scenario.pilot.enabled and amplitude > 0:
        env = apply_pilot(env, scenario.pilot, amplitude, time_scale=scenario.time_scale)
    env = fiber_propagate(env, scenario.fiber)
    return drive, env


def discard_symbols(scenario: Scenario) -> int:
    """Leading symbols excluded from decisions and BER (filter transients)."""
    fs = scenario.tx.sample_rate
    settle = 0
    if scenario.rx.bandwidth < fs / 2:
        lp = design_filter("bessel-lowpass", scenario.rx.lowpass_order, scenario.rx.bandwidth, fs)
        settle = lp.settling_length()
    if scenario.fmt is ModulationFormat.DUOBINARY:
        settle += scenario.tx.shaping_filter().settling_length()
    if scenario.rx.remove_pilot:
        hp = pilot_highpass(scenario.rx, fs, scenario.time_scale)
        settle = max(settle, hp.settling_length(), int(round(fs / scenario.pilot_frequency)))
    return math.ceil(settle / scenario.sps) + 16


def resolve_amplitude(scenario: Scenario) -> float:
    if not scenario.pilot.enabled:
        return 0.0
    if scenario.pilot_amplitude is not None:
        return scenario.pilot_amplitude
    return calibrate_pilot_depth(scenario, scenario.pilot.target_depth_pct)


def run_capture(
    scenario: Scenario,
    index: int,
    power_dbm: float | None = None,
    amplitude: float | None = None,
    noise: bool | None = None,
) -> Capture:
    """Simulate one acquisition: PRBS segment -> tx -> fiber -> VOA -> rx -> BER."""
    if amplitude is None:
        amplitude = resolve_amplitude(scenario)
    rx_cfg = scenario.rx if noise is None else replace(scenario.rx, noise=noise)
    prbs_seed, rng = capture_seeds(scenario.master_seed, index, scenario.tx.prbs_order)
    bits = prbs_generate(scenario.tx.prbs_order, prbs_seed, scenario.n_bits)
    symbols = format_symbols(bits, scenario.fmt)
    drive, env = transmit(scenario, bits, amplitude)
    if power_dbm is not None:
        atten = average_power_dbm(env) - power_dbm
        if atten < -1e-9:
            raise ValueError(
                f"target {power_dbm:.2f} dBm exceeds the available {average_power_dbm(env):.2f} dBm"
            )
        env = voa_attenuate(env, max(atten, 0.0))
    received = average_power_dbm(env)
    current = photodetect(env, rx_cfg, rng)
    del env
    filtered = rx_filter(current, rx_cfg, time_scale=scenario.time_scale)
    del current
    cap = Capture(bits, symbols, drive, None, received, filtered)
    decide_capture(scenario, cap)
    return cap


def decide_capture(scenario: Scenario, cap: Capture) -> None:
    fmt = scenario.fmt
    skip = discard_symbols(scenario)
    sync = synchronize_capture(scenario, cap, skip)
    k0 = sync.first_symbol
    samples = sync.aligned_symbol_samples
    known = cap.symbols[k0 : k0 + samples.size]
    thresholds = estimate_thresholds(samples, known, fmt.n_levels)
    decided = decide(samples, thresholds)
    rx_bits = decode_symbols(decided, fmt)
    bps = fmt.bits_per_symbol
    tx_bits = cap.bits[k0 * bps : (k0 + samples.size) * bps]
    result = count_ber(tx_bits, rx_bits)
    cap.sync, cap.thresholds, cap.decided = sync, thresholds, decided
    cap.errors, cap.total_bits, cap.discard_symbols = result.errors, result.total, skip


def synchronize_capture(scenario: Scenario, cap: Capture, skip: int) -> SyncResult:
    return synchronize(
        cap.signal,
        cap.drive,
        scenario.sps,
        training_symbols=cap.symbols,
        n_levels=scenario.fmt.n_levels,
        skip_symbols=skip,
    )


def depth_capture_bits(scenario: Scenario) -> int:
    """Bits needed so the power trace spans 3 pilot periods (one is discarded)."""
    n = math.ceil(3.2 * scenario.tx.bit_rate / scenario.pilot_frequency)
    return n + (n % 2)


def measure_scenario_depth(scenario: Scenario, amplitude: float, index: int = 0) -> DepthMeasurement:
    """Noise-free back-to-back optical power trace through the depth measurement."""
    b2b = replace(scenario, fiber=replace(scenario.fiber, length_km=0.0), pilot=replace(scenario.pilot, enabled=True))
    prbs_seed, _ = capture_seeds(scenario.master_seed, index, scenario.tx.prbs_order)
    bits = prbs_generate(scenario.tx.prbs_order, prbs_seed, depth_capture_bits(scenario))
    _, env = transmit(b2b, bits, amplitude)
    return measure_mod_depth(env.power_trace(), scenario.pilot_frequency, scenario.depth_lowpass_cutoff)


def calibrate_pilot_depth(scenario: Scenario, target_depth_pct: float, tol: float = 0.1, max_iter: int = 10) -> float:
    """Pilot amplitude whose measured back-to-back depth equals the target.

    Secant iteration on the measured depth, starting from the closed-form
    guess a = target/100 of the multiplicative pilot.
    """
    if not 0 < target_depth_pct <= 50:
        if target_depth_pct == 0:
            return 0.0
        raise ValueError("target depth must be in (0, 50] percent")
    a0 = target_depth_pct / 100
    f0 = measure_scenario_depth(scenario, a0).depth_pct - target_depth_pct
    if abs(f0) <= tol:
        return a0
    a1 = min(a0 * 1.05, 0.99)
    for _ in range(max_iter - 1):
        f1 = measure_scenario_depth(scenario, a1).depth_pct - target_depth_pct
        log.debug("pilot calibration a=%.5f error=%.4f", a1, f1)
        if abs(f1) <= tol:
            return a1
        if f1 == f0:
            break
        a0, a1, f0 = a1, min(max(a1 - f1 * (a1 - a0) / (f1 - f0), 0.0), 0.99), f1
    raise CalibrationError(f"pilot depth did not converge to {target_depth_pct}% in {max_iter} iterations")


def _sweep_point(args) -> BerPoint:
    scenario, index, power, amplitude = args
    try:
        cap = run_capture(scenario, index, power, amplitude)
    except SyncError as exc:
        return BerPoint(power, 0, 0, float("nan"), True, failed=True, note=str(exc))
    return BerPoint(cap.received_power_dbm, cap.errors, cap.total_bits, cap.ber, cap.errors < 100)


def run_ber_sweep(scenario: Scenario, jobs: int = 1) -> BerCurve:
    """One BER point per requested received power.

    Point ``i`` always uses capture index ``i`` so paired scenarios (pilot on
    and off) see the same pattern segment and noise realisation.
    """
    if not scenario.powers_dbm:
        raise ValueError("scenario has no sweep powers")
    amplitude = resolve_amplitude(scenario)
    tasks = [(scenario, i, p, amplitude) for i, p in enumerate(scenario.powers_dbm)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(t) for t in tasks]
    return BerCurve(scenario.label, points)


def q_from_ber(ber: float) -> float:
    return math.sqrt(2) * erfcinv(2 * ber)


def calibrate_thermal_noise(
    power_dbm: float = -4.0,
    target_ber: float = 1e-9,
    scenario: Scenario | None = None,
) -> float:
    """Thermal noise density giving NRZ back-to-back ``target_ber`` at ``power_dbm``.

    Level means and shot-noise variances come from a noiseless capture; the
    Gaussian Q = (mu1 - mu0) / (sigma0 + sigma1) is solved for the thermal part.
    """
    if scenario is None:
        scenario = Scenario(fmt=ModulationFormat.NRZ, n_bits=20_000)
    scenario = replace(scenario, fmt=ModulationFormat.NRZ, pilot=replace(scenario.pilot, enabled=False),
                       fiber=FiberConfig(length_km=0.0))
    cap = run_capture(scenario, 0, power_dbm, amplitude=0.0, noise=False)
    s = cap.sync.aligned_symbol_samples
    known = cap.symbols[cap.sync.first_symbol : cap.sync.first_symbol + s.size]
    mu0, mu1 = s[known == 0].mean(), s[known == 1].mean()
    fs = scenario.tx.sample_rate
    lp = design_filter("bessel-lowpass", scenario.rx.lowpass_order, scenario.rx.bandwidth, fs)
    impulse = np.zeros(1 << 14)
    impulse[0] = 1.0
    h = apply_filter(lp, RealWaveform(impulse, fs)).samples
    gain = float(np.sum(h**2)) * fs / 2  # output variance per unit density^2
    shot = 2 * elementary_charge * fs / 2 * float(np.sum(h**2)) if scenario.rx.shot_noise else 0.0
    q = q_from_ber(target_ber)

    def excess(density):
        s0 = math.sqrt(density**2 * gain + shot * max(mu0, 0.0))
        s1 = math.sqrt(density**2 * gain + shot * max(mu1, 0.0))
        return (mu1 - mu0) / (s0 + s1) - q

    return brentq(excess, 1e-15, 1e-6)
