"""Simulator of a 25 Gbit/s direct-detection link with pilot-tone envelope modulation."""

__version__ = "0.1.0"

from .channel import FiberConfig, average_power_dbm, fiber_propagate, voa_attenuate
from .experiments import Scenario, calibrate_pilot_depth, run_ber_sweep, run_capture
from .metrics import (
    BerCurve,
    BerPoint,
    DepthMeasurement,
    EyeHistogram,
    eye_histogram,
    measure_mod_depth,
    penalty_at,
)
from .rx import ReceiverConfig, count_ber, decide, duobinary_decode, estimate_thresholds, photodetect, rx_filter, synchronize
from .signals import (
    ComplexEnvelope,
    DigitalFilter,
    RealWaveform,
    apply_filter,
    dbm_watts_convert,
    design_filter,
    prbs_generate,
    upsample_hold,
)
from .tx import (
    ModulationFormat,
    MzmConfig,
    PilotToneConfig,
    TxConfig,
    apply_pilot,
    build_drive,
    duobinary_precode,
    gray_decode_pam4,
    gray_encode_pam4,
    mzm_modulate,
)
