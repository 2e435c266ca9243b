"""Fast invariant checks behind ``pilotwave selftest``."""
from __future__ import annotations

import time

import numpy as np

from . import tx
from .channel import FiberConfig, fiber_propagate
from .metrics import measure_mod_depth
from .signals import ComplexEnvelope, RealWaveform, design_filter, prbs_generate


def _all_bitstrings(n: int) -> np.ndarray:
    return ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def check_gray_roundtrip():
    words = _all_bitstrings(12)
    for w in words:
        if not np.array_equal(tx.gray_decode_pam4(tx.gray_encode_pam4(w)), w):
            return False, f"round trip failed for {w.tolist()}"
    table = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
    for pair, sym in table.items():
        if int(tx.gray_encode_pam4(pair)[0]) != sym:
            return False, f"{pair} encodes to {int(tx.gray_encode_pam4(pair)[0])}, expected {sym}"
    return True, "4096 words, 00->0 10->1 11->2 01->3"


def check_gray_adjacency():
    for s in range(3):
        a, b = tx.gray_decode_pam4([s]), tx.gray_decode_pam4([s + 1])
        if int(np.sum(a != b)) != 1:
            return False, f"levels {s},{s + 1} differ in {int(np.sum(a != b))} bits"
    return True, "adjacent levels differ in one bit"


def check_duobinary_roundtrip():
    for w in _all_bitstrings(12):
        three = tx.delay_and_add(tx.duobinary_precode(w))
        if not np.array_equal(three % 2, w):
            return False, f"mod-2 decode failed for {w.tolist()}"
    return True, "4096 words"


def check_prbs():
    s = prbs_generate(7, 0x7F, 254)
    if int(s[:127].sum()) != 64 or not np.array_equal(s[:127], s[127:]):
        return False, "PRBS7 balance/period wrong"
    return True, "PRBS7 period 127 with 64 ones"


def check_filter_anchors():
    cases = [
        ("bessel-lowpass", 5, 11.5e9, 100e9),
        ("bessel-lowpass", 5, 11.5e9, 50e9),
        ("bessel-lowpass", 4, 28e9, 100e9),
        ("butterworth-highpass", 2, 280e3, 100e9),
    ]
    for kind, order, fc, fs in cases:
        f = design_filter(kind, order, fc, fs)
        mag = 20 * np.log10(abs(f.frequency_response(fc)[0]))
        if abs(mag + 3.0103) > 0.1:
            return False, f"{kind} at {fc:g} Hz: {mag:.3f} dB"
    return True, f"{len(cases)} designs within 0.1 dB of -3 dB"


def check_dispersion_unitarity():
    rng = np.random.default_rng(7)
    field = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
    env = ComplexEnvelope(field, 100e9)
    out = fiber_propagate(env, FiberConfig(length_km=20, attenuation_db_per_km=0.0))
    e_in, e_out = np.sum(env.power()), np.sum(out.power())
    rel = abs(e_out - e_in) / e_in
    return rel <= 1e-9, f"relative energy change {rel:.1e}"


def check_depth_closed_form():
    fs, f_pt = 100e6, 50e3
    t = np.arange(int(3 * fs / f_pt)) / fs
    msgs = []
    for a in (0.05, 0.08):
        trace = RealWaveform(1e-3 * (1 + a * np.sin(2 * np.pi * f_pt * t)), fs)
        d = measure_mod_depth(trace, f_pt).depth_pct
        msgs.append(f"{d:.3f}%")
        if abs(d - 100 * a) > 0.1:
            return False, f"a={a}: measured {d:.3f}%"
    return True, "depths " + ", ".join(msgs)


CHECKS = [
    ("pam4 gray round trip (12 bit)", check_gray_roundtrip),
    ("pam4 gray adjacency", check_gray_adjacency),
    ("duobinary precode/mod-2 (12 bit)", check_duobinary_roundtrip),
    ("prbs7 period and balance", check_prbs),
    ("filter -3 dB anchors", check_filter_anchors),
    ("dispersion energy conservation", check_dispersion_unitarity),
    ("modulation depth closed form", check_depth_closed_form),
]


def run_selftest(out=print) -> int:
    """Run every check, report one line each, return the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.2f} s)")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
