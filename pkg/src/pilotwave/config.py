"""TOML run configuration -> Scenario objects."""
from __future__ import annotations

import hashlib
import itertools
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import FiberConfig
from .experiments import Scenario
from .rx import DEFAULT_THERMAL_NOISE_DENSITY, ReceiverConfig
from .signals import dbm_to_watts
from .tx import ModulationFormat, MzmConfig, PilotToneConfig, TxConfig

SEED_ENV = "PILOTWAVE_SEED"

_SECTIONS = {
    "tx": {
        "formats", "bit_rate", "sample_rate", "gain_db", "shaping_order", "shaping_cutoff",
        "prbs_order", "vpp", "v_pi", "bias", "cw_power_dbm", "insertion_loss_db", "center_frequency",
    },
    "pilot": {"enabled", "frequency", "target_depth_pct", "amplitude"},
    "fiber": {"length_km", "attenuation_db_per_km", "dispersion_ps_nm_km"},
    "rx": {
        "responsivity", "thermal_noise_density", "shot_noise", "noise", "bandwidth", "lowpass_order",
        "pt_highpass_cutoff", "highpass_order", "remove_pilot",
    },
    "sweep": {"seed", "n_bits", "scaled", "powers_dbm", "targets"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(self.format())

    def format(self) -> str:
        where = self.path or "<config>"
        if self.line is not None:
            where += f":{self.line}"
        return f"{where}: {self.message}"


@dataclass
class RunConfig:
    """A parsed config file: the scenario grid plus sweep settings."""

    path: str
    sha256: str
    seed: int
    scenarios: list[Scenario]
    targets: tuple[float, ...] = (3.0,)
    pilot_states: tuple[bool, ...] = (False, True)
    extra: dict = field(default_factory=dict)


def _locate(text: str, section: str | None, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the section header)."""
    current = None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    for n, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return n
    return None


class _Reader:
    def __init__(self, data: dict, text: str, path: str):
        self.data, self.text, self.path = data, text, path

    def fail(self, msg: str, section: str | None = None, key: str | None = None):
        raise ConfigError(msg, self.path, _locate(self.text, section, key) if section else None)

    def table(self, section: str) -> dict:
        t = self.data.get(section, {})
        if not isinstance(t, dict):
            self.fail(f"[{section}] must be a table", section)
        return t

    def get(self, section: str, key: str, kind, default, table: dict | None = None, where: str | None = None):
        t = self.table(section) if table is None else table
        if key not in t:
            return default
        v = t[key]
        loc = where or section
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(f"{key} must be a number, got {v!r}", loc, key)
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(f"{key} must be an integer, got {v!r}", loc, key)
            return v
        if kind is bool:
            if not isinstance(v, bool):
                self.fail(f"{key} must be true or false, got {v!r}", loc, key)
            return v
        return v


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_config(path: str | os.PathLike, seed_override: int | None = None) -> RunConfig:
    path = str(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", path, int(m.group(1)) if m else None) from None
    return build_run_config(data, text, path, hashlib.sha256(raw).hexdigest(), seed_override)


def build_run_config(data: dict, text: str, path: str, sha256: str, seed_override: int | None = None) -> RunConfig:
    r = _Reader(data, text, path)
    for section, table in data.items():
        if section not in _SECTIONS:
            r.fail(f"unknown section [{section}]", section)
        for key, value in table.items():
            if key in _SECTIONS[section]:
                continue
            if section == "sweep" and isinstance(value, dict):
                if key not in {f.value for f in ModulationFormat}:
                    r.fail(f"unknown table [sweep.{key}]", f"sweep.{key}")
                continue  # per-format overrides, checked below
            r.fail(f"unknown key {key!r} in [{section}]", section, key)

    # transmitter / modulator
    fmts = []
    for f in _as_list(r.table("tx").get("formats", ["nrz"])):
        try:
            fmts.append(ModulationFormat.parse(f))
        except ValueError as exc:
            r.fail(str(exc), "tx", "formats")
    vpp_cfg = r.table("tx").get("vpp")
    try:
        tx_base = TxConfig(
            bit_rate=r.get("tx", "bit_rate", float, 25e9),
            sample_rate=r.get("tx", "sample_rate", float, 100e9),
            gain_db=r.get("tx", "gain_db", float, 26.0),
            shaping_order=r.get("tx", "shaping_order", int, 5),
            shaping_cutoff=r.get("tx", "shaping_cutoff", float, 11.5e9),
            prbs_order=r.get("tx", "prbs_order", int, 7),
        )
        mzm = MzmConfig(
            v_pi=r.get("tx", "v_pi", float, 10.0),
            bias=r.get("tx", "bias", float, None),
            cw_power=float(dbm_to_watts(r.get("tx", "cw_power_dbm", float, 16.0))),
            insertion_loss_db=r.get("tx", "insertion_loss_db", float, 4.0),
        )
    except ValueError as exc:
        r.fail(str(exc), "tx")
    if tx_base.prbs_order not in (7, 15, 31):
        r.fail("prbs_order must be 7, 15 or 31", "tx", "prbs_order")
    center = r.get("tx", "center_frequency", float, 193.1e12)

    # pilot
    states = _as_list(r.table("pilot").get("enabled", [False, True]))
    if not states or any(not isinstance(s, bool) for s in states):
        r.fail("enabled must be a boolean or a list of booleans", "pilot", "enabled")
    depth = r.get("pilot", "target_depth_pct", float, 8.0)
    freq = r.get("pilot", "frequency", float, 50e3)
    amplitude = r.get("pilot", "amplitude", float, None)
    if any(states) and not 0 < depth <= 8.0:
        r.fail(f"target_depth_pct must be in (0, 8] when the pilot is enabled, got {depth:g}", "pilot", "target_depth_pct")
    try:
        PilotToneConfig(freq, depth, any(states))
    except ValueError as exc:
        r.fail(str(exc), "pilot", "frequency")

    # fiber
    lengths = _as_list(r.table("fiber").get("length_km", 0.0))
    fibers = []
    for L in lengths:
        if isinstance(L, bool) or not isinstance(L, (int, float)) or L < 0:
            r.fail(f"length_km entries must be non-negative numbers, got {L!r}", "fiber", "length_km")
        try:
            fibers.append(FiberConfig(
                length_km=float(L),
                attenuation_db_per_km=r.get("fiber", "attenuation_db_per_km", float, 0.2),
                dispersion_ps_nm_km=r.get("fiber", "dispersion_ps_nm_km", float, 17.0),
            ))
        except ValueError as exc:
            r.fail(str(exc), "fiber")

    # receiver
    try:
        rx = ReceiverConfig(
            responsivity=r.get("rx", "responsivity", float, 0.8),
            thermal_noise_density=r.get("rx", "thermal_noise_density", float, DEFAULT_THERMAL_NOISE_DENSITY),
            shot_noise=r.get("rx", "shot_noise", bool, True),
            noise=r.get("rx", "noise", bool, True),
            bandwidth=r.get("rx", "bandwidth", float, 28e9),
            lowpass_order=r.get("rx", "lowpass_order", int, 4),
            pt_highpass_cutoff=r.get("rx", "pt_highpass_cutoff", float, 280e3),
            highpass_order=r.get("rx", "highpass_order", int, 2),
            remove_pilot=r.get("rx", "remove_pilot", bool, False),
        )
    except ValueError as exc:
        r.fail(str(exc), "rx")

    # sweep
    seed = r.get("sweep", "seed", int, 1)
    env_seed = os.environ.get(SEED_ENV)
    if seed_override is not None:
        seed = seed_override
    elif env_seed not in (None, ""):
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer", path) from None
    n_bits = r.get("sweep", "n_bits", int, 200_000)
    scaled = r.get("sweep", "scaled", bool, True)
    targets = tuple(float(t) for t in _as_list(r.table("sweep").get("targets", [3.0])))
    default_powers = r.table("sweep").get("powers_dbm", [])

    scenarios = []
    for fmt, fiber, enabled in itertools.product(fmts, fibers, states):
        override = r.table("sweep").get(fmt.value, {})
        if not isinstance(override, dict):
            r.fail(f"[sweep.{fmt.value}] must be a table", "sweep", fmt.value)
        for key in override:
            if key not in ("powers_dbm", "n_bits"):
                r.fail(f"unknown key {key!r} in [sweep.{fmt.value}]", f"sweep.{fmt.value}", key)
        powers = override.get("powers_dbm", default_powers)
        bits = override.get("n_bits", n_bits)
        if not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in _as_list(powers)):
            r.fail("powers_dbm must be a list of numbers", "sweep", "powers_dbm")
        vpp = None
        if isinstance(vpp_cfg, dict):
            vpp = vpp_cfg.get(fmt.value)
        elif vpp_cfg is not None:
            vpp = vpp_cfg
        try:
            tx = TxConfig(
                bit_rate=tx_base.bit_rate, sample_rate=tx_base.sample_rate, vpp=vpp, gain_db=tx_base.gain_db,
                shaping_order=tx_base.shaping_order, shaping_cutoff=tx_base.shaping_cutoff,
                prbs_order=tx_base.prbs_order,
            )
            scenarios.append(Scenario(
                fmt=fmt, tx=tx, mzm=mzm, pilot=PilotToneConfig(freq, depth, enabled), fiber=fiber, rx=rx,
                n_bits=int(bits), master_seed=seed, powers_dbm=tuple(_as_list(powers)), scaled=scaled,
                center_frequency=center, pilot_amplitude=amplitude,
            ))
        except ValueError as exc:
            r.fail(f"{fmt.value}: {exc}", "sweep", "n_bits")
    return RunConfig(path, sha256, seed, scenarios, targets, tuple(states))
