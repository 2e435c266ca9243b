"""Command-line front end: ``pilotwave sweep|eye|depth|selftest``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .experiments import CalibrationError, Scenario, measure_scenario_depth, resolve_amplitude, run_ber_sweep, run_capture
from .metrics import BerCurve, UnbracketableError, eye_histogram, penalty_at
from .output import (
    eye_image,
    header_lines,
    side_by_side,
    write_ber_csv,
    write_eye_csv,
    write_penalty_csv,
    write_pgm,
)
from .rx import SyncError
from .selftest import run_selftest

log = logging.getLogger("pilotwave")

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2
DEPTH_TOLERANCE_PCT = 0.5


@dataclass
class RunManifest:
    config: RunConfig
    out_dir: Path
    version: str = __version__
    written: list[Path] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config.seed

    def header(self, **extra) -> list[str]:
        return header_lines(self.seed, self.config.sha256, extra)


def resolve_config_path(name: str) -> Path:
    """A filesystem path, or the name of a shipped preset (``paper_b2b``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name if p.suffix == ".toml" else p.name + ".toml"
    preset = resources.files("pilotwave") / "presets" / stem
    if preset.is_file():
        return Path(str(preset))
    return p


def preset_names() -> list[str]:
    return sorted(f.name[:-5] for f in (resources.files("pilotwave") / "presets").iterdir() if f.name.endswith(".toml"))


def _manifest(args) -> RunManifest:
    cfg = load_config(resolve_config_path(args.config))
    out = Path(getattr(args, "out", None) or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return RunManifest(cfg, out)


def _pairs(scenarios: list[Scenario]) -> list[tuple[Scenario, Scenario]]:
    """(pilot off, pilot on) scenario pairs sharing format and fiber."""
    off = {(s.fmt, s.fiber.length_km): s for s in scenarios if not s.pilot.enabled}
    return [(off[(s.fmt, s.fiber.length_km)], s) for s in scenarios
            if s.pilot.enabled and (s.fmt, s.fiber.length_km) in off]


def cmd_sweep(args) -> int:
    man = _manifest(args)
    curves: dict[str, BerCurve] = {}
    n_points = n_failed = 0
    for sc in man.config.scenarios:
        log.info("sweep %s: %d points x %d bits", sc.label, len(sc.powers_dbm), sc.n_bits)
        curve = run_ber_sweep(sc, jobs=args.jobs)
        curves[sc.label] = curve
        n_points += len(curve.points)
        n_failed += sum(p.failed for p in curve.points)
        for p in curve.points:
            if p.failed:
                log.warning("%s at %.2f dBm: %s", sc.label, p.power_dbm, p.note)
        path = man.out_dir / f"ber_{sc.label}.csv"
        write_ber_csv(path, curve, man.header(scenario=sc.label))
        man.written.append(path)

    rows = []
    for ref, pt in _pairs(man.config.scenarios):
        label = f"{pt.fmt.value}_{pt.fiber.length_km:g}km"
        for t in man.config.targets:
            try:
                pen = penalty_at(curves[ref.label], curves[pt.label], t)
            except UnbracketableError as exc:
                log.info("penalty %s at %.2f: %s", label, t, exc)
                pen = float("nan")
            rows.append((label, t, pen))
    if rows:
        path = man.out_dir / "penalty.csv"
        write_penalty_csv(path, rows, man.header())
        man.written.append(path)
    for path in man.written:
        print(path)
    if n_points and n_failed == n_points:
        print("error: synchronisation failed at every sweep point", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def cmd_eye(args) -> int:
    man = _manifest(args)
    bins = (args.time_bins, args.amp_bins)
    captures = {}
    for sc in man.config.scenarios:
        captures[sc.label] = (sc, run_capture(sc, 0, args.power))

    # pilot on/off pairs share one amplitude axis so the images compare directly
    ranges = {}
    for ref, pt in _pairs(man.config.scenarios):
        sig = [captures[s.label][1].signal.samples for s in (ref, pt)]
        lo, hi = min(s.min() for s in sig), max(s.max() for s in sig)
        pad = 0.05 * (hi - lo)
        ranges[ref.label] = ranges[pt.label] = (float(lo - pad), float(hi + pad))

    images = {}
    for label, (sc, cap) in captures.items():
        eye = eye_histogram(cap.signal, sc.tx.symbol_rate(sc.fmt), cap.sync, bins=bins,
                            amplitude_range=ranges.get(label))
        images[label] = eye_image(eye)
        hdr = man.header(scenario=label, power_dbm=f"{args.power:g}")
        for path in (man.out_dir / f"eye_{label}.pgm", man.out_dir / f"eye_{label}.csv"):
            if path.suffix == ".pgm":
                write_pgm(path, images[label])
            else:
                write_eye_csv(path, eye, hdr)
            man.written.append(path)
    for ref, pt in _pairs(man.config.scenarios):
        path = man.out_dir / f"eye_{pt.fmt.value}_{pt.fiber.length_km:g}km_pair.pgm"
        write_pgm(path, side_by_side(images[ref.label], images[pt.label]))
        man.written.append(path)
    for path in man.written:
        print(path)
    return EXIT_OK


def cmd_depth(args) -> int:
    man = _manifest(args)
    seen = set()
    status = EXIT_OK
    enabled = [s for s in man.config.scenarios if s.pilot.enabled]
    if not enabled:
        raise ConfigError("no scenario has the pilot enabled", man.config.path)
    for sc in enabled:
        if sc.fmt in seen:  # depth is measured back-to-back, so fiber length does not matter
            continue
        seen.add(sc.fmt)
        target = sc.pilot.target_depth_pct
        try:
            a = resolve_amplitude(sc)
        except CalibrationError as exc:
            print(f"{sc.fmt.value}: calibration failed: {exc}", file=sys.stderr)
            status = EXIT_SIM
            continue
        depth = measure_scenario_depth(sc, a).depth_pct
        ok = abs(depth - target) <= DEPTH_TOLERANCE_PCT
        print(f"{sc.fmt.value}: amplitude={a:.5f} depth={depth:.1f}% target={target:g}% {'ok' if ok else 'OFF TARGET'}")
        if not ok:
            status = EXIT_SIM
    return status


def cmd_selftest(args) -> int:
    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilotwave", description=__doc__)
    ap.add_argument("--version", action="version", version=f"pilotwave {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="progress on stderr (-vv for debug)")
    sub = ap.add_subparsers(dest="command", required=True)

    help_cfg = "TOML config path or preset name (" + ", ".join(preset_names()) + ")"
    p = sub.add_parser("sweep", help="BER versus received power for every scenario")
    p.add_argument("config", help=help_cfg)
    p.add_argument("--jobs", type=int, default=1, help="worker processes per curve")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eye", help="eye-diagram histograms at one received power")
    p.add_argument("config", help=help_cfg)
    p.add_argument("--power", type=float, required=True, help="received power in dBm")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--time-bins", type=int, default=128)
    p.add_argument("--amp-bins", type=int, default=128)
    p.set_defaults(func=cmd_eye)

    p = sub.add_parser("depth", help="calibrate the pilot amplitude and report the modulation depth")
    p.add_argument("config", help=help_cfg)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("selftest", help="fast invariant checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc.format()}", file=sys.stderr)
        return EXIT_CONFIG
    except SyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ValueError as exc:  # e.g. a sweep power above what the link can deliver
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
