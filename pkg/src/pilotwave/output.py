"""CSV and PGM writers. Bodies are deterministic; the timestamp lives in a comment."""
from __future__ import annotations

import csv
import datetime as _dt
import io
import math
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import BerCurve, EyeHistogram

BER_COLUMNS = ("power_dbm", "errors", "total_bits", "ber", "low_confidence")
PENALTY_COLUMNS = ("label", "target_neglog_ber", "penalty_db")
EYE_COLUMNS = ("time_bin", "amplitude_low", "amplitude_high", "count")


def header_lines(seed: int, config_sha256: str, extra: dict | None = None) -> list[str]:
    lines = [
        f"# pilotwave {__version__}",
        f"# config_sha256 {config_sha256}",
        f"# seed {seed}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {v}")
    lines.append(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _fmt_float(x: float, spec: str) -> str:
    if x is None or math.isnan(x):
        return "nan"
    text = format(x, spec)
    return text[1:] if text.startswith("-") and float(text) == 0 else text  # no "-0.0000"


def _write_csv(path: Path, header: list[str], columns, rows) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_ber_csv(path: Path, curve: BerCurve, header: list[str]) -> None:
    rows = [
        (
            _fmt_float(p.power_dbm, ".4f"),
            p.errors,
            p.total_bits,
            _fmt_float(p.ber, ".6e"),
            int(p.low_confidence),
        )
        for p in curve.points
    ]
    _write_csv(path, header, BER_COLUMNS, rows)


def write_penalty_csv(path: Path, rows: list[tuple[str, float, float]], header: list[str]) -> None:
    body = [(label, _fmt_float(t, ".3f"), _fmt_float(p, ".4f")) for label, t, p in rows]
    _write_csv(path, header, PENALTY_COLUMNS, body)


def write_eye_csv(path: Path, eye: EyeHistogram, header: list[str]) -> None:
    edges = eye.amplitude_edges
    rows = []
    for i, j in zip(*np.nonzero(eye.grid)):
        rows.append((int(i), _fmt_float(float(edges[j]), ".6e"), _fmt_float(float(edges[j + 1]), ".6e"),
                     int(eye.grid[i, j])))
    _write_csv(path, header, EYE_COLUMNS, rows)


def eye_image(eye: EyeHistogram) -> np.ndarray:
    """8-bit image, time along x, amplitude up, log-scaled counts."""
    counts = eye.grid.T[::-1].astype(float)
    top = counts.max()
    if top <= 0:
        return np.zeros(counts.shape, dtype=np.uint8)
    return np.round(255 * np.log1p(counts) / np.log1p(top)).astype(np.uint8)


def write_pgm(path: Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 4) -> np.ndarray:
    h = max(left.shape[0], right.shape[0])
    sep = np.full((h, gap), 128, dtype=np.uint8)
    return np.hstack([left, sep, right])


def csv_body(path: Path) -> str:
    """File content without ``#`` comment lines."""
    return "".join(line for line in Path(path).read_text().splitlines(keepends=True) if not line.startswith("#"))
