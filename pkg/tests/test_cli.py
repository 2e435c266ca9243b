import re
import textwrap

import numpy as np
import pytest

from pilotwave import tx
from pilotwave.cli import main, resolve_config_path
from pilotwave.config import SEED_ENV, ConfigError, load_config
from pilotwave.output import BER_COLUMNS, PENALTY_COLUMNS, csv_body, read_pgm

QUIET = """
[tx]
formats = ["nrz", "pam4", "duobinary"]
[pilot]
enabled = [false, true]
amplitude = 0.08
[rx]
noise = false
[sweep]
seed = 7
n_bits = 40000
powers_dbm = [-6.0, -2.0]
"""

NOISY = """
[tx]
formats = ["nrz", "pam4"]
[pilot]
enabled = [false, true]
[sweep]
seed = 3
n_bits = 100000
targets = [2.0]
[sweep.nrz]
powers_dbm = [-11.0, -10.0, -9.0]
[sweep.pam4]
powers_dbm = [-3.0, -2.0, -1.0]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


# ---- sweep ---------------------------------------------------------------------------

def test_sweep_noise_disabled_writes_zero_ber(tmp_path):
    cfg = write(tmp_path, QUIET)
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "o")]) == 0
    files = sorted(p.name for p in (tmp_path / "o").glob("ber_*.csv"))
    assert files == [f"ber_{f}_{p}_0km.csv" for f in ("duobinary", "nrz", "pam4") for p in ("nopt", "pt")]
    for f in files:
        rows = csv_body(tmp_path / "o" / f).splitlines()[1:]
        assert len(rows) == 2
        assert all(r.split(",")[1] == "0" and float(r.split(",")[3]) == 0.0 for r in rows)


def test_csv_golden_header(tmp_path):
    cfg = write(tmp_path, NOISY)
    assert main(["sweep", str(cfg), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "ber_nrz_pt_0km.csv").read_text().splitlines()
    comments = [line for line in text if line.startswith("#")]
    assert comments[0].startswith("# pilotwave ")
    assert re.fullmatch(r"# config_sha256 [0-9a-f]{64}", comments[1])
    assert comments[2] == "# seed 3"
    assert sum(line.startswith("# generated ") for line in comments) == 1
    assert text[len(comments)] == "power_dbm,errors,total_bits,ber,low_confidence"
    assert ",".join(BER_COLUMNS) == "power_dbm,errors,total_bits,ber,low_confidence"
    pen = (tmp_path / "penalty.csv").read_text().splitlines()
    assert [line for line in pen if not line.startswith("#")][0] == "label,target_neglog_ber,penalty_db"
    assert PENALTY_COLUMNS[1:] == ("target_neglog_ber", "penalty_db")


def test_sweep_bodies_are_byte_identical(tmp_path):
    cfg = write(tmp_path, NOISY)
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "penalty.csv" in names
    for n in names:
        assert csv_body(tmp_path / "a" / n) == csv_body(tmp_path / "b" / n)


def test_seed_env_overrides_config(tmp_path, monkeypatch):
    cfg = write(tmp_path, NOISY)
    main(["sweep", str(cfg), "--out", str(tmp_path / "a")])
    monkeypatch.setenv(SEED_ENV, "99")
    assert load_config(cfg).seed == 99
    main(["sweep", str(cfg), "--out", str(tmp_path / "b")])
    assert "# seed 99" in (tmp_path / "b" / "ber_nrz_nopt_0km.csv").read_text()
    assert csv_body(tmp_path / "a" / "ber_nrz_nopt_0km.csv") != csv_body(tmp_path / "b" / "ber_nrz_nopt_0km.csv")


def test_seed_env_must_be_integer(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV, "abc")
    assert main(["sweep", str(write(tmp_path, QUIET)), "--out", str(tmp_path)]) == 1
    assert SEED_ENV in capsys.readouterr().err


def test_malformed_config_has_line_number(tmp_path, capsys):
    cfg = write(tmp_path, "[tx]\nformats = [\"nrz\"]\n\n[sweep]\nn_bits = = 3\n")
    assert main(["sweep", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert re.search(rf"{re.escape(str(cfg))}:5: ", err)


@pytest.mark.parametrize("text,line", [
    ("[tx]\nformats = [\"nrz\"]\nbogus = 1\n", 3),
    ("[tx]\nformats = [\"qam\"]\n", 2),
    ("[sweep]\nseed = 1\nn_bits = \"many\"\n", 3),
    ("[rx]\nnoise = true\n[fiber]\nlength_km = -2\n", 4),
    ("[pilot]\nenabled = true\ntarget_depth_pct = 12.0\n", 3),
    ("[pilot]\nenabled = [true, 1]\n", 2),
    ("[sweep]\npowers_dbm = [0.0]\n[sweep.qpsk]\npowers_dbm = [1.0]\n", 3),
    ("[nonsense]\nx = 1\n", 1),
])
def test_config_errors_point_at_line(tmp_path, capsys, text, line):
    cfg = write(tmp_path, text)
    assert main(["sweep", str(cfg), "--out", str(tmp_path)]) == 1
    assert f"{cfg}:{line}:" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["sweep", str(tmp_path / "nope.toml")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_unreachable_power_is_config_error(tmp_path):
    cfg = write(tmp_path, "[sweep]\nn_bits = 2000\npowers_dbm = [40.0]\n[pilot]\nenabled = false\n")
    assert main(["sweep", str(cfg), "--out", str(tmp_path)]) == 1


def test_sync_loss_everywhere_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, """
        [pilot]
        enabled = false
        [rx]
        thermal_noise_density = 1e-6
        [sweep]
        n_bits = 20000
        powers_dbm = [-25.0, -24.0]
    """)
    assert main(["sweep", str(cfg), "--out", str(tmp_path)]) == 2
    assert "every sweep point" in capsys.readouterr().err


# ---- eye -------------------------------------------------------------------------------

def test_eye_images(tmp_path):
    cfg = write(tmp_path, QUIET)
    assert main(["eye", str(cfg), "--power", "-3", "--out", str(tmp_path)]) == 0
    img = read_pgm(tmp_path / "eye_nrz_nopt_0km.pgm")
    assert (tmp_path / "eye_nrz_nopt_0km.pgm").read_bytes().startswith(b"P5\n128 128\n255\n")
    col = img[:, img.shape[1] // 2]
    runs = np.flatnonzero(np.diff(np.r_[0, col > 0, 0]))
    assert len(runs) // 2 == 2
    pam = read_pgm(tmp_path / "eye_pam4_nopt_0km.pgm")
    col = pam[:, pam.shape[1] // 2]
    assert len(np.flatnonzero(np.diff(np.r_[0, col > 0, 0]))) // 2 == 4
    pair = read_pgm(tmp_path / "eye_pam4_0km_pair.pgm")
    assert pair.shape == (128, 2 * 128 + 4)
    assert "count" in (tmp_path / "eye_pam4_pt_0km.csv").read_text()


# ---- depth -------------------------------------------------------------------------------

def test_depth_reports_target(tmp_path, capsys):
    cfg = write(tmp_path, "[tx]\nformats = [\"nrz\", \"pam4\"]\n[pilot]\nenabled = true\ntarget_depth_pct = 8.0\n")
    assert main(["depth", str(cfg)]) == 0
    out = capsys.readouterr().out
    for fmt in ("nrz", "pam4"):
        m = re.search(rf"{fmt}: amplitude=([\d.]+) depth=([\d.]+)%", out)
        assert m and abs(float(m.group(2)) - 8.0) <= 0.5


def test_depth_five_percent(tmp_path, capsys):
    cfg = write(tmp_path, "[tx]\nformats = [\"duobinary\"]\n[pilot]\nenabled = true\ntarget_depth_pct = 5.0\n")
    assert main(["depth", str(cfg)]) == 0
    depth = float(re.search(r"depth=([\d.]+)%", capsys.readouterr().out).group(1))
    assert 4.5 <= depth <= 5.5


def test_depth_zero_target_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "[pilot]\nenabled = true\ntarget_depth_pct = 0.0\n")
    assert main(["depth", str(cfg)]) == 1
    assert ":3:" in capsys.readouterr().err


def test_depth_without_pilot_is_config_error(tmp_path):
    assert main(["depth", str(write(tmp_path, "[pilot]\nenabled = false\n"))]) == 1


# ---- selftest ------------------------------------------------------------------------------

def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("PASS") for line in out) >= 7
    assert not any(line.startswith("FAIL") for line in out)


def test_selftest_catches_corrupted_gray_table(monkeypatch, capsys):
    monkeypatch.setattr(tx, "_GRAY_ENCODE", np.array([0, 1, 3, 2], dtype=np.int8))
    assert main(["selftest"]) > 0
    assert "FAIL  pam4 gray" in capsys.readouterr().out


# ---- presets ---------------------------------------------------------------------------------

def test_presets_resolve_and_parse():
    b2b = load_config(resolve_config_path("paper_b2b"))
    assert sorted(s.label for s in b2b.scenarios) == sorted(
        f"{f}_{p}_0km" for f in ("nrz", "pam4", "duobinary") for p in ("nopt", "pt"))
    assert all(s.n_bits >= 2_000_000 and s.scaled and s.powers_dbm for s in b2b.scenarios)
    km20 = load_config(resolve_config_path("paper_20km_pam4.toml"))
    assert [s.label for s in km20.scenarios] == ["pam4_nopt_20km", "pam4_pt_20km"]


def test_config_error_format():
    assert ConfigError("bad", "x.toml", 4).format() == "x.toml:4: bad"
