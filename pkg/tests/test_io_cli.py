import json
import subprocess
import sys

import numpy as np
import pytest

from cvmdi import io
from cvmdi.cli import main, parse_grid
from cvmdi.core import dump_config, load_config
from cvmdi.relay import RelayRecord
from cvmdi.transmitter import Waveform


def test_waveform_roundtrip(tmp_path):
    w = Waveform(np.array([1 + 2j, -3.5 + 0.25j]), 80e6, "alice/frame-0")
    io.write_waveform(w, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    assert raw[:8] == np.float64(1.0).astype("<f8").tobytes()
    back = io.read_waveform(tmp_path / "w.bin")
    assert np.array_equal(back.samples, w.samples)
    assert back.sample_rate == w.sample_rate and back.origin == w.origin
    assert "sample_rate" in (tmp_path / "w.bin.txt").read_text()


def test_relay_record_roundtrip(tmp_path):
    r = RelayRecord(4, np.array([1.0, 2.0]), np.array([-1.0, 0.5]), 1e9)
    io.write_relay_record(r, tmp_path / "r.bin")
    back = io.read_relay_record(tmp_path / "r.bin")
    assert back.frame_index == 4 and np.array_equal(back.p_waveform, r.p_waveform)


def test_symbols_csv(tmp_path):
    io.write_symbols_csv(tmp_path / "s.csv", [(0, np.array([1 + 2j, 3 - 1j]))])
    header, rows = io.read_csv(tmp_path / "s.csv")
    assert header == ["frame", "index", "re", "im"]
    assert rows[1] == ["0", "1", "3.0", "-1.0"]
    assert (tmp_path / "s.csv").read_bytes().count(b"\r\n") == 3


def test_json_non_finite(tmp_path):
    text = io.dumps_json({"a": float("inf"), "b": np.float64(1.5), "c": np.int64(2)})
    assert json.loads(text) == {"a": "inf", "b": 1.5, "c": 2}


def test_parse_grid():
    assert parse_grid("0:6:0.5") == [i * 0.5 for i in range(13)]
    assert parse_grid("2") == [2.0]
    for bad in ("a:b:c", "0:1:0", "3:1:1", "0:1"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def _small_cfg(tmp_path, **kw):
    cfg = load_config(profile="desk", symbols_per_frame=4000, frames=2, calibration_frames=2, **kw)
    p = tmp_path / "small.cfg"
    p.write_text(dump_config(cfg))
    return p


def test_run_outputs_byte_identical(tmp_path):
    cfg = _small_cfg(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5"]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    rep = json.loads(a)
    assert rep["seed"] == 5 and rep["config"]["master_seed"] == 5
    assert len(rep["frames"]) == 2
    header, rows = io.read_csv(tmp_path / "a" / "frames.csv")
    assert header == ["frame", "xi_x", "xi_p", "tau_a", "tau_b"] and len(rows) == 2
    assert main(["run", str(cfg), "--out", str(tmp_path / "c"), "--seed", "6"]) == 0
    assert (tmp_path / "c" / "report.json").read_bytes() != a


def test_missing_key_exit(tmp_path, capsys):
    text = "".join(line + "\n" for line in dump_config(load_config(profile="desk")).splitlines()
                   if not line.startswith("v_alice"))
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) != 0
    assert "v_alice" in capsys.readouterr().err
    assert not (tmp_path / "o" / "report.json").exists()


def test_stage_failure_exit(tmp_path, capsys):
    cfg = _small_cfg(tmp_path, v_alice=0.0)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "stage 'sync'" in err or "stage 'phase'" in err
    assert not (tmp_path / "o" / "report.json").exists()


def test_sweep_monotone_and_header(tmp_path):
    assert main(["sweep", "--profile", "paper", "--grid", "0:6:0.5", "--out", str(tmp_path)]) == 0
    header, rows = io.read_csv(tmp_path / "sweep.csv")
    assert header == ["loss_db", "rate_per_use", "rate_per_second", "i_ab", "chi"]
    rates = [float(r[1]) for r in rows]
    assert len(rates) == 13 and all(b <= a for a, b in zip(rates, rates[1:]))


def test_sweep_unknown_param(tmp_path, capsys):
    assert main(["sweep", "--param", "flux_capacitor", "--out", str(tmp_path)]) == 2
    assert "flux_capacitor" in capsys.readouterr().err


def test_sweep_single_point_matches_run(tmp_path):
    cfg = _small_cfg(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert main(["sweep", str(cfg), "--grid", "2", "--simulate", "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    proto = next(r for r in rep["key_rate"]["reports"]
                 if r["backend"] == "conditional-cm" and r["direction"] == rep["key_rate"]["protocol_direction"])
    _, rows = io.read_csv(tmp_path / "s" / "sweep.csv")
    assert float(rows[0][1]) == proto["rate_per_use"]


def test_calibrate_command(tmp_path):
    cfg = _small_cfg(tmp_path)
    assert main(["calibrate", str(cfg), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "calibration.json").read_text())
    assert doc["calibration"]["vacuum_x_var"] > doc["calibration"]["elec_x_var"]


def test_keyrate_command(capsys):
    assert main(["keyrate", "--backend", "conditional-cm", "--direction", "bob-infers"]) == 0
    doc = json.loads(capsys.readouterr().out)
    (r,) = doc["reports"]
    assert r["rate_per_second"] == pytest.approx(r["rate_per_use"] * 5e6)


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cvmdi.cli", "keyrate", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert len(json.loads((tmp_path / "keyrate.json").read_text())["reports"]) == 4
