"""File formats: binary waveforms with text sidecars, CSV tables and JSON reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .relay import RelayRecord
from .transmitter import Waveform

FRAMES_CSV_HEADER = ("frame", "xi_x", "xi_p", "tau_a", "tau_b")
SWEEP_CSV_HEADER = ("loss_db", "rate_per_use", "rate_per_second", "i_ab", "chi")
SYMBOLS_CSV_HEADER = ("frame", "index", "re", "im")
_LE = np.dtype("<f8")


def _write_sidecar(path: Path, fields: dict) -> None:
    path.write_text("".join(f"{k} = {v}\n" for k, v in fields.items()), encoding="utf-8")


def _read_sidecar(path: Path) -> dict:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_waveform(w: Waveform, path) -> Path:
    """Interleaved (re, im) little-endian float64 to ``path`` plus ``path.txt``."""
    path = Path(path)
    s = np.asarray(w.samples, dtype=np.complex128)
    np.column_stack([s.real, s.imag]).astype(_LE).tofile(path)
    _write_sidecar(path.with_name(path.name + ".txt"),
                   dict(format="complex-interleaved-f64le", samples=len(s),
                        sample_rate=repr(float(w.sample_rate)), origin=w.origin))
    return path


def read_waveform(path) -> Waveform:
    path = Path(path)
    meta = _read_sidecar(path.with_name(path.name + ".txt"))
    raw = np.fromfile(path, dtype=_LE).reshape(-1, 2)
    return Waveform(raw[:, 0] + 1j * raw[:, 1], float(meta["sample_rate"]), meta.get("origin", ""))


def write_relay_record(r: RelayRecord, path) -> Path:
    """Columns (x, p) as little-endian float64 plus a text sidecar."""
    path = Path(path)
    np.column_stack([r.x_waveform, r.p_waveform]).astype(_LE).tofile(path)
    _write_sidecar(path.with_name(path.name + ".txt"),
                   dict(format="xp-interleaved-f64le", samples=len(r),
                        sample_rate=repr(float(r.sample_rate)), frame_index=r.frame_index))
    return path


def read_relay_record(path) -> RelayRecord:
    path = Path(path)
    meta = _read_sidecar(path.with_name(path.name + ".txt"))
    raw = np.fromfile(path, dtype=_LE).reshape(-1, 2)
    return RelayRecord(int(meta["frame_index"]), raw[:, 0].copy(), raw[:, 1].copy(),
                       float(meta["sample_rate"]))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_symbols_csv(path, frames) -> Path:
    """``frames``: iterable of (frame_index, complex array)."""
    def rows():
        for k, sym in frames:
            for i, z in enumerate(np.asarray(sym)):
                yield k, i, z.real, z.imag
    return write_csv(path, SYMBOLS_CSV_HEADER, rows())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path
