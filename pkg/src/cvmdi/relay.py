"""Untrusted relay: balanced beamsplitter followed by X/P dual homodyne detection.

Port convention: X is read on the difference port and P on the sum port, so at
the symbol level ``gamma ~ (alpha_r - conj(beta_r)) / sqrt(2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SnuScale, SystemConfig, derive_stream
from .transmitter import Waveform


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RelayRecord:
    frame_index: int
    x_waveform: np.ndarray
    p_waveform: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if len(self.x_waveform) != len(self.p_waveform):
            raise ValueError("x and p waveforms differ in length")

    def __len__(self):
        return len(self.x_waveform)


@dataclass(frozen=True)
class CalibrationRecord:
    vacuum_x_var: float
    vacuum_p_var: float
    elec_x_var: float
    elec_p_var: float
    chain_id: str = ""
    n_symbols: int = 0

    def __post_init__(self):
        if not (self.vacuum_x_var > self.elec_x_var and self.vacuum_p_var > self.elec_p_var):
            raise CalibrationError("vacuum variance must exceed electronic variance in both quadratures")

    @property
    def scales(self) -> tuple[SnuScale, SnuScale]:
        return (SnuScale(self.vacuum_x_var, self.elec_x_var),
                SnuScale(self.vacuum_p_var, self.elec_p_var))

    def to_dict(self) -> dict:
        return dict(vacuum_x_var=self.vacuum_x_var, vacuum_p_var=self.vacuum_p_var,
                    elec_x_var=self.elec_x_var, elec_p_var=self.elec_p_var,
                    chain_id=self.chain_id, n_symbols=self.n_symbols)


def bsm_mix(a: Waveform, b: Waveform) -> tuple[Waveform, Waveform]:
    """Balanced beamsplitter: c = (a - b)/sqrt(2), d = (a + b)/sqrt(2)."""
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise ValueError("inputs must share length and sample rate")
    sa = np.asarray(a.samples, dtype=np.complex128)
    sb = np.asarray(b.samples, dtype=np.complex128)
    s = 1 / np.sqrt(2)
    return (Waveform(s * (sa - sb), a.sample_rate, "relay/difference"),
            Waveform(s * (sa + sb), a.sample_rate, "relay/sum"))


def dual_homodyne(c: Waveform, d: Waveform, eta: float, shot_psd: float, elec_psd: float,
                  rng: np.random.Generator | None, lo_on: bool = True,
                  frame_index: int = 0) -> RelayRecord:
    """Read X of ``c`` and P of ``d``.

    The detector gain is sqrt(shot_psd) ADC units per SNU^1/2, so a unit
    coherent amplitude and one shot-noise standard deviation have the same
    size. ``rng=None`` gives the noiseless response.
    """
    n = len(c)
    if len(d) != n:
        raise ValueError("c and d differ in length")
    if lo_on:
        gain = np.sqrt(shot_psd * eta)
        x = gain * np.real(c.samples)
        p = gain * np.imag(d.samples)
    else:
        x = np.zeros(n)
        p = np.zeros(n)
    if rng is not None:
        if lo_on:
            x = x + np.sqrt(shot_psd) * rng.standard_normal(n)
            p = p + np.sqrt(shot_psd) * rng.standard_normal(n)
        if elec_psd > 0:
            x = x + np.sqrt(elec_psd) * rng.standard_normal(n)
            p = p + np.sqrt(elec_psd) * rng.standard_normal(n)
    return RelayRecord(frame_index, np.asarray(x, float), np.asarray(p, float), c.sample_rate)


def dark_record(cfg: SystemConfig, rng, lo_on: bool, frame_index: int = 0) -> RelayRecord:
    n = cfg.frame_samples
    zero = Waveform(np.zeros(n, dtype=np.complex128), cfg.sample_rate, "dark")
    return dual_homodyne(zero, zero, cfg.eta, cfg.shot_psd, cfg.elec_noise * cfg.shot_psd,
                         rng, lo_on=lo_on, frame_index=frame_index)


def acquire_calibration(cfg: SystemConfig, rng: np.random.Generator | None = None,
                        frames: int | None = None) -> CalibrationRecord:
    """Shot-noise calibration: dark inputs with LO on, then LO off.

    Variances are taken on symbols from the same DSP chain used for data.
    """
    from .recovery import chain_signature, downconvert_filter, sample_symbols

    frames = frames or cfg.calibration_frames
    vac = []
    elec = []
    for k in range(frames):
        r_on = rng if rng is not None else derive_stream(cfg.master_seed, f"calibration/vacuum-{k}")
        r_off = rng if rng is not None else derive_stream(cfg.master_seed, f"calibration/electronic-{k}")
        for lo_on, r, acc in ((True, r_on, vac), (False, r_off, elec)):
            z = downconvert_filter(dark_record(cfg, r, lo_on, k), cfg)
            acc.append(sample_symbols(z.samples, 0, cfg))
    vac = np.concatenate(vac)
    elec = np.concatenate(elec)
    return CalibrationRecord(
        vacuum_x_var=float(np.var(vac.real)), vacuum_p_var=float(np.var(vac.imag)),
        elec_x_var=float(np.var(elec.real)), elec_p_var=float(np.var(elec.imag)),
        chain_id=chain_signature(cfg), n_symbols=len(vac))
