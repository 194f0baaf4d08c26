"""Receiver DSP: downconversion, low-pass, synchronization, matched filtering,
SNU normalization, phase recovery and displacement."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from . import kernels
from .core import SnuScale, SystemConfig, complex_cov
from .relay import CalibrationRecord, RelayRecord
from .transmitter import SymbolBlock, Waveform, carrier, design_rrc, shape

SYNC_THRESHOLD = 10.0
LOWPASS_ATTEN_DB = 60.0
PHASE_Z_MIN = 5.0


class SyncError(RuntimeError):
    pass


class StaleCalibrationError(ValueError):
    pass


class NoCorrelationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RecoveredSymbols:
    gamma: np.ndarray
    frame_index: int
    snu_scale_used: tuple[SnuScale, SnuScale] | None = None
    chain_id: str = ""

    @property
    def normalized(self) -> bool:
        return self.snu_scale_used is not None

    def __len__(self):
        return len(self.gamma)


@dataclass(frozen=True)
class SyncResult:
    delay_alice: int
    delay_bob: int
    peak_to_rms: dict = field(default_factory=dict)

    def delay(self, party: str) -> int:
        return self.delay_alice if party == "alice" else self.delay_bob


@dataclass(frozen=True)
class PhaseEstimate:
    theta: float
    objective_value: float
    z_score: float = float("inf")


# --- filters ------------------------------------------------------------------

@lru_cache(maxsize=16)
def _lowpass_taps(sample_rate: float, symbol_rate: float, rolloff: float) -> np.ndarray:
    nyq = sample_rate / 2
    edge = (1 + rolloff) * symbol_rate / 2
    width = min(symbol_rate, nyq - edge)
    numtaps, beta = signal.kaiserord(LOWPASS_ATTEN_DB, width / nyq)
    numtaps |= 1
    return signal.firwin(numtaps, edge + width / 2, window=("kaiser", beta), fs=sample_rate)


def lowpass_taps(cfg: SystemConfig) -> np.ndarray:
    """Linear-phase FIR: flat to (1+rolloff)*symbol_rate/2, >= 60 dB down one symbol rate above."""
    return _lowpass_taps(cfg.sample_rate, cfg.symbol_rate, cfg.rrc_rolloff)


@lru_cache(maxsize=16)
def _rrc_cached(rolloff, span, sps):
    return design_rrc(rolloff, span, sps)


def receive_taps(cfg: SystemConfig) -> np.ndarray:
    return _rrc_cached(cfg.rrc_rolloff, cfg.rrc_span, cfg.sps)


def chain_signature(cfg: SystemConfig) -> str:
    return (f"fs={cfg.sample_rate:g};rs={cfg.symbol_rate:g};if={cfg.if_freq:g};"
            f"rolloff={cfg.rrc_rolloff:g};span={cfg.rrc_span};lpf={len(lowpass_taps(cfg))}")


def lowpass(z: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    taps = lowpass_taps(cfg)
    n = len(z)
    h = np.zeros(n)
    np.add.at(h, (np.arange(len(taps)) - (len(taps) - 1) // 2) % n, taps)
    return np.fft.ifft(np.fft.fft(z) * np.fft.fft(h))


def downconvert_filter(r: RelayRecord, cfg: SystemConfig) -> Waveform:
    """Form x + i p, shift +IF to DC and low-pass filter (cyclic, zero phase)."""
    if not cfg.if_freq < r.sample_rate / 2:
        raise ValueError("if_freq must be below Nyquist")
    z = (np.asarray(r.x_waveform) + 1j * np.asarray(r.p_waveform))
    z = z * carrier(len(z), -cfg.if_freq, r.sample_rate)
    return Waveform(lowpass(z, cfg), r.sample_rate, f"relay/frame-{r.frame_index}/baseband")


def sample_symbols(z: np.ndarray, offset: int, cfg: SystemConfig, n: int | None = None) -> np.ndarray:
    """Matched filter evaluated at ``offset + k*sps``."""
    n = cfg.symbols_per_frame if n is None else n
    return kernels.filter_decimate(z, receive_taps(cfg), offset, cfg.sps, n)


# --- synchronization ------------------------------------------------------------

def baseband_reference(block: SymbolBlock, cfg: SystemConfig) -> np.ndarray:
    """A party's transmitted samples as they appear in the relay baseband (before delay)."""
    ref = shape(block.symbols, receive_taps(cfg), cfg.sps)
    return np.conj(ref) if block.party == "bob" else ref


def synchronize(tx_ref: dict, baseband: Waveform, threshold: float = SYNC_THRESHOLD) -> SyncResult:
    """Per-party lag maximizing |circular cross-correlation| against the relay baseband.

    Ties resolve to the smallest |lag|.
    """
    z = np.asarray(baseband.samples)
    n = len(z)
    zf = np.fft.fft(z)
    lags = np.fft.fftfreq(n, 1 / n).astype(int)
    found = {}
    ratios = {}
    for party in ("alice", "bob"):
        ref = np.asarray(getattr(tx_ref[party], "samples", tx_ref[party]))
        if len(ref) != n:
            raise ValueError(f"{party} reference length {len(ref)} != frame length {n}")
        corr = np.abs(np.fft.ifft(zf * np.conj(np.fft.fft(ref))))
        peak = corr.max()
        rms = np.sqrt(np.mean(corr ** 2))
        ratio = peak / rms if rms > 0 else 0.0
        ratios[party] = float(ratio)
        if not ratio >= threshold:
            raise SyncError(f"{party}: no correlation peak (peak/rms = {ratio:.2f} < {threshold})")
        best = lags[corr == peak]
        found[party] = int(min(best, key=lambda lag: (abs(lag), lag)))
    return SyncResult(found["alice"], found["bob"], ratios)


# --- symbols ----------------------------------------------------------------------

def demodulate_symbols(baseband: Waveform, sync: SyncResult, cfg: SystemConfig,
                       frame_index: int = 0) -> RecoveredSymbols:
    """Matched filter and sample at Alice's (relay-side) symbol instants."""
    need = cfg.symbols_per_frame * cfg.sps
    if len(baseband) < need:
        raise ValueError(f"frame has {len(baseband)} samples, need {need}")
    gamma = sample_symbols(np.asarray(baseband.samples), sync.delay_alice, cfg)
    return RecoveredSymbols(gamma, frame_index, None, chain_signature(cfg))


def align_reference(block: SymbolBlock, sync: SyncResult, cfg: SystemConfig) -> SymbolBlock:
    """Delay-compensate a party's transmitted samples onto the relay symbol grid.

    The reference goes through the same low-pass and matched filter as the
    relay output, so residual ISI and timing offsets are carried in the
    reference rather than appearing as noise.
    """
    ref = lowpass(baseband_reference(block, cfg), cfg)
    offset = sync.delay_alice - sync.delay(block.party)
    eff = sample_symbols(ref, offset, cfg, len(block))
    if block.party == "bob":
        eff = np.conj(eff)
    return block.with_symbols(eff)


def normalize_snu(sym: RecoveredSymbols, cal: CalibrationRecord) -> RecoveredSymbols:
    """Scale each quadrature by 1/sqrt(vacuum - electronic) variance."""
    if sym.normalized:
        raise ValueError("symbols are already normalized")
    if cal.chain_id and sym.chain_id and cal.chain_id != sym.chain_id:
        raise StaleCalibrationError(f"calibration chain {cal.chain_id!r} != data chain {sym.chain_id!r}")
    sx, sp = cal.scales
    g = sym.gamma.real / np.sqrt(sx.unit) + 1j * sym.gamma.imag / np.sqrt(sp.unit)
    return RecoveredSymbols(g, sym.frame_index, (sx, sp), sym.chain_id)


# --- phase recovery ---------------------------------------------------------------

def _wrap(theta: float) -> float:
    return float((theta + np.pi) % (2 * np.pi) - np.pi)


def _grid_argmax(s, g, step_deg=1.0):
    """Argmax of Re Cov(s e^{i theta}, g) over a degree grid."""
    grid = np.deg2rad(np.arange(-180.0, 180.0, step_deg))
    c = np.sum((s - s.mean()) * np.conj(g - g.mean()))
    return float(grid[np.argmax(np.real(np.exp(1j * grid) * c))])


def estimate_phase(party_block: SymbolBlock, gamma: RecoveredSymbols, conjugate: bool | None = None,
                   check: bool = False) -> PhaseEstimate:
    """Rotation theta maximizing Re Cov(s e^{i theta}, g), g = gamma or conj(gamma)."""
    s = np.asarray(party_block.symbols)
    g = np.asarray(gamma.gamma)
    if len(s) != len(g):
        raise ValueError("blocks are not aligned")
    if conjugate is None:
        conjugate = party_block.party == "bob"
    if conjugate:
        g = np.conj(g)
    c = complex_cov(s, g)
    stderr = np.sqrt(np.var(s) * np.var(g) / len(s))
    z = abs(c) / stderr if stderr > 0 else 0.0
    if not z > PHASE_Z_MIN:
        raise NoCorrelationError(f"|Cov| is {z:.2f} standard errors; no usable correlation")
    theta = _wrap(-np.angle(c))
    if check:
        step = 1.0
        grid_theta = _grid_argmax(s, g, step)
        if abs(_wrap(theta - grid_theta)) > np.deg2rad(step) + 1e-12:
            raise RuntimeError("closed-form phase disagrees with grid search")
    return PhaseEstimate(theta, abs(c), float(z))


def _remove(gamma: np.ndarray, s: np.ndarray) -> np.ndarray:
    """gamma minus its complex least-squares projection onto s."""
    return gamma - complex_cov(gamma, s) / np.var(s) * s


def estimate_phases(alpha: SymbolBlock, beta: SymbolBlock, gamma: RecoveredSymbols,
                    check: bool = False) -> dict[str, PhaseEstimate]:
    """Per-party rotations, each estimated after cancelling the other party's term.

    The other party's modulation is the dominant noise in a single-party
    estimate. A first pass on the raw gamma fixes Alice's rotation; Bob's is
    then estimated on gamma with Alice's term removed, and Alice's is refined
    with Bob's term removed.
    """
    g = np.asarray(gamma.gamma)
    a = np.asarray(alpha.symbols)
    b_conj = np.conj(np.asarray(beta.symbols))
    first = estimate_phase(alpha, gamma, check=check)
    est_b = estimate_phase(beta, RecoveredSymbols(_remove(g, a * np.exp(1j * first.theta)), gamma.frame_index),
                           check=check)
    b_rot = b_conj * np.exp(-1j * est_b.theta)
    est_a = estimate_phase(alpha, RecoveredSymbols(_remove(g, b_rot), gamma.frame_index), check=check)
    return {"alice": est_a, "bob": est_b}


def rotate(block: SymbolBlock, theta: float) -> SymbolBlock:
    return block.with_symbols(np.asarray(block.symbols) * np.exp(1j * theta))


def branch_scores(block: SymbolBlock, gamma: RecoveredSymbols) -> tuple[float, float]:
    """Correlation z-scores of ``block`` against gamma and conj(gamma)."""
    s = np.asarray(block.symbols)
    out = []
    for g in (gamma.gamma, np.conj(gamma.gamma)):
        stderr = np.sqrt(np.var(s) * np.var(g) / len(s))
        out.append(abs(complex_cov(s, g)) / stderr)
    return out[0], out[1]


def apply_displacement(block: SymbolBlock, gamma: RecoveredSymbols, gain="auto",
                       conjugate: bool | None = None) -> np.ndarray:
    """B = gamma + g * s' with s' = conj(beta) for Bob or alpha for Alice.

    ``gain="auto"`` uses the least-squares coefficient that removes s' from gamma.
    """
    if conjugate is None:
        conjugate = block.party == "bob"
    s = np.asarray(block.symbols)
    s = np.conj(s) if conjugate else s
    g_arr = np.asarray(gamma.gamma)
    if isinstance(gain, str):
        if gain != "auto":
            raise ValueError("gain must be a number or 'auto'")
        var = np.var(s)
        if var == 0:
            raise ValueError("cannot fit displacement gain to a constant block; pass a fixed gain")
        gain = -complex_cov(g_arr, s).real / var
    return g_arr + gain * s
