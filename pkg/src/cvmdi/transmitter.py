"""Gaussian coherent-state symbols and the shaped, IF-upconverted transmit envelope."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import SystemConfig

PARTIES = ("alice", "bob")


class QuantizerOverflowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    party: str
    frame_index: int
    symbols: np.ndarray
    variance_snu: float

    def __post_init__(self):
        if self.party not in PARTIES:
            raise ValueError(f"unknown party {self.party!r}")
        if not np.all(np.isfinite(self.symbols)):
            raise ValueError("symbols must be finite")

    def __len__(self):
        return len(self.symbols)

    def with_symbols(self, symbols) -> "SymbolBlock":
        return SymbolBlock(self.party, self.frame_index, np.asarray(symbols), self.variance_snu)


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: float
    origin: str = ""

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("empty waveform")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")

    def __len__(self):
        return len(self.samples)

    def with_samples(self, samples, origin=None) -> "Waveform":
        return Waveform(np.asarray(samples), self.sample_rate,
                        self.origin if origin is None else origin)


def generate_symbols(n: int, variance: float, rng: np.random.Generator,
                     party: str = "alice", frame_index: int = 0) -> SymbolBlock:
    """Draw ``n`` amplitudes with i.i.d. zero-mean Gaussian quadratures of variance ``variance``."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if variance < 0:
        raise ValueError("variance must be >= 0")
    sigma = np.sqrt(variance)
    q = rng.standard_normal(n)
    p = rng.standard_normal(n)
    return SymbolBlock(party, frame_index, sigma * (q + 1j * p), float(variance))


def design_rrc(rolloff: float, span: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, ``span * sps + 1`` long, symbol period = ``sps`` samples."""
    if not 0 <= rolloff <= 1:
        raise ValueError("rolloff must be in [0, 1]")
    if span < 8 or int(span) != span:
        raise ValueError("span must be an integer >= 8")
    if sps < 2 or int(sps) != sps:
        raise ValueError("sps must be an integer >= 2")
    m = span * sps
    # integer offsets keep the taps exactly symmetric
    k = np.arange(m + 1) - m // 2 if m % 2 == 0 else np.arange(m + 1) - m / 2
    t = np.abs(k) / sps
    h = np.empty_like(t)
    r = rolloff
    at_zero = t == 0
    at_pole = np.zeros_like(at_zero) if r == 0 else np.isclose(4 * r * t, 1.0, rtol=0, atol=1e-12)
    rest = ~(at_zero | at_pole)
    h[at_zero] = 1 - r + 4 * r / np.pi
    if r > 0:
        h[at_pole] = r / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * r))
                                       + (1 - 2 / np.pi) * np.cos(np.pi / (4 * r)))
    x = t[rest]
    h[rest] = ((np.sin(np.pi * x * (1 - r)) + 4 * r * x * np.cos(np.pi * x * (1 + r)))
               / (np.pi * x * (1 - (4 * r * x) ** 2)))
    return h / np.sqrt(np.sum(h * h))


def if_sign(party: str) -> int:
    """Sideband used by each party.

    The relay reads P on the sum port, so Bob's field reaches the detected
    signal conjugated; he modulates on the mirrored sideband so both land on +IF.
    """
    return 1 if party == "alice" else -1


def carrier(n: int, freq: float, sample_rate: float) -> np.ndarray:
    return np.exp(2j * np.pi * freq / sample_rate * np.arange(n))


def shape(symbols, taps, sps) -> np.ndarray:
    """Cyclic pulse shaping; symbol ``k`` is centred on sample ``k * sps``."""
    return kernels.upsample_filter(symbols, taps, sps)


def quantize(samples: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Mid-tread quantizer on I and Q; raises instead of clipping."""
    peak = max(np.max(np.abs(samples.real)), np.max(np.abs(samples.imag)))
    if peak > full_scale:
        raise QuantizerOverflowError(f"peak {peak:.4g} exceeds DAC full scale {full_scale:.4g}")
    step = 2 * full_scale / 2 ** bits
    return step * (np.round(samples.real / step) + 1j * np.round(samples.imag / step))


def modulate(block: SymbolBlock, cfg: SystemConfig, taps: np.ndarray | None = None) -> Waveform:
    """Shape a frame and move it to the party's IF sideband."""
    sps = cfg.sps
    if taps is None:
        taps = design_rrc(cfg.rrc_rolloff, cfg.rrc_span, sps)
    env = shape(block.symbols, taps, sps)
    env = env * carrier(len(env), if_sign(block.party) * cfg.if_freq, cfg.sample_rate)
    if cfg.dac_bits:
        fs = cfg.dac_full_scale or 6.0 * np.sqrt(max(block.variance_snu, 1e-12) / sps)
        env = quantize(env, cfg.dac_bits, fs)
    return Waveform(env, cfg.sample_rate, f"{block.party}/frame-{block.frame_index}")
