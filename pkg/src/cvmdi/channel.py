"""Per-arm channel: attenuation, excess noise, phase drift and propagation delay.

The envelope is classical here; vacuum noise is added by the relay detectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0

from . import kernels
from .transmitter import Waveform, carrier

FRACTIONAL_TAPS = 8
KAISER_BETA = 10.0


@dataclass(frozen=True)
class ChannelParams:
    transmittance: float
    excess_noise_inject: float = 0.0
    delay: float = 0.0
    linewidth: float = 0.0
    phase0: float = 0.0
    freq_offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.transmittance <= 1:
            raise ValueError("transmittance must be in (0, 1]")
        if self.excess_noise_inject < 0:
            raise ValueError("excess_noise_inject must be >= 0")
        if self.linewidth < 0:
            raise ValueError("linewidth must be >= 0")


def _cyclic_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n = len(x)
    h = np.zeros(n)
    np.add.at(h, (np.arange(len(taps)) - (len(taps) - 1) // 2) % n, taps)
    return np.fft.ifft(np.fft.fft(x) * np.fft.fft(h))


def apply_loss_excess(w: Waveform, p: ChannelParams, rng: np.random.Generator | None,
                      taps: np.ndarray | None = None, if_freq: float = 0.0) -> Waveform:
    """Scale by sqrt(T) and add Gaussian excess noise.

    With ``taps`` (the pulse filter) the noise is band-shaped around ``if_freq``
    and scaled so that, after the matched filter, each quadrature gains exactly
    ``excess_noise_inject``. Without taps the noise is white with that
    per-sample variance, which gives the same increase for any unit-energy
    receive filter.
    """
    out = np.sqrt(p.transmittance) * np.asarray(w.samples, dtype=np.complex128)
    if rng is not None and p.excess_noise_inject > 0:
        n = len(out)
        white = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        if taps is None:
            noise = np.sqrt(p.excess_noise_inject) * white
        else:
            rc = np.convolve(taps, taps)
            gain = np.sqrt(p.excess_noise_inject / np.sum(rc * rc))
            noise = gain * _cyclic_filter(white, taps) * carrier(n, if_freq, w.sample_rate)
        out = out + noise
    return w.with_samples(out)


def fractional_delay_taps(frac: float) -> np.ndarray:
    """Kaiser-windowed sinc taps for a delay of ``frac`` in [0, 1) samples, tap j at lag j - 3."""
    lags = np.arange(FRACTIONAL_TAPS) - (FRACTIONAL_TAPS // 2 - 1)
    t = lags - frac
    half = FRACTIONAL_TAPS / 2
    window = i0(KAISER_BETA * np.sqrt(np.clip(1 - (t / half) ** 2, 0, None))) / i0(KAISER_BETA)
    return np.sinc(t) * window


def apply_delay(w: Waveform, delay: float) -> Waveform:
    """Cyclic delay by a real number of samples."""
    n = len(w)
    if not abs(delay) < n / 2:
        raise ValueError(f"|delay| must be < {n / 2} samples, got {delay}")
    whole = math.floor(delay)
    frac = delay - whole
    x = np.roll(np.asarray(w.samples, dtype=np.complex128), whole)
    if frac > 1e-12:
        x = kernels.fir_cyclic(x, fractional_delay_taps(frac), FRACTIONAL_TAPS // 2 - 1)
    return w.with_samples(x)


def phase_trajectory(linewidth: float, n: int, rate: float, rng: np.random.Generator | None,
                     theta0: float = 0.0, freq_offset: float = 0.0) -> np.ndarray:
    """Wiener phase (radians per sample) with increment variance 2*pi*linewidth/rate."""
    if n <= 0:
        raise ValueError("n must be > 0")
    theta = np.full(n, float(theta0))
    if linewidth > 0 and rng is not None:
        steps = rng.standard_normal(n - 1) * np.sqrt(2 * np.pi * linewidth / rate)
        theta[1:] += np.cumsum(steps)
    if freq_offset:
        theta += 2 * np.pi * freq_offset / rate * np.arange(n)
    return theta


def apply_phase(w: Waveform, theta: np.ndarray) -> Waveform:
    return w.with_samples(np.asarray(w.samples) * np.exp(1j * theta))


def propagate(w: Waveform, p: ChannelParams, rng: np.random.Generator | None,
              taps: np.ndarray | None = None, if_freq: float = 0.0) -> Waveform:
    """Loss and excess noise, then phase drift, then delay."""
    out = apply_loss_excess(w, p, rng, taps=taps, if_freq=if_freq)
    theta = phase_trajectory(p.linewidth, len(out), w.sample_rate, rng, p.phase0, p.freq_offset)
    out = apply_phase(out, theta)
    return apply_delay(out, p.delay)
