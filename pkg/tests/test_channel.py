import numpy as np
import pytest

from cvmdi.channel import (ChannelParams, apply_delay, apply_loss_excess, apply_phase,
                           fractional_delay_taps, phase_trajectory, propagate)
from cvmdi.core import derive_stream
from cvmdi.recovery import lowpass, receive_taps, sample_symbols
from cvmdi.transmitter import Waveform, carrier, generate_symbols, modulate


def _wave(n=4096, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform(rng.standard_normal(n) + 1j * rng.standard_normal(n), 80e6)


def _bandlimited(n=8192, seed=0, frac=0.1):
    rng = np.random.default_rng(seed)
    spec = np.zeros(n, complex)
    k = int(frac * n)
    spec[:k] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    spec[-k:] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return Waveform(np.fft.ifft(spec), 80e6)


def test_params_validation():
    for kw in (dict(transmittance=0), dict(transmittance=1.1), dict(transmittance=1, excess_noise_inject=-1),
               dict(transmittance=1, linewidth=-1)):
        with pytest.raises(ValueError):
            ChannelParams(**kw)


def test_identity_channel():
    w = _wave()
    out = apply_loss_excess(w, ChannelParams(1.0), np.random.default_rng(0))
    assert np.array_equal(out.samples, w.samples)


def test_loss_scaling():
    w = _wave()
    out = apply_loss_excess(w, ChannelParams(0.631), None)
    assert np.allclose(out.samples, np.sqrt(0.631) * w.samples)
    assert np.sqrt(0.631) == pytest.approx(0.794, abs=5e-4)


def test_loss_composition():
    w = _wave()
    a = apply_loss_excess(apply_loss_excess(w, ChannelParams(0.5), None), ChannelParams(0.3), None)
    b = apply_loss_excess(w, ChannelParams(0.15), None)
    assert np.allclose(a.samples, b.samples, rtol=0, atol=1e-14)


@pytest.mark.parametrize("shaped", [True, False])
def test_excess_noise_symbol_variance(desk, shaped):
    cfg = desk.replace(symbols_per_frame=100_000, delays=(0.0, 0.0))
    zero = Waveform(np.zeros(cfg.frame_samples, complex), cfg.sample_rate)
    taps = receive_taps(cfg)
    out = apply_loss_excess(zero, ChannelParams(1.0, 0.05), derive_stream(3, "excess"),
                            taps=taps if shaped else None, if_freq=cfg.if_freq)
    z = lowpass(out.samples * carrier(len(out), -cfg.if_freq, cfg.sample_rate), cfg)
    sym = sample_symbols(z, 0, cfg)
    n = len(sym)
    for part in (sym.real, sym.imag):
        assert np.var(part) == pytest.approx(0.05, abs=4 * 0.05 * np.sqrt(2 / n))


def test_delay_zero_identity():
    w = _wave()
    assert np.array_equal(apply_delay(w, 0).samples, w.samples)


@pytest.mark.parametrize("d", [1, 17, 999, -250])
def test_integer_delay_peak(d):
    w = _wave()
    out = apply_delay(w, d)
    corr = np.abs(np.fft.ifft(np.fft.fft(out.samples) * np.conj(np.fft.fft(w.samples))))
    lag = int(np.argmax(corr))
    assert (lag if lag < len(w) // 2 else lag - len(w)) == d


def test_half_sample_delay_upsampled_peak():
    w = _bandlimited(4096, frac=0.2)
    out = apply_delay(w, 0.5)
    up = 16
    n = len(w)
    xc = np.fft.fft(out.samples) * np.conj(np.fft.fft(w.samples))
    pad = np.zeros(n * up, complex)
    pad[: n // 2] = xc[: n // 2]
    pad[-n // 2:] = xc[-n // 2:]
    corr = np.abs(np.fft.ifft(pad))
    lag = np.argmax(corr) / up
    assert lag == pytest.approx(0.5, abs=0.05)


def test_delay_composition_bandlimited():
    w = _bandlimited()
    a = apply_delay(apply_delay(w, 3.3), 2.45)
    b = apply_delay(w, 5.75)
    err = np.sum(np.abs(a.samples - b.samples) ** 2) / np.sum(np.abs(b.samples) ** 2)
    assert 10 * np.log10(err) < -60


def test_delay_range_rejected():
    with pytest.raises(ValueError):
        apply_delay(_wave(100), 50)


def test_fractional_taps():
    t = fractional_delay_taps(0.0)
    assert t[3] == pytest.approx(1.0) and np.allclose(np.delete(t, 3), 0, atol=1e-12)
    assert len(fractional_delay_taps(0.3)) == 8


def test_zero_linewidth_constant_phase():
    th = phase_trajectory(0.0, 1000, 80e6, np.random.default_rng(0), theta0=0.7)
    assert np.all(th == 0.7)


def test_wiener_variance_law():
    lw, rate, n = 1e4, 1e6, 400
    ends = np.array([phase_trajectory(lw, n, rate, derive_stream(k, "wiener"))[-1] for k in range(200)])
    expected = 2 * np.pi * lw * (n - 1) / rate
    # sample variance of 200 Gaussians: relative std ~ sqrt(2/199) = 0.1
    assert np.var(ends) == pytest.approx(expected, rel=0.35)


def test_phase_preserves_power():
    w = _wave()
    th = phase_trajectory(100.0, len(w), w.sample_rate, np.random.default_rng(1))
    assert np.allclose(np.abs(apply_phase(w, th).samples), np.abs(w.samples), rtol=0, atol=1e-12)


def test_frequency_offset_ramp():
    th = phase_trajectory(0.0, 5, 100.0, None, freq_offset=1.0)
    assert np.allclose(np.diff(th), 2 * np.pi / 100)


def test_propagate_deterministic(desk):
    cfg = desk.replace(symbols_per_frame=500)
    w = modulate(generate_symbols(500, 36, derive_stream(1, "s")), cfg)
    p = ChannelParams(0.63, 0.1, 37.5, 100.0, 0.2)
    a = propagate(w, p, derive_stream(1, "ch"))
    b = propagate(w, p, derive_stream(1, "ch"))
    assert np.array_equal(a.samples, b.samples)
