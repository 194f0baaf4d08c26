"""Pure numpy versions of the cyclic FIR kernels.

All filters are circular over the frame: output index ``n`` sees input
``x[(n + center - j) % len(x)]`` through tap ``j``.
"""

import numpy as np


def _wrapped_response(taps, center, length):
    h = np.zeros(length)
    np.add.at(h, (np.arange(len(taps)) - center) % length, taps)
    return np.fft.fft(h)


def upsample_filter(symbols, taps, sps):
    symbols = np.asarray(symbols, dtype=np.complex128)
    length = len(symbols) * sps
    up = np.zeros(length, dtype=np.complex128)
    up[::sps] = symbols
    return np.fft.ifft(np.fft.fft(up) * _wrapped_response(taps, (len(taps) - 1) // 2, length))


def filter_decimate(x, taps, offset, sps, n_out):
    x = np.asarray(x, dtype=np.complex128)
    full = np.fft.ifft(np.fft.fft(x) * _wrapped_response(taps, (len(taps) - 1) // 2, len(x)))
    return full[(offset + sps * np.arange(n_out)) % len(x)]


def fir_cyclic(x, taps, center):
    x = np.asarray(x, dtype=np.complex128)
    out = np.zeros_like(x)
    for j, h in enumerate(taps):
        out += h * np.roll(x, j - center)
    return out
