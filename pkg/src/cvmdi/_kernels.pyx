# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cyclic FIR kernels. Signatures mirror ``_kernels_py``."""

import numpy as np

cimport cython


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) nogil:
    i = i % n
    if i < 0:
        i += n
    return i


def upsample_filter(const double complex[::1] symbols, const double[::1] taps, Py_ssize_t sps):
    cdef Py_ssize_t n_sym = symbols.shape[0]
    cdef Py_ssize_t m = taps.shape[0]
    cdef Py_ssize_t length = n_sym * sps
    cdef Py_ssize_t center = (m - 1) // 2
    out = np.zeros(length, dtype=np.complex128)
    cdef double[::1] y = out.view(np.float64)
    cdef Py_ssize_t k, j, idx
    cdef double sr, si, h
    with nogil:
        for k in range(n_sym):
            sr = symbols[k].real
            si = symbols[k].imag
            if sr == 0.0 and si == 0.0:
                continue
            idx = _wrap(k * sps - center, length)
            for j in range(m):
                h = taps[j]
                y[2 * idx] += sr * h
                y[2 * idx + 1] += si * h
                idx += 1
                if idx == length:
                    idx = 0
    return out


def filter_decimate(const double complex[::1] x, const double[::1] taps,
                    Py_ssize_t offset, Py_ssize_t sps, Py_ssize_t n_out):
    cdef Py_ssize_t length = x.shape[0]
    cdef Py_ssize_t m = taps.shape[0]
    cdef Py_ssize_t center = (m - 1) // 2
    out = np.empty(n_out, dtype=np.complex128)
    cdef double complex[::1] y = out
    cdef Py_ssize_t k, j, idx
    cdef double accr, acci, h
    with nogil:
        for k in range(n_out):
            idx = _wrap(offset + k * sps + center, length)
            accr = 0.0
            acci = 0.0
            for j in range(m):
                h = taps[j]
                accr = accr + h * x[idx].real
                acci = acci + h * x[idx].imag
                idx -= 1
                if idx < 0:
                    idx = length - 1
            y[k] = accr + 1j * acci
    return out


def fir_cyclic(const double complex[::1] x, const double[::1] taps, Py_ssize_t center):
    cdef Py_ssize_t length = x.shape[0]
    cdef Py_ssize_t m = taps.shape[0]
    out = np.empty(length, dtype=np.complex128)
    cdef double complex[::1] y = out
    cdef Py_ssize_t n, j, idx
    cdef double accr, acci, h
    with nogil:
        for n in range(length):
            idx = _wrap(n + center, length)
            accr = 0.0
            acci = 0.0
            for j in range(m):
                h = taps[j]
                accr = accr + h * x[idx].real
                acci = acci + h * x[idx].imag
                idx -= 1
                if idx < 0:
                    idx = length - 1
            y[n] = accr + 1j * acci
    return out
