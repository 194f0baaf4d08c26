"""Backend selection for the cyclic FIR kernels.

The compiled extension is used when it was built; set ``CVMDI_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("CVMDI_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]


def _c(x):
    return np.ascontiguousarray(x, dtype=np.complex128)


def _r(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def upsample_filter(symbols, taps, sps, backend=None):
    """Zero-stuff ``symbols`` by ``sps`` and circularly filter with centered ``taps``."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.upsample_filter(_c(symbols), _r(taps), int(sps))


def filter_decimate(x, taps, offset, sps, n_out, backend=None):
    """Centered circular filter of ``x`` evaluated only at ``offset + k*sps``."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.filter_decimate(_c(x), _r(taps), int(offset), int(sps), int(n_out))


def fir_cyclic(x, taps, center, backend=None):
    impl = BACKENDS[backend] if backend else _impl
    return impl.fir_cyclic(_c(x), _r(taps), int(center))
