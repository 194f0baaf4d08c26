"""Compare the compiled cyclic-FIR kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--symbols N] [--sps S] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from cvmdi import kernels
from cvmdi.recovery import _lowpass_taps
from cvmdi.channel import fractional_delay_taps
from cvmdi.transmitter import design_rrc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--symbols", type=int, default=20_000)
    ap.add_argument("--sps", type=int, default=16)
    ap.add_argument("--span", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    n, sps = args.symbols, args.sps
    sym = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    taps = design_rrc(0.2, args.span, sps)
    x = kernels.upsample_filter(sym, taps, sps)
    frac = fractional_delay_taps(0.37)
    cases = {
        "upsample_filter": lambda b: kernels.upsample_filter(sym, taps, sps, backend=b),
        "filter_decimate": lambda b: kernels.filter_decimate(x, taps, 37, sps, n, backend=b),
        "fir_cyclic(8 taps)": lambda b: kernels.fir_cyclic(x, frac, 3, backend=b),
    }
    lp = _lowpass_taps(5e6 * sps, 5e6, 0.2)
    cases[f"fir_cyclic({len(lp)} taps)"] = lambda b: kernels.fir_cyclic(x, lp, (len(lp) - 1) // 2, backend=b)

    backends = sorted(kernels.BACKENDS)
    print(f"frame: {n} symbols x {sps} sps = {n * sps} samples; RRC {len(taps)} taps; "
          f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + ("      speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times = {}
        for b in backends:
            fn(b)
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        ref = fn("python")
        for b in backends:
            assert np.allclose(fn(b), ref, atol=1e-9), f"{name}: backend {b} disagrees"
        row = f"{name:<22}" + "".join(f"{times[b] * 1e3:>11.2f} ms" for b in backends)
        if len(backends) > 1:
            row += f"{times['python'] / times['compiled']:>12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
