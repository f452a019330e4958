"""Compare the compiled and numpy kernel backends.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Prints the best
per-call time of each backend and the speedup, on the workloads that
dominate the heuristics and the environment step: a 50,000-slot channel scan
and a 2,500-instance batched rate evaluation.
"""

import argparse
import timeit

import numpy as np

from fluidbia import _kernels_py
from fluidbia.channel import CsiErrorModel, DEFAULT_ERROR_COV, draw_csi_errors, sample_geometry, wavelength_for

try:
    from fluidbia import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def workloads(rng):
    g = sample_geometry(4, 4, wavelength_for(60e9), rng)
    slots = rng.uniform(2.75, 3.25, size=(50_000, 3))
    pairs = rng.uniform(2.75, 3.25, size=(5_000, 3))
    h = _kernels_py.channel_gains(g.rx_dirs, g.prm_frm, pairs, g.wavenumber).reshape(2500, 2, 2)
    delta = draw_csi_errors(CsiErrorModel(DEFAULT_ERROR_COV, 1.0), rng, (2500, 2))
    est = np.ascontiguousarray(h - delta)
    return {
        "channel_gains 50k slots": lambda m: m.channel_gains(g.rx_dirs, g.prm_frm, slots, g.wavenumber),
        "channel_gains 2500 pairs": lambda m: m.channel_gains(g.rx_dirs, g.prm_frm, pairs, g.wavenumber),
        "bia_rates 2500": lambda m: m.bia_rates(est, delta, 0.25, 1e-9, 4, False),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        n = 5
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=n, repeat=args.repeat)) / n
        if _kernels_c is None:
            print(f"{name:<26s} {t_py * 1e3:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=n, repeat=args.repeat)) / n
        print(f"{name:<26s} {t_py * 1e3:10.3f} {t_c * 1e3:10.3f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
