"""Benchmark the batch simulation kernels: numba vs pure numpy.

Times the replica-vectorized Euler stepping (the hot loop behind every
Monte Carlo experiment) on built-in models, excluding noise generation,
which is identical for both backends.  Run:

    python3 benchmarks/bench_backends.py [--replicas 20000] [--n 1024]
"""

import argparse
import time

import numpy as np

from sdeldp import fields
from sdeldp import _kernels_numpy
from sdeldp.backends import jit_kernels
from sdeldp.simulate import _noise_block


def time_backend(field, eps, x0, dW, ts, dts, backend, repeats=3):
    M = dW.shape[0]
    terminal = np.empty((M, field.d))
    sup_norm = np.empty(M)
    diverged = np.empty(M, dtype=bool)
    if backend == "numba":
        from sdeldp import _kernels_numba
        drift, diff, params = jit_kernels(field)
        # warm the JIT before timing
        _kernels_numba.em_batch(drift, diff, params, x0, dW[:2], ts, dts,
                                np.sqrt(eps), terminal[:2], sup_norm[:2], diverged[:2])
        run = lambda: _kernels_numba.em_batch(drift, diff, params, x0, dW, ts, dts,
                                              np.sqrt(eps), terminal, sup_norm, diverged)
    else:
        run = lambda: _kernels_numpy.em_batch(field, eps, x0, dW, ts, dts,
                                              terminal, sup_norm, diverged)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - t0)
    return best, terminal


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=20000)
    ap.add_argument("--n", type=int, default=1024)
    args = ap.parse_args()

    cases = [
        (fields.ornstein_uhlenbeck(-1.0), 0.04, np.array([1.0])),
        (fields.cubic(), 0.04, np.array([0.5])),
        (fields.rotational(1.0), 0.1, np.array([1.0, 0.0])),
    ]
    print(f"replicas={args.replicas} n={args.n}")
    print(f"{'model':<16} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}  max|diff|")
    for field, eps, x0 in cases:
        ts = np.linspace(0.0, 1.0, args.n + 1)
        dts = np.diff(ts)
        dW = _noise_block(args.n, field.m, 12345, 0, args.replicas)
        t_np, term_np = time_backend(field, eps, x0, dW, ts, dts, "numpy")
        t_nb, term_nb = time_backend(field, eps, x0, dW, ts, dts, "numba")
        dmax = float(np.nanmax(np.abs(term_np - term_nb)))
        print(f"{field.label:<16} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>7.1f}x  {dmax:.2e}")


if __name__ == "__main__":
    main()
