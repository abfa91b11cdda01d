"""Time the compiled and pure-Python kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cvqkd_lab import kernels
from cvqkd_lab.optimizer import added_noise_grid


def _workloads(rng):
    V = 40.0
    Ts = 10 ** (-rng.uniform(0, 25, 2000) / 10)
    epss = rng.uniform(0, 0.5, 2000)
    chis = rng.uniform(0, 10, 2000)
    grid = added_noise_grid()

    def rates(k):
        for T, e, c in zip(Ts, epss, chis):
            k.rate_noisy(V, T, e, c, 1.0)
            k.rate_homodyne(V, T, e, 1.0)

    def optimize(k):
        for T, e in zip(Ts[:200], epss[:200]):
            k.best_added_noise(V, T, e, 1.0, grid, 1e-6)

    return {"2000 rate pairs": rates, "200 added-noise optimizations": optimize}


def _best_time(fn, backend, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = {"python": kernels.load_backend("python")}
    try:
        backends["cython"] = kernels.load_backend("cython")
    except ImportError:
        print("compiled extension not built; timing the Python kernels only")

    for name, fn in _workloads(np.random.default_rng(0)).items():
        times = {b: _best_time(fn, mod, args.repeat) for b, mod in backends.items()}
        line = ", ".join(f"{b} {t * 1e3:8.2f} ms" for b, t in times.items())
        if "cython" in times:
            line += f", speedup {times['python'] / times['cython']:.1f}x"
        print(f"{name:32s} {line}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
