"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--samples 18000]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pmuguard import kernels


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(n: int, omega: int, tau: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    z = np.exp(2j * np.pi * 2.4 * t / 30.0) + 1e-3 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    z[n // 2:] += np.cumsum(np.full(n - n // 2, 1e-3))
    re, im = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    win = (np.ascontiguousarray(re[:omega]), np.ascontiguousarray(im[:omega]))

    def centers(b):
        return b.sliding_centers(re, im, omega)

    cx, cy, ok = kernels.python_backend.sliding_centers(re, im, omega)

    def scan(b):
        return b.scan_detector(cx, cy, ok, omega, tau, 0.0, 0.0, 0.05)

    n_cls, lam = 12, 10
    vec = rng.standard_normal((n_cls * lam, tau))
    pen = np.zeros((n_cls, lam))
    q = rng.standard_normal(tau)

    def similarity(b):
        for _ in range(1000):
            b.class_min_similarity(vec, pen, n_cls, q)

    def single(b):
        for _ in range(1000):
            b.fit_window(*win)

    return {
        "fit_window x1000": single,
        f"sliding_centers n={n}": centers,
        f"scan_detector n={n}": scan,
        "class_min_similarity x1000": similarity,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=18000)
    ap.add_argument("--omega", type=int, default=10)
    ap.add_argument("--tau", type=int, default=10)
    args = ap.parse_args(argv)
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the python backend only")
    print(f"{'kernel':32s}" + "".join(f"{name:>12s}" for name, _ in backends) + f"{'speedup':>10s}")
    for label, fn in workloads(args.samples, args.omega, args.tau).items():
        ts = [best_of(lambda b=b: fn(b), args.repeat) for _, b in backends]
        speed = f"{ts[0] / ts[1]:9.1f}x" if len(ts) == 2 else ""
        print(f"{label:32s}" + "".join(f"{t * 1e3:10.2f}ms" for t in ts) + speed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
