"""Time the compiled and pure-Python kernels on the network sizes used in the experiments.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Prints, per (sizes, batch), the median wall time of one loss-and-gradient
evaluation and one forward pass for every available backend, and the largest
difference between the backends' gradients.
"""
import argparse
import statistics
import time

import numpy as np

from cann import kernels
from cann.network import init_params

CASES = [((5, 10, 1), 1024), ((5, 10, 1), 4096), ((9, 15, 1), 4096),
         ((27, 10, 1), 4096), ((27, 10, 1), 32768), ((81, 10, 1), 4096)]


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=30)
    args = ap.parse_args()
    backends = kernels.backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'sizes':<12} {'batch':>6} {'backend':<9} {'loss+grad ms':>13} {'forward ms':>11}")
    rng = np.random.default_rng(0)
    for sizes, n in CASES:
        p = init_params(sizes, 0)
        p.theta[:] = rng.normal(scale=0.3, size=p.n_params)
        X = rng.normal(size=(n, sizes[0]))
        c = X[:, sizes[0] // 2].copy()
        y = c + 0.01 * rng.normal(size=n)
        grads = {}
        for name, mod in backends.items():
            g = np.zeros(p.n_params)
            lg = median_time(lambda: mod.loss_grad(p.theta, sizes, X, c, y, 1e-3, g), args.repeat)
            fw = median_time(lambda: mod.forward_batch(p.theta, sizes, X), args.repeat)
            grads[name] = g.copy()
            print(f"{str(sizes):<12} {n:>6} {name:<9} {1e3 * lg:13.3f} {1e3 * fw:11.3f}")
        if len(grads) == 2:
            a, b = grads.values()
            print(f"{'':<12} {'':>6} max gradient difference {np.abs(a - b).max():.2e}")


if __name__ == "__main__":
    main()
