"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call for both
backends and the speed-up.  Both backends get identical inputs.
"""
import argparse
import timeit

import numpy as np

from fslris import kernels


def cases(rng):
    snr = 10.0 ** rng.uniform(-3, 3, 64)
    snr_targets = np.log2(1 + snr) * rng.uniform(0.05, 0.95, 64)
    users = 32
    a = 10.0 ** rng.uniform(-3, 3, users)
    t = rng.uniform(0, 0.5, users)
    z = rng.uniform(1e4, 1e5, users)
    direct = complex(rng.normal(), rng.normal())
    cascade = rng.normal(size=3) + 1j * rng.normal(size=3)

    def inversion(k):
        return lambda: [k.bandwidth_for_rate(s, x) for s, x in zip(snr, snr_targets)]

    def latency(k):
        out = np.empty(users)
        return lambda: k.min_max_latency(a, t, z, 1e6, 1e-12, out)

    def grid(k):
        idx = np.empty(3, dtype=np.int64)
        return lambda: k.phase_grid_search(direct, cascade, 16, idx)

    return [("rate inversion x64", inversion), (f"min-max latency, {users} users", latency),
            ("phase grid, 3 elements x 16 levels", grid)]


def best(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    py = kernels.load_backend("python")
    try:
        cy = kernels.load_backend("compiled")
    except ImportError:
        print("compiled kernels are not built; only the Python backend is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'python':>12s} {'compiled':>12s} {'speed-up':>9s}")
    for name, make in cases(rng):
        tp, tc = best(make(py), args.repeat), best(make(cy), args.repeat)
        print(f"{name:38s} {tp * 1e6:10.1f}us {tc * 1e6:10.1f}us {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
