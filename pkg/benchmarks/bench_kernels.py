"""Time the numba and numpy routes of the class-center kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Each size is timed after one warm-up call, so numba compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from fedlf import kernels

SIZES = [(32, 10, 32), (256, 10, 64), (32, 100, 32), (1024, 100, 128)]   # (B, C, d)


def bench(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=5, repeat=repeat)) / 5


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'B':>5s} {'C':>4s} {'d':>4s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for b, c, d in SIZES:
        h = rng.normal(size=(b, d))
        centers = rng.normal(size=(c, d))
        labels = rng.integers(0, c, size=b)
        present = np.ones(c, dtype=np.bool_)
        cases = [
            ("center_loss", kernels.center_loss_numpy, kernels.center_loss_numba,
             (h, labels, centers, present, 0.5)),
            ("max_pairwise_distance", kernels.max_pairwise_distance_numpy,
             kernels.max_pairwise_distance_numba, (centers, present)),
        ]
        for name, np_fn, nb_fn, fargs in cases:
            t_np = bench(np_fn, fargs, args.repeat)
            t_nb = bench(nb_fn, fargs, args.repeat)
            print(f"{name:22s} {b:5d} {c:4d} {d:4d} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} "
                  f"{t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
