"""Compare the jit and numpy builds of the hot kernels.

Run with PAR_NUMBA=1 (default); the numpy reference path is always
available as the module-private fallbacks, so one process can time both.

    python3 benchmarks/bench_kernels.py --size 224 --channels 3 --patch 56
"""

import argparse
import time

import numpy as np

from par import kernels


def bench(fn, *args, repeat=200, warmup=3):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=224)
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--patch", type=int, default=56)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    noise = rng.normal(0, 16, size=(args.size, args.size, args.channels))
    grid_rows = -(-args.size // args.patch)
    weights = rng.uniform(0, 1, size=(grid_rows, grid_rows))

    print("image %dx%dx%d, patch %d, %d reps; numba active: %s"
          % (args.size, args.size, args.channels, args.patch, args.repeat,
             kernels.NUMBA_ACTIVE))

    t_np = bench(kernels._patch_l2_norms_np, noise, args.patch,
                 repeat=args.repeat)
    row = "patch_l2_norms        numpy %8.1f us" % (t_np * 1e6)
    if kernels.NUMBA_ACTIVE:
        t_jit = bench(kernels._patch_l2_norms_jit, noise, args.patch,
                      repeat=args.repeat)
        row += "   numba %8.1f us   speedup %5.1fx" % (t_jit * 1e6, t_np / t_jit)
    print(row)

    t_np = bench(kernels._region_weighted_energy_np, noise, args.patch,
                 weights, repeat=args.repeat)
    row = "region_weighted_energy numpy %7.1f us" % (t_np * 1e6)
    if kernels.NUMBA_ACTIVE:
        t_jit = bench(kernels._region_weighted_energy_jit, noise, args.patch,
                      weights, repeat=args.repeat)
        row += "   numba %8.1f us   speedup %5.1fx" % (t_jit * 1e6, t_np / t_jit)
    print(row)


if __name__ == "__main__":
    main()
