"""Throughput of the recursive minimum sampler against the brute-force walk.

Run with ``python3 benchmarks/bench_sampler.py``; not collected by pytest.
"""

import argparse
import math
import time

from spotvol.market import NoiseConfig
from spotvol.psi import sample_min_bruteforce, sample_min_dp


def throughput(sampler, nh, size, repeats):
    sampler(0.01, 23_400, nh, NoiseConfig(), "M1", seed=0, size=100)  # jit warm-up
    best = math.inf
    for r in range(repeats):
        t = time.perf_counter()
        sampler(0.01, 23_400, nh, NoiseConfig(), "M1", seed=r, size=size)
        best = min(best, time.perf_counter() - t)
    return size / best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nh", type=int, nargs="+", default=[15, 78, 234])
    ap.add_argument("--size", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"{'nh':>5} {'dp draws/s':>14} {'brute draws/s':>14} {'ratio':>7}")
    for nh in args.nh:
        dp = throughput(sample_min_dp, nh, args.size, args.repeats)
        bf = throughput(sample_min_bruteforce, nh, args.size, args.repeats)
        print(f"{nh:>5} {dp:>14.0f} {bf:>14.0f} {dp / bf:>7.2f}")


if __name__ == "__main__":
    main()
