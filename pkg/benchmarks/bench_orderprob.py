"""Compare the compiled and pure-numpy rank-count kernels.

Usage: python3 benchmarks/bench_orderprob.py [--N 500] [--R 100000] [--repeats 3]

Times the kernels directly on the same draws, checks that their counts are
identical, and then times ``mc_order_probs`` end to end in a subprocess per
backend (the backend is fixed at import via ``HRSAE_BACKEND``).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from hrsae import _kernels

END_TO_END = """
import time, numpy as np
from hrsae import _kernels
from hrsae.orderprob import EtaModel, mc_order_probs
N, R = {N}, {R}
z = np.linspace(0, 5, N)
eta = EtaModel(0.0, 1.0, np.full(N, 1.0))
mc_order_probs(EtaModel(0.0, 1.0, np.ones(10)), z[:10], 100, 0)  # warm-up / compile
t = time.perf_counter()
mc_order_probs(eta, z, R, 1)
print(_kernels.BACKEND, time.perf_counter() - t)
"""


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=500)
    ap.add_argument("--R", type=int, default=100_000)
    ap.add_argument("--block", type=int, default=2000, help="replications per kernel call")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    values = rng.normal(size=(args.block, args.N))
    calls = max(1, args.R // args.block)
    print(f"kernel timing: N={args.N}, {calls} calls x {args.block} replications")

    kernels = {"numpy": _kernels.rank_count_numpy}
    if _kernels.HAVE_NUMBA:
        kernels["numba"] = _kernels.rank_count_numba
        _kernels.rank_count_numba(values[:2], np.zeros((args.N, args.N), np.int64))

    results = {}
    for name, kernel in kernels.items():
        counts = np.zeros((args.N, args.N), np.int64)

        def run():
            counts[:] = 0
            for _ in range(calls):
                kernel(values, counts)

        results[name] = (best_of(run, args.repeats), counts.copy())
        print(f"  {name:6s} {results[name][0]:8.3f} s")
    if len(results) == 2:
        same = np.array_equal(results["numpy"][1], results["numba"][1])
        print(f"  counts identical: {same}; speedup {results['numpy'][0] / results['numba'][0]:.2f}x")

    print(f"end-to-end mc_order_probs: N={args.N}, R={args.R}")
    for backend in kernels:
        env = dict(os.environ, HRSAE_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", END_TO_END.format(N=args.N, R=args.R)],
                             env=env, capture_output=True, text=True, check=True)
        name, secs = out.stdout.split()
        print(f"  {name:6s} {float(secs):8.3f} s")


if __name__ == "__main__":
    main()
