"""Throughput of the compiled negative-sampling kernel against the numpy fallback.

    python3 benchmarks/bench_sgns.py --pairs 200000 --dim 20

Both kernels get identical weights, pairs and negatives; the script checks
that they agree before reporting timings.
"""

import argparse
import time

import numpy as np

from flowgan.ip2vec import kernels


def workload(n_pairs, vocab, dim, k, seed):
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, (vocab, dim))
    w_out = np.zeros((vocab, dim))
    inputs = rng.integers(0, vocab, n_pairs)
    outputs = rng.integers(0, vocab, n_pairs)
    negs = rng.integers(0, vocab, (n_pairs, k))
    lrs = np.linspace(0.025, 2.5e-6, n_pairs)
    return w_in, w_out, inputs, outputs, negs, lrs


def run(kernel, data, repeats):
    best, result = float("inf"), None
    for _ in range(repeats):
        w_in, w_out, *rest = data
        a, b = w_in.copy(), w_out.copy()
        t = time.perf_counter()
        loss = kernel(a, b, *rest)
        best = min(best, time.perf_counter() - t)
        result = (loss, a, b)
    return best, result


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pairs", type=int, default=200_000)
    p.add_argument("--vocab", type=int, default=50_000)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    data = workload(args.pairs, args.vocab, args.dim, args.negatives, args.seed)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    results = {b: run(kernels.get_kernel(b), data, args.repeats) for b in backends}

    print(f"{args.pairs} pairs, |V|={args.vocab}, m={args.dim}, k={args.negatives}, "
          f"best of {args.repeats}")
    print(f"{'backend':<8} {'seconds':>9} {'pairs/s':>12}")
    for b, (secs, _) in results.items():
        print(f"{b:<8} {secs:>9.3f} {args.pairs / secs:>12,.0f}")
    if "cython" not in results:
        print("compiled kernel not built; only the fallback was timed")
        return
    (tp, (lp, ap, bp)), (tc, (lc, ac, bc)) = results["python"], results["cython"]
    diff = max(np.abs(ap - ac).max(), np.abs(bp - bc).max())
    print(f"speedup  {tp / tc:.1f}x; max weight difference {diff:.2e}, "
          f"loss {lp:.6f} vs {lc:.6f}")


if __name__ == "__main__":
    main()
